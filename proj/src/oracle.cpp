#include "bwdq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bwdq/errors.hpp"

namespace bwdq {

Json BcConfig::to_json() const {
  return {{"steps", steps},
          {"batch_size", batch_size},
          {"hidden_dim", hidden_dim},
          {"learning_rate", learning_rate}};
}

IqlConfig OracleConfig::default_oracle_iql() {
  IqlConfig c;
  c.total_steps = 10000;
  c.eval_every = c.total_steps;
  return c;
}

Json OracleConfig::to_json() const {
  return {{"bc", bc.to_json()},
          {"iql", iql.to_json()},
          {"eval_episodes", eval_episodes},
          {"reference_episodes", reference_episodes}};
}

Json OracleScore::to_json() const {
  return {{"score", score},
          {"agents", agents},
          {"normalized", normalized},
          {"random_return", reference.random_return},
          {"expert_return", reference.expert_return}};
}

OracleScore OracleScore::from_json(const Json& j) {
  OracleScore s;
  try {
    s.score = j.at("score").get<double>();
    s.agents = j.at("agents").get<std::vector<std::string>>();
    s.normalized = j.at("normalized").get<std::vector<double>>();
    s.reference.random_return = j.at("random_return").get<double>();
    s.reference.expert_return = j.at("expert_return").get<double>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed oracle score: ") + e.what(), 0);
  }
  return s;
}

IqlAgent train_bc(const Dataset& dataset, const BcConfig& config, std::uint64_t seed, Rng& rng) {
  if (dataset.empty()) throw InvalidArgument("cannot clone an empty dataset");
  if (config.steps < 0 || config.batch_size < 1 || config.hidden_dim < 1) {
    throw InvalidArgument("invalid behaviour-cloning configuration");
  }
  IqlConfig shape;
  shape.hidden_dim = config.hidden_dim;
  IqlAgent agent = init_iql_agent(dataset.obs_dim, dataset.act_dim, Standardizer::fit(dataset), shape,
                                  dataset.discount, seed);
  const DatasetArrays arr = to_arrays(dataset);
  OptimState opt = OptimState::for_size(agent.actor.num_params(), config.learning_rate);
  ForwardCache cache;
  Gradients grads;
  for (int step = 0; step < config.steps; ++step) {
    const auto rows = sample_indices(arr.size(), static_cast<std::size_t>(config.batch_size), rng);
    const Matrix z = agent.standardizer.apply(gather_rows(arr.states, rows));
    const Matrix target = gather_rows(arr.actions, rows);
    const Matrix act = forward_cached(agent.actor, z, cache).array().tanh();
    const Matrix diff = act - target;
    const double loss = diff.squaredNorm() / static_cast<double>(rows.size());
    if (!std::isfinite(loss)) throw NumericError("behaviour-cloning loss is not finite at step " + std::to_string(step));
    const Matrix up = (2.0 / static_cast<double>(rows.size())) * diff.array() * (1.0 - act.array().square());
    backward_into(agent.actor, cache, up, grads);
    optim_step(agent.actor, grads, opt);
  }
  return agent;
}

OracleScore oracle_score(const Dataset& dataset, const Env& env, const OracleConfig& config, Rng& rng) {
  if (dataset.obs_dim != env.obs_dim() || dataset.act_dim != env.act_dim()) {
    throw InvalidArgument("dataset and environment dimensions differ");
  }
  if (config.eval_episodes < 1 || config.reference_episodes < 1) {
    throw InvalidArgument("oracle needs at least one evaluation episode");
  }
  const std::uint64_t base = rng();
  Rng ref_rng(derive_seed(base, 1));
  Rng bc_rng(derive_seed(base, 2));
  Rng iql_rng(derive_seed(base, 3));
  Rng eval_rng(derive_seed(base, 4));

  OracleScore out;
  out.reference = reference_returns(env, config.reference_episodes, ref_rng);

  const IqlAgent bc = train_bc(dataset, config.bc, derive_seed(base, 5), bc_rng);
  out.agents.push_back("bc");
  out.normalized.push_back(out.reference.normalize(evaluate_actor(bc, env, config.eval_episodes, eval_rng)));

  IqlConfig iql = config.iql;
  // learning curve is not needed here; only the final evaluation counts
  iql.eval_every = std::max(1, iql.total_steps);
  iql.eval_episodes = 1;
  iql.reference_episodes = 1;
  const IqlRun run = train_iql(dataset, env, std::nullopt, iql, iql_rng);
  out.agents.push_back("iql");
  out.normalized.push_back(out.reference.normalize(evaluate_actor(run.agent, env, config.eval_episodes, eval_rng)));

  out.score = std::accumulate(out.normalized.begin(), out.normalized.end(), 0.0) /
              static_cast<double>(out.normalized.size());
  return out;
}

}  // namespace bwdq

#include "bwdq/iql.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bwdq/errors.hpp"

namespace bwdq {

namespace {

void validate_config(const IqlConfig& c) {
  if (c.total_steps < 0 || c.batch_size < 1 || c.hidden_dim < 1 || c.eval_every < 1 ||
      c.eval_episodes < 1 || c.reference_episodes < 1) {
    throw InvalidArgument("invalid IQL configuration");
  }
  if (!(c.expectile > 0.0 && c.expectile < 1.0)) throw InvalidArgument("expectile must lie in (0, 1)");
  if (!(c.awr_temperature > 0.0)) throw InvalidArgument("awr_temperature must be positive");
  if (!(c.max_weight > 0.0)) throw InvalidArgument("max_weight must be positive");
  if (c.discount && !(*c.discount >= 0.0 && *c.discount < 1.0)) {
    throw InvalidArgument("discount must lie in [0, 1)");
  }
}

Matrix concat(const Matrix& a, const Matrix& b) {
  Matrix x(a.rows(), a.cols() + b.cols());
  x << a, b;
  return x;
}

void check_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) throw NumericError(std::string(what) + " loss is not finite");
}

}  // namespace

Json IqlConfig::to_json() const {
  Json j = {{"total_steps", total_steps},
            {"batch_size", batch_size},
            {"hidden_dim", hidden_dim},
            {"learning_rate", learning_rate},
            {"expectile", expectile},
            {"awr_temperature", awr_temperature},
            {"max_weight", max_weight},
            {"polyak", polyak},
            {"eval_every", eval_every},
            {"eval_episodes", eval_episodes},
            {"reference_episodes", reference_episodes}};
  j["discount"] = discount ? Json(*discount) : Json(nullptr);
  return j;
}

Json RegConfig::to_json() const {
  return {{"lambda_bwd", lambda_bwd},
          {"bwd", bwd.to_json()},
          {"potential_update_steps_per_actor_step", potential_update_steps_per_actor_step},
          {"critic", critic.to_json()},
          {"random_std", random_std}};
}

IqlAgent init_iql_agent(int obs_dim, int act_dim, const Standardizer& standardizer,
                        const IqlConfig& config, double discount, std::uint64_t seed) {
  IqlAgent a;
  a.q_net = init_network(obs_dim + act_dim, config.hidden_dim, 1, derive_seed(seed, 1));
  a.q_target = a.q_net;
  a.v_net = init_network(obs_dim, config.hidden_dim, 1, derive_seed(seed, 2));
  a.actor = init_network(obs_dim, config.hidden_dim, act_dim, derive_seed(seed, 3));
  a.standardizer = standardizer;
  a.expectile = config.expectile;
  a.awr_temperature = config.awr_temperature;
  a.max_weight = config.max_weight;
  a.discount = discount;
  a.polyak = config.polyak;
  return a;
}

Matrix actor_actions(const IqlAgent& agent, const Matrix& states) {
  return forward(agent.actor, agent.standardizer.apply(states)).array().tanh();
}

double expectile_loss(const Vector& u, double tau) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    total += std::abs(tau - (u(i) < 0.0 ? 1.0 : 0.0)) * u(i) * u(i);
  }
  return total / static_cast<double>(u.size());
}

Vector awr_weights(const Vector& advantage, double temperature, double max_weight) {
  return (advantage.array() / temperature).exp().min(max_weight);
}

IqlLearner make_learner(IqlAgent agent, double learning_rate) {
  IqlLearner l;
  l.q_opt = OptimState::for_size(agent.q_net.num_params(), learning_rate);
  l.v_opt = OptimState::for_size(agent.v_net.num_params(), learning_rate);
  l.actor_opt = OptimState::for_size(agent.actor.num_params(), learning_rate);
  l.agent = std::move(agent);
  return l;
}

IqlBatch sample_iql_batch(const DatasetArrays& data, int batch_size, Rng& rng) {
  const auto rows = sample_indices(data.size(), static_cast<std::size_t>(batch_size), rng);
  return {gather_rows(data.states, rows), gather_rows(data.actions, rows),
          gather_rows(data.rewards, rows), gather_rows(data.next_states, rows),
          gather_rows(data.terminal, rows)};
}

IqlLosses iql_step(IqlLearner& l, const IqlBatch& batch, const Gradients* extra_actor_grad) {
  IqlAgent& a = l.agent;
  const Eigen::Index n = batch.states.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix z = a.standardizer.apply(batch.states);
  const Matrix xq = concat(z, batch.actions);
  IqlLosses losses;

  // value: expectile regression toward the target critic
  const Vector target_q = forward(a.q_target, xq).col(0);
  const Vector v = forward_cached(a.v_net, z, l.v_cache).col(0);
  const Vector u = target_q - v;
  losses.value = expectile_loss(u, a.expectile);
  check_finite(losses.value, "value");
  Matrix up(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    up(i, 0) = -2.0 * std::abs(a.expectile - (u(i) < 0.0 ? 1.0 : 0.0)) * u(i) * inv_n;
  }
  backward_into(a.v_net, l.v_cache, up, l.grads);
  optim_step(a.v_net, l.grads, l.v_opt);

  // critic: TD toward r + gamma * (1 - terminal) * V(s')
  const Vector next_v = forward(a.v_net, a.standardizer.apply(batch.next_states)).col(0);
  const Vector y = batch.rewards.array() +
                   a.discount * (1.0 - batch.terminal.array()) * next_v.array();
  const Vector q = forward_cached(a.q_net, xq, l.q_cache).col(0);
  losses.q = (q - y).squaredNorm() * inv_n;
  check_finite(losses.q, "critic");
  up = 2.0 * inv_n * (q - y);
  backward_into(a.q_net, l.q_cache, up, l.grads);
  optim_step(a.q_net, l.grads, l.q_opt);

  // actor: advantage-weighted regression onto the dataset actions
  const Vector w = awr_weights(u, a.awr_temperature, a.max_weight);
  const Matrix act = forward_cached(a.actor, z, l.actor_cache).array().tanh();
  const Matrix diff = act - batch.actions;
  losses.actor = (diff.rowwise().squaredNorm().array() * w.array()).sum() * inv_n;
  check_finite(losses.actor, "actor");
  Matrix up_actor = diff.array() * (1.0 - act.array().square());
  up_actor.array().colwise() *= 2.0 * inv_n * w.array();
  backward_into(a.actor, l.actor_cache, up_actor, l.actor_grads);
  if (extra_actor_grad != nullptr) l.actor_grads.flat += extra_actor_grad->flat;
  optim_step(a.actor, l.actor_grads, l.actor_opt);

  polyak_update(a.q_target, a.q_net, a.polyak);
  return losses;
}

RegTerm bwd_reg_term(const IqlAgent& agent, const PotentialPair& p, const Critic& critic,
                     const Matrix& states, const RandomPolicy& policy, int k, Rng& rng) {
  if (critic.act_dim() != agent.act_dim() || critic.obs_dim() != agent.obs_dim()) {
    throw InvalidArgument("critic and agent dimensions differ");
  }
  ForwardCache actor_cache;
  const Matrix act = forward_cached(agent.actor, agent.standardizer.apply(states), actor_cache)
                         .array()
                         .tanh();
  RegTerm out;
  out.batch = make_pair_batch(critic, states, act, policy, k, rng);
  const PairBatch& batch = out.batch;
  const PotentialInputs in = potential_inputs(p, batch);
  ForwardCache g_cache, f_cache;
  const Vector g = forward_cached(p.g_net, in.g_input, g_cache).col(0);
  const Matrix& f_flat = forward_cached(p.f_net, in.f_input, f_cache);
  const Matrix f = Eigen::Map<const Matrix>(f_flat.data(), k, batch.size()).transpose();
  const DualValues dv = dual_objective_values(g, f, pair_costs(batch, p.cost_scale), p.epsilon);
  check_exponent_guard(dv.clipped, batch.size() * k, dv.max_exponent);
  out.value = dv.value;
  out.clipped = dv.clipped;

  const Matrix d_f = dv.d_f.transpose().reshaped(batch.size() * k, 1);
  backward_into(p.f_net, f_cache, d_f, out.f_grad);

  // d/da_i through g's action input and through the distance term of every cost
  Matrix g_input_grad;
  backward_into(p.g_net, g_cache, Matrix(dv.d_g), out.g_grad, &g_input_grad);
  const Eigen::Index na = act.cols();
  Matrix d_act = g_input_grad.rightCols(na);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    for (int j = 0; j < k; ++j) {
      const Eigen::Index r = i * k + j;
      d_act.row(i) += dv.d_cost(i, j) * p.cost_scale * 2.0 *
                      (batch.random_actions.row(r) - act.row(i));
    }
  }
  const Matrix d_pre = d_act.array() * (1.0 - act.array().square());
  backward_into(agent.actor, actor_cache, d_pre, out.actor_grad);
  return out;
}

double evaluate_actor(const IqlAgent& agent, const Env& env, int episodes, Rng& rng) {
  const Policy greedy = [&agent](const Vector& obs, Rng&) -> Vector {
    return actor_actions(agent, obs.transpose()).row(0).transpose();
  };
  return mean_return(env, greedy, episodes, rng);
}

IqlRun train_iql(const Dataset& dataset, const Env& env, const std::optional<RegConfig>& reg,
                 const IqlConfig& config, Rng& rng) {
  validate_config(config);
  if (dataset.empty()) throw InvalidArgument("cannot train IQL on an empty dataset");
  if (dataset.obs_dim != env.obs_dim() || dataset.act_dim != env.act_dim()) {
    throw InvalidArgument("dataset and environment dimensions differ");
  }
  if (reg) {
    if (!(reg->lambda_bwd >= 0.0)) throw InvalidArgument("lambda_bwd must be >= 0");
    if (reg->potential_update_steps_per_actor_step < 0) {
      throw InvalidArgument("potential_update_steps_per_actor_step must be >= 0");
    }
  }
  const std::uint64_t base = rng();
  Rng train_rng(derive_seed(base, 1));
  Rng eval_rng(derive_seed(base, 2));
  // the regularizer's own stream keeps the base trajectory unchanged
  Rng reg_rng(derive_seed(base, 3));
  Rng ref_rng(derive_seed(base, 5));

  IqlRun run;
  // a zero-weight regularizer leaves the actor untouched, so the run is plain IQL
  const bool regularized = reg && reg->lambda_bwd > 0.0;
  run.variant = regularized ? "iql_bwd" : "iql";
  Json hashed = {{"iql", config.to_json()}};
  hashed["reg"] = reg ? reg->to_json() : Json(nullptr);
  run.config_hash = config_hash(hashed);
  run.reference = reference_returns(env, config.reference_episodes, ref_rng);

  const double discount = config.discount.value_or(dataset.discount);
  IqlLearner learner = make_learner(
      init_iql_agent(dataset.obs_dim, dataset.act_dim, Standardizer::fit(dataset), config,
                     discount, derive_seed(base, 4)),
      config.learning_rate);
  const DatasetArrays arr = to_arrays(dataset);

  Critic critic;
  PotentialPair potentials;
  RandomPolicy policy{dataset.act_dim};
  OptimState g_opt, f_opt;
  if (reg) {
    critic = train_critic(dataset, reg->critic, reg_rng).critic;
    policy.std = reg->random_std;
    const double scale = reg->bwd.cost_scale
                             ? *reg->bwd.cost_scale
                             : auto_cost_scale(critic, dataset, policy, 1000, reg_rng);
    potentials = init_potentials(dataset.obs_dim, dataset.act_dim, reg->bwd, critic.standardizer,
                                 scale, reg_rng());
    g_opt = OptimState::for_size(potentials.g_net.num_params(), reg->bwd.learning_rate);
    f_opt = OptimState::for_size(potentials.f_net.num_params(), reg->bwd.learning_rate);
  }
  DualWorkspace ws;
  Gradients extra, ascent;

  for (int step = 1; step <= config.total_steps; ++step) {
    const IqlBatch batch = sample_iql_batch(arr, config.batch_size, train_rng);
    if (!reg) {
      iql_step(learner, batch);
    } else {
      const auto rows = sample_indices(arr.size(), static_cast<std::size_t>(reg->bwd.batch_size), reg_rng);
      RegTerm term;
      try {
        term = bwd_reg_term(learner.agent, potentials, critic, gather_rows(arr.states, rows), policy,
                            reg->bwd.k_negatives, reg_rng);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at IQL step " + std::to_string(step));
      }
      // the actor minimizes its loss, so the ascent direction enters negated
      extra.flat = -reg->lambda_bwd * term.actor_grad.flat;
      iql_step(learner, batch, reg->lambda_bwd == 0.0 ? nullptr : &extra);
      for (int u = 0; u < reg->potential_update_steps_per_actor_step; ++u) {
        if (u > 0) {
          const DualResult r = dual_objective(potentials, term.batch, ws);
          term.g_grad = r.g_grad;
          term.f_grad = r.f_grad;
        }
        ascent.flat = -term.g_grad.flat;
        optim_step(potentials.g_net, ascent, g_opt);
        ascent.flat = -term.f_grad.flat;
        optim_step(potentials.f_net, ascent, f_opt);
      }
    }
    if (step % config.eval_every == 0 || step == config.total_steps) {
      EvalPoint pt;
      pt.step = step;
      pt.mean_return = evaluate_actor(learner.agent, env, config.eval_episodes, eval_rng);
      pt.normalized_return = run.reference.normalize(pt.mean_return);
      run.curve.push_back(pt);
    }
  }
  run.agent = std::move(learner.agent);
  return run;
}

std::string curve_csv_header() { return "step,mean_return,normalized_return,seed,variant"; }

std::string curve_csv(const IqlRun& run, std::uint64_t seed) {
  std::ostringstream out;
  out << curve_csv_header() << '\n';
  char buf[128];
  for (const EvalPoint& p : run.curve) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,", p.step, p.mean_return, p.normalized_return);
    out << buf << seed << ',' << run.variant << '\n';
  }
  return out.str();
}

void save_agent(const IqlAgent& agent, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, net] :
       {std::pair{"iql_q.net", &agent.q_net}, std::pair{"iql_q_target.net", &agent.q_target},
        std::pair{"iql_v.net", &agent.v_net}, std::pair{"iql_actor.net", &agent.actor}}) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + (dir / name).string());
    save_network(*net, out);
  }
  const Json j = {{"standardizer", standardizer_to_json(agent.standardizer)},
                  {"expectile", agent.expectile},
                  {"awr_temperature", agent.awr_temperature},
                  {"max_weight", agent.max_weight},
                  {"discount", agent.discount},
                  {"polyak", agent.polyak}};
  std::ofstream out(dir / "iql.json");
  if (!out) throw InvalidArgument("cannot write " + (dir / "iql.json").string());
  out << j.dump(2) << '\n';
}

IqlAgent load_agent(const std::filesystem::path& dir) {
  IqlAgent a;
  for (const auto& [name, net] :
       {std::pair{"iql_q.net", &a.q_net}, std::pair{"iql_q_target.net", &a.q_target},
        std::pair{"iql_v.net", &a.v_net}, std::pair{"iql_actor.net", &a.actor}}) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + (dir / name).string());
    *net = load_network(in);
  }
  std::ifstream in(dir / "iql.json");
  if (!in) throw InvalidArgument("cannot open " + (dir / "iql.json").string());
  try {
    const Json j = Json::parse(in);
    a.standardizer = standardizer_from_json(j.at("standardizer"));
    a.expectile = j.at("expectile").get<double>();
    a.awr_temperature = j.at("awr_temperature").get<double>();
    a.max_weight = j.at("max_weight").get<double>();
    a.discount = j.at("discount").get<double>();
    a.polyak = j.at("polyak").get<double>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad agent sidecar: ") + e.what(), 0);
  }
  return a;
}

}  // namespace bwdq

#include "bwdq/bwd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "bwdq/errors.hpp"

namespace bwdq {

namespace {

double guarded_exp(double z, std::int64_t& clipped, double& max_exponent) {
  max_exponent = std::max(max_exponent, z);
  if (z > kExponentCap) {
    ++clipped;
    return std::exp(kExponentCap);
  }
  return std::exp(z);
}

void validate_config(const BwdConfig& c) {
  if (c.ot_steps < 0 || c.batch_size < 1 || c.k_negatives < 1 || c.eval_batches < 1 ||
      c.hidden_dim < 1) {
    throw InvalidArgument("invalid BWD configuration");
  }
  if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0)) {
    throw InvalidArgument("holdout_fraction must lie in (0, 1)");
  }
  if (!(c.epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (c.cost_scale && !(*c.cost_scale > 0.0)) throw InvalidArgument("cost_scale must be positive");
}

Matrix gather(const Matrix& m, const std::vector<std::size_t>& rows) { return gather_rows(m, rows); }

}  // namespace

Json BwdConfig::to_json() const {
  Json j = {{"ot_steps", ot_steps},
            {"batch_size", batch_size},
            {"k_negatives", k_negatives},
            {"holdout_fraction", holdout_fraction},
            {"eval_batches", eval_batches},
            {"hidden_dim", hidden_dim},
            {"learning_rate", learning_rate},
            {"epsilon", epsilon}};
  j["cost_scale"] = cost_scale ? Json(*cost_scale) : Json(nullptr);
  return j;
}

Json BwdEstimate::to_json() const {
  return {{"value", value},
          {"std_error", std_error},
          {"epsilon", epsilon},
          {"cost_scale", cost_scale},
          {"config_hash", config_hash}};
}

BwdEstimate BwdEstimate::from_json(const Json& j) {
  BwdEstimate e;
  e.value = j.at("value").get<double>();
  e.std_error = j.at("std_error").get<double>();
  e.epsilon = j.at("epsilon").get<double>();
  e.cost_scale = j.at("cost_scale").get<double>();
  e.config_hash = j.at("config_hash").get<std::string>();
  return e;
}

double bwd_cost(const Critic& critic, const Vector& state, const Vector& behavior_action,
                const Vector& random_action, double cost_scale) {
  if (behavior_action.size() != random_action.size()) {
    throw InvalidArgument("behaviour and random actions differ in dimension");
  }
  return cost_scale *
         (q_value(critic, state, random_action) - (random_action - behavior_action).squaredNorm());
}

double auto_cost_scale(const Critic& critic, const Dataset& dataset, const RandomPolicy& policy,
                       std::size_t probe, Rng& rng) {
  if (dataset.empty()) throw InvalidArgument("cost scale probe needs a non-empty dataset");
  const auto idx = sample_indices(dataset.size(), probe, rng);
  Matrix s(static_cast<Eigen::Index>(idx.size()), dataset.obs_dim);
  Matrix a(static_cast<Eigen::Index>(idx.size()), dataset.act_dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    s.row(static_cast<Eigen::Index>(i)) = dataset.transitions[idx[i]].state.transpose();
    a.row(static_cast<Eigen::Index>(i)) = policy.sample(rng).transpose();
  }
  Vector q = q_value(critic, s, a).cwiseAbs();
  std::sort(q.data(), q.data() + q.size());
  const auto at = static_cast<Eigen::Index>(std::floor(0.95 * static_cast<double>(q.size() - 1)));
  return 1.0 / std::max(1.0, q(at));
}

DualValues dual_objective_values(const Vector& g, const Matrix& f, const Matrix& cost,
                                 double epsilon) {
  const Eigen::Index b = g.size();
  const Eigen::Index k = f.cols();
  if (b < 1 || k < 1 || f.rows() != b || cost.rows() != b || cost.cols() != k) {
    throw InvalidArgument("dual objective shapes mismatch");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  const double wb = 1.0 / static_cast<double>(b);
  const double w = 1.0 / static_cast<double>(b * k);
  DualValues out;
  out.d_g.resize(b);
  out.d_f.resize(b, k);
  out.d_cost.resize(b, k);
  double sum_g = 0.0, sum_f = 0.0, sum_e = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    sum_g += g(i);
    double row = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double z = (g(i) + f(i, j) - cost(i, j)) / epsilon;
      const bool capped = z > kExponentCap;
      const double e = guarded_exp(z, out.clipped, out.max_exponent);
      sum_f += f(i, j);
      sum_e += e;
      // the capped branch is constant, so it contributes no gradient
      const double de = capped ? 0.0 : e;
      row += de;
      out.d_f(i, j) = w * (1.0 - de);
      out.d_cost(i, j) = w * de;
    }
    out.d_g(i) = wb - w * row;
  }
  out.value = wb * sum_g + w * sum_f - epsilon * w * sum_e;
  if (!std::isfinite(out.value)) throw NumericError("dual objective is not finite");
  return out;
}

void check_exponent_guard(std::int64_t clipped, std::int64_t total, double max_exponent) {
  if (total > 0 && static_cast<double>(clipped) > kMaxClippedFraction * static_cast<double>(total)) {
    throw NumericError("entropic exponent capped on " + std::to_string(clipped) + " of " +
                       std::to_string(total) + " terms (max exponent " +
                       std::to_string(max_exponent) + "); increase epsilon or lower cost_scale");
  }
}

PairBatch make_pair_batch(const Critic& critic, const Matrix& states, const Matrix& actions,
                          const RandomPolicy& policy, int k, Rng& rng) {
  if (k < 1) throw InvalidArgument("k_negatives must be >= 1");
  if (states.rows() != actions.rows()) throw InvalidArgument("pair batch rows mismatch");
  PairBatch batch;
  batch.states = states;
  batch.actions = actions;
  batch.k = k;
  const Eigen::Index n = states.rows() * k;
  Matrix rep(n, states.cols());
  batch.random_actions.resize(n, actions.cols());
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    for (int j = 0; j < k; ++j) {
      rep.row(i * k + j) = states.row(i);
      batch.random_actions.row(i * k + j) = policy.sample(rng).transpose();
    }
  }
  batch.random_q = q_value(critic, rep, batch.random_actions);
  return batch;
}

Matrix pair_costs(const PairBatch& batch, double cost_scale) {
  const int k = batch.k;
  Matrix c(batch.size(), k);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    for (int j = 0; j < k; ++j) {
      const Eigen::Index r = i * k + j;
      c(i, j) = cost_scale * (batch.random_q(r) -
                              (batch.random_actions.row(r) - batch.actions.row(i)).squaredNorm());
    }
  }
  return c;
}

PotentialInputs potential_inputs(const PotentialPair& p, const PairBatch& batch) {
  const int k = batch.k;
  const Eigen::Index obs = batch.states.cols();
  const Eigen::Index act = batch.actions.cols();
  if (p.g_net.input_dim() != obs + act || p.f_net.input_dim() != obs + act) {
    throw InvalidArgument("potential input dimension mismatch");
  }
  const Matrix z = p.standardizer.apply(batch.states);
  PotentialInputs in;
  in.g_input.resize(batch.size(), obs + act);
  in.g_input.leftCols(obs) = z;
  in.g_input.rightCols(act) = batch.actions;
  in.f_input.resize(batch.size() * k, obs + act);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    for (int j = 0; j < k; ++j) in.f_input.row(i * k + j).head(obs) = z.row(i);
  }
  in.f_input.rightCols(act) = batch.random_actions;
  return in;
}

DualResult dual_objective(const PotentialPair& p, const PairBatch& batch, DualWorkspace& ws) {
  const PotentialInputs in = potential_inputs(p, batch);
  const int k = batch.k;
  const Eigen::Index b = batch.size();
  const Vector g = forward_cached(p.g_net, in.g_input, ws.g_cache).col(0);
  const Matrix& f_flat = forward_cached(p.f_net, in.f_input, ws.f_cache);
  // f_flat is (B*K) x 1 with row i*K+j; reshape to B x K
  Matrix f(b, k);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (int j = 0; j < k; ++j) f(i, j) = f_flat(i * k + j, 0);
  }
  const DualValues dv = dual_objective_values(g, f, pair_costs(batch, p.cost_scale), p.epsilon);
  check_exponent_guard(dv.clipped, b * k, dv.max_exponent);

  ws.upstream_g = dv.d_g;
  ws.upstream_f.resize(b * k, 1);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (int j = 0; j < k; ++j) ws.upstream_f(i * k + j, 0) = dv.d_f(i, j);
  }
  DualResult out;
  out.value = dv.value;
  out.clipped = dv.clipped;
  out.max_exponent = dv.max_exponent;
  backward_into(p.g_net, ws.g_cache, ws.upstream_g, out.g_grad);
  backward_into(p.f_net, ws.f_cache, ws.upstream_f, out.f_grad);
  return out;
}

DualResult dual_objective(const PotentialPair& p, const PairBatch& batch) {
  DualWorkspace ws;
  return dual_objective(p, batch, ws);
}

PotentialPair init_potentials(int obs_dim, int act_dim, const BwdConfig& config,
                              const Standardizer& standardizer, double cost_scale,
                              std::uint64_t seed) {
  PotentialPair p;
  p.g_net = init_network(obs_dim + act_dim, config.hidden_dim, 1, derive_seed(seed, 1));
  p.f_net = init_network(obs_dim + act_dim, config.hidden_dim, 1, derive_seed(seed, 2));
  p.g_net.w2().setZero();
  p.f_net.w2().setZero();
  p.epsilon = config.epsilon;
  p.cost_scale = cost_scale;
  p.standardizer = standardizer;
  return p;
}

HoldoutSplit split_holdout(std::size_t n, double fraction, Rng& rng) {
  if (n < 2) throw InvalidArgument("holdout split needs at least two transitions");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with explicit draws, so the permutation is identical across
  // standard library implementations
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  auto h = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  h = std::clamp<std::size_t>(h, 1, n - 1);
  HoldoutSplit split;
  split.holdout.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(h));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(h), order.end());
  return split;
}

BwdTraining train_bwd(const Critic& critic, const Dataset& dataset, const RandomPolicy& policy,
                      const BwdConfig& config, Rng& rng) {
  validate_config(config);
  if (!critic.trained) throw InvalidState("BWD needs a trained critic");
  if (critic.obs_dim() != dataset.obs_dim || critic.act_dim() != dataset.act_dim) {
    throw InvalidArgument("critic and dataset dimensions differ");
  }
  if (policy.act_dim != dataset.act_dim) throw InvalidArgument("random policy action dimension differs");
  BwdTraining out;
  out.split = split_holdout(dataset.size(), config.holdout_fraction, rng);
  const double scale = config.cost_scale ? *config.cost_scale
                                         : auto_cost_scale(critic, dataset, policy, 1000, rng);
  out.potentials = init_potentials(dataset.obs_dim, dataset.act_dim, config, critic.standardizer,
                                   scale, rng());
  out.potentials.config_hash = config_hash(config.to_json());
  PotentialPair& p = out.potentials;

  const DatasetArrays arr = to_arrays(dataset);
  OptimState g_opt = OptimState::for_size(p.g_net.num_params(), config.learning_rate);
  OptimState f_opt = OptimState::for_size(p.f_net.num_params(), config.learning_rate);
  DualWorkspace ws;
  Gradients descent;
  out.trace.reserve(static_cast<std::size_t>(config.ot_steps));
  for (int step = 0; step < config.ot_steps; ++step) {
    const auto pick = sample_indices(out.split.train.size(),
                                     static_cast<std::size_t>(config.batch_size), rng);
    std::vector<std::size_t> rows(pick.size());
    for (std::size_t i = 0; i < pick.size(); ++i) rows[i] = out.split.train[pick[i]];
    const PairBatch batch = make_pair_batch(critic, gather(arr.states, rows),
                                            gather(arr.actions, rows), policy,
                                            config.k_negatives, rng);
    DualResult r;
    try {
      r = dual_objective(p, batch, ws);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at OT step " + std::to_string(step));
    }
    out.trace.push_back(r.value);
    // ascent: the optimizer descends, so hand it the negated gradient
    descent.flat = -r.g_grad.flat;
    optim_step(p.g_net, descent, g_opt);
    descent.flat = -r.f_grad.flat;
    optim_step(p.f_net, descent, f_opt);
  }
  return out;
}

BwdEstimate estimate_bwd(const PotentialPair& p, const Critic& critic, const Dataset& dataset,
                         const std::vector<std::size_t>& holdout, const RandomPolicy& policy,
                         const BwdConfig& config, Rng& rng) {
  validate_config(config);
  if (holdout.empty()) throw InvalidArgument("BWD estimate needs a non-empty holdout");
  if (policy.act_dim != dataset.act_dim) throw InvalidArgument("random policy action dimension differs");
  const DatasetArrays arr = to_arrays(dataset);
  std::vector<double> values;
  DualWorkspace ws;
  for (int b = 0; b < config.eval_batches; ++b) {
    const auto pick = sample_indices(holdout.size(), static_cast<std::size_t>(config.batch_size), rng);
    std::vector<std::size_t> rows(pick.size());
    for (std::size_t i = 0; i < pick.size(); ++i) rows[i] = holdout[pick[i]];
    const PairBatch batch = make_pair_batch(critic, gather(arr.states, rows),
                                            gather(arr.actions, rows), policy,
                                            config.k_negatives, rng);
    const PotentialInputs in = potential_inputs(p, batch);
    const Vector g = forward(p.g_net, in.g_input).col(0);
    const Vector f_flat = forward(p.f_net, in.f_input).col(0);
    const Matrix f = Eigen::Map<const Matrix>(f_flat.data(), batch.k, batch.size()).transpose();
    const DualValues dv = dual_objective_values(g, f, pair_costs(batch, p.cost_scale), p.epsilon);
    check_exponent_guard(dv.clipped, batch.size() * batch.k, dv.max_exponent);
    values.push_back(dv.value / p.cost_scale);
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var = values.size() > 1 ? var / (n - 1.0) : 0.0;
  BwdEstimate e;
  e.value = mean;
  e.std_error = std::sqrt(var / n);
  e.epsilon = p.epsilon;
  e.cost_scale = p.cost_scale;
  e.config_hash = p.config_hash;
  return e;
}

// ---------------------------------------------------------------- discrete problems

namespace {

void check_simplex(const Vector& w, const char* name) {
  if (w.size() < 1 || w.minCoeff() < 0.0 || std::abs(w.sum() - 1.0) > 1e-9) {
    throw InvalidArgument(std::string(name) + " must be a probability vector");
  }
}

}  // namespace

TableDual dual_objective_table(const Vector& g, const Vector& f, const Matrix& cost,
                               const Vector& mu, const Vector& nu, double epsilon) {
  if (cost.rows() != g.size() || cost.cols() != f.size() || mu.size() != g.size() ||
      nu.size() != f.size()) {
    throw InvalidArgument("table dual shapes mismatch");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  TableDual out;
  out.d_g = mu;
  out.d_f = nu;
  double penalty = 0.0;
  std::int64_t clipped = 0;
  double max_exponent = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      const double z = (g(i) + f(j) - cost(i, j)) / epsilon;
      const bool capped = z > kExponentCap;
      const double pe = mu(i) * nu(j) * guarded_exp(z, clipped, max_exponent);
      penalty += pe;
      if (!capped) {
        out.d_g(i) -= pe;
        out.d_f(j) -= pe;
      }
    }
  }
  check_exponent_guard(clipped, cost.size(), max_exponent);
  out.value = mu.dot(g) + nu.dot(f) - epsilon * penalty;
  return out;
}

TableFit train_table_dual(const Matrix& cost, const Vector& mu, const Vector& nu, double epsilon,
                          int steps, double learning_rate) {
  check_simplex(mu, "mu");
  check_simplex(nu, "nu");
  if (steps < 1) throw InvalidArgument("steps must be >= 1");
  Vector params = Vector::Zero(cost.rows() + cost.cols());
  OptimState opt = OptimState::for_size(params.size(), learning_rate);
  TableFit fit;
  fit.trace.reserve(static_cast<std::size_t>(steps));
  Vector grad(params.size());
  for (int step = 0; step < steps; ++step) {
    opt.learning_rate = learning_rate * (1.0 - static_cast<double>(step) / steps);
    const TableDual d = dual_objective_table(params.head(cost.rows()), params.tail(cost.cols()),
                                             cost, mu, nu, epsilon);
    fit.trace.push_back(d.value);
    grad << -d.d_g, -d.d_f;
    optim_step(params, grad, opt);
  }
  fit.g = params.head(cost.rows());
  fit.f = params.tail(cost.cols());
  fit.value = dual_objective_table(fit.g, fit.f, cost, mu, nu, epsilon).value;
  return fit;
}

SinkhornResult sinkhorn_reference(const Matrix& cost, const Vector& mu, const Vector& nu,
                                  double epsilon, int iters, double tol) {
  check_simplex(mu, "mu");
  check_simplex(nu, "nu");
  if (cost.rows() != mu.size() || cost.cols() != nu.size()) {
    throw InvalidArgument("cost matrix shape does not match the marginals");
  }
  if (iters < 1) throw InvalidArgument("iters must be >= 1");
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  const Eigen::Index n = cost.rows();
  const Eigen::Index m = cost.cols();
  const Vector log_mu = mu.array().log();
  const Vector log_nu = nu.array().log();
  Vector g = Vector::Zero(n);
  Vector f = Vector::Zero(m);

  auto log_sum_exp = [](const Vector& v) {
    const double hi = v.maxCoeff();
    if (!std::isfinite(hi)) return hi;
    return hi + std::log((v.array() - hi).exp().sum());
  };
  // plan P_ij = mu_i nu_j exp((g_i + f_j - C_ij) / eps)
  auto plan_of = [&]() {
    Matrix p(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        p(i, j) = std::exp(log_mu(i) + log_nu(j) + (g(i) + f(j) - cost(i, j)) / epsilon);
      }
    }
    return p;
  };

  SinkhornResult out;
  Vector tmp_m(m), tmp_n(n);
  for (int it = 0; it < iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) tmp_m(j) = log_nu(j) + (f(j) - cost(i, j)) / epsilon;
      g(i) = -epsilon * log_sum_exp(tmp_m);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) tmp_n(i) = log_mu(i) + (g(i) - cost(i, j)) / epsilon;
      f(j) = -epsilon * log_sum_exp(tmp_n);
    }
    out.iterations = it + 1;
    // after the f update the column marginals are exact; check the rows
    const Matrix p = plan_of();
    out.marginal_error = std::max((p.rowwise().sum() - mu).cwiseAbs().maxCoeff(),
                                  (p.colwise().sum().transpose() - nu).cwiseAbs().maxCoeff());
    if (out.marginal_error <= tol) break;
  }
  out.plan = plan_of();
  double transport = 0.0, kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double p = out.plan(i, j);
      transport += p * cost(i, j);
      if (p > 0.0) kl += p * std::log(p / (mu(i) * nu(j)));
    }
  }
  out.primal = transport + epsilon * kl;
  return out;
}

// ---------------------------------------------------------------- persistence

void save_potentials(const PotentialPair& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, net] : {std::pair{"potential_g.net", &p.g_net},
                                  std::pair{"potential_f.net", &p.f_net}}) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + (dir / name).string());
    save_network(*net, out);
  }
  const Json j = {{"epsilon", p.epsilon},
                  {"cost_scale", p.cost_scale},
                  {"standardizer", standardizer_to_json(p.standardizer)},
                  {"config_hash", p.config_hash}};
  std::ofstream out(dir / "potentials.json");
  if (!out) throw InvalidArgument("cannot write " + (dir / "potentials.json").string());
  out << j.dump(2) << '\n';
}

PotentialPair load_potentials(const std::filesystem::path& dir) {
  PotentialPair p;
  for (const auto& [name, net] : {std::pair{"potential_g.net", &p.g_net},
                                  std::pair{"potential_f.net", &p.f_net}}) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + (dir / name).string());
    *net = load_network(in);
  }
  std::ifstream in(dir / "potentials.json");
  if (!in) throw InvalidArgument("cannot open " + (dir / "potentials.json").string());
  try {
    const Json j = Json::parse(in);
    p.epsilon = j.at("epsilon").get<double>();
    p.cost_scale = j.at("cost_scale").get<double>();
    p.standardizer = standardizer_from_json(j.at("standardizer"));
    p.config_hash = j.at("config_hash").get<std::string>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad potentials sidecar: ") + e.what(), 0);
  }
  return p;
}

}  // namespace bwdq

#include "bwdq/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "bwdq/errors.hpp"

namespace bwdq {

namespace {

void require_trained(const Critic& critic) {
  if (!critic.trained) throw InvalidState("critic has not been trained");
}

void require_trained(const ValueHead& value) {
  if (!value.trained) throw InvalidState("value head has not been fitted");
}

Matrix gather_states(const Dataset& d, const std::vector<std::size_t>& idx) {
  Matrix s(static_cast<Eigen::Index>(idx.size()), d.obs_dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    s.row(static_cast<Eigen::Index>(i)) = d.transitions[idx[i]].state.transpose();
  }
  return s;
}

Matrix gather_actions(const Dataset& d, const std::vector<std::size_t>& idx) {
  Matrix a(static_cast<Eigen::Index>(idx.size()), d.act_dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    a.row(static_cast<Eigen::Index>(i)) = d.transitions[idx[i]].action.transpose();
  }
  return a;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Json MetricReport::to_json() const {
  return {{"mean_reward", mean_reward},
          {"mean_q", mean_q},
          {"mean_advantage", mean_advantage},
          {"pd_random", pd_random},
          {"pd_random_unscaled", pd_random_unscaled},
          {"pd_random_label", "PD (state-marginal approximation)"},
          {"n_samples", n_samples},
          {"seeds", seeds},
          {"config_hash", config_hash}};
}

MetricReport MetricReport::from_json(const Json& j) {
  MetricReport r;
  r.mean_reward = j.at("mean_reward").get<double>();
  r.mean_q = j.at("mean_q").get<double>();
  r.mean_advantage = j.at("mean_advantage").get<double>();
  r.pd_random = j.at("pd_random").get<double>();
  r.pd_random_unscaled = j.at("pd_random_unscaled").get<double>();
  r.n_samples = j.at("n_samples").get<std::int64_t>();
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  r.config_hash = j.at("config_hash").get<std::string>();
  return r;
}

std::vector<std::size_t> metric_sample(std::size_t dataset_size, std::size_t n_samples, Rng& rng) {
  if (dataset_size == 0) throw InvalidArgument("metrics need a non-empty dataset");
  if (n_samples == 0) throw InvalidArgument("n_samples must be positive");
  if (dataset_size <= n_samples) {
    std::vector<std::size_t> all(dataset_size);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  return sample_indices(dataset_size, n_samples, rng);
}

double mean_reward(const Dataset& dataset, std::size_t n_samples, Rng& rng) {
  const auto idx = metric_sample(dataset.size(), n_samples, rng);
  double total = 0.0;
  for (std::size_t i : idx) total += dataset.transitions[i].reward;
  return total / static_cast<double>(idx.size());
}

double mean_q(const Critic& critic, const Dataset& dataset, std::size_t n_samples, Rng& rng) {
  require_trained(critic);
  const auto idx = metric_sample(dataset.size(), n_samples, rng);
  return q_value(critic, gather_states(dataset, idx), gather_actions(dataset, idx)).mean();
}

double mean_advantage(const Critic& critic, const ValueHead& value, const Dataset& dataset,
                      std::size_t n_samples, Rng& rng) {
  require_trained(critic);
  require_trained(value);
  const auto idx = metric_sample(dataset.size(), n_samples, rng);
  const Matrix s = gather_states(dataset, idx);
  return (q_value(critic, s, gather_actions(dataset, idx)) - v_value(value, s)).mean();
}

PdEstimate pd_random(const Critic& critic, const ValueHead& value, const Dataset& dataset,
                     const RandomPolicy& policy, std::size_t n_samples, int k_actions, Rng& rng) {
  require_trained(critic);
  require_trained(value);
  if (!(critic.discount >= 0.0 && critic.discount < 1.0)) {
    throw InvalidArgument("performance difference needs discount < 1");
  }
  if (k_actions < 1) throw InvalidArgument("k_actions must be >= 1");
  if (policy.act_dim != dataset.act_dim) throw InvalidArgument("random policy dimension mismatch");
  const auto idx = metric_sample(dataset.size(), n_samples, rng);
  const Matrix s = gather_states(dataset, idx);
  const Vector v = v_value(value, s);
  const auto n = static_cast<Eigen::Index>(idx.size());
  // rows are grouped by state: row i * k + j holds the j-th random action at state i
  Matrix rep_s(n * k_actions, dataset.obs_dim);
  Matrix rand_a(n * k_actions, dataset.act_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < k_actions; ++j) {
      rep_s.row(i * k_actions + j) = s.row(i);
      rand_a.row(i * k_actions + j) = policy.sample(rng).transpose();
    }
  }
  const Vector q = q_value(critic, rep_s, rand_a);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < k_actions; ++j) total += q(i * k_actions + j) - v(i);
  }
  PdEstimate out;
  out.unscaled = total / static_cast<double>(n * k_actions);
  out.scaled = out.unscaled / (1.0 - critic.discount);
  return out;
}

MetricReport compute_metrics(const Critic& critic, const ValueHead& value, const Dataset& dataset,
                             const MetricsConfig& config, std::uint64_t seed) {
  MetricReport r;
  Rng a(derive_seed(seed, 1)), b(derive_seed(seed, 2)), c(derive_seed(seed, 3)),
      d(derive_seed(seed, 4));
  r.mean_reward = mean_reward(dataset, config.n_samples, a);
  r.mean_q = mean_q(critic, dataset, config.n_samples, b);
  r.mean_advantage = mean_advantage(critic, value, dataset, config.n_samples, c);
  const RandomPolicy policy{dataset.act_dim, config.random_std};
  const PdEstimate pd = pd_random(critic, value, dataset, policy, config.n_samples,
                                  config.k_actions, d);
  r.pd_random = pd.scaled;
  r.pd_random_unscaled = pd.unscaled;
  r.n_samples = static_cast<std::int64_t>(std::min(config.n_samples, dataset.size()));
  r.seeds = {seed};
  r.config_hash = config_hash(Json{{"n_samples", config.n_samples},
                                   {"k_actions", config.k_actions},
                                   {"random_std", config.random_std},
                                   {"critic", critic.config_hash}});
  for (double v : {r.mean_reward, r.mean_q, r.mean_advantage, r.pd_random}) {
    if (!std::isfinite(v)) throw NumericError("metric evaluated to a non-finite value");
  }
  return r;
}

const std::vector<std::string>& metric_csv_columns() {
  static const std::vector<std::string> columns = {
      "dataset", "quality_meta", "mean_reward", "mean_q", "mean_advantage",
      "pd_random", "bwd", "oracle", "n_samples", "seed"};
  return columns;
}

std::string metric_csv_header() {
  std::string out;
  for (const auto& c : metric_csv_columns()) out += (out.empty() ? "" : ",") + c;
  return out;
}

std::string metric_csv_line(const MetricCsvRow& row) {
  std::ostringstream out;
  out << row.dataset << ',' << row.quality_meta << ',' << format_number(row.report.mean_reward)
      << ',' << format_number(row.report.mean_q) << ','
      << format_number(row.report.mean_advantage) << ','
      << format_number(row.report.pd_random) << ','
      << (row.bwd ? format_number(*row.bwd) : "") << ','
      << (row.oracle ? format_number(*row.oracle) : "") << ',' << row.report.n_samples << ','
      << row.seed;
  return out.str();
}

}  // namespace bwdq

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bwdq/config.hpp"
#include "bwdq/critic.hpp"
#include "bwdq/dataset.hpp"

namespace bwdq {

struct MetricReport {
  double mean_reward = 0.0;
  double mean_q = 0.0;
  double mean_advantage = 0.0;
  // Estimate of J(random) - J(behaviour) with dataset states standing in for
  // the random policy's visitation (state-marginal approximation).
  double pd_random = 0.0;
  // Same estimate without the 1 / (1 - gamma) factor.
  double pd_random_unscaled = 0.0;
  std::int64_t n_samples = 0;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;

  Json to_json() const;
  static MetricReport from_json(const Json& j);
};

// Uniform indices with replacement, or every index once when the dataset has at
// most `n_samples` transitions.
std::vector<std::size_t> metric_sample(std::size_t dataset_size, std::size_t n_samples, Rng& rng);

double mean_reward(const Dataset& dataset, std::size_t n_samples, Rng& rng);
double mean_q(const Critic& critic, const Dataset& dataset, std::size_t n_samples, Rng& rng);
double mean_advantage(const Critic& critic, const ValueHead& value, const Dataset& dataset,
                      std::size_t n_samples, Rng& rng);

struct PdEstimate {
  double scaled = 0.0;
  double unscaled = 0.0;
};

PdEstimate pd_random(const Critic& critic, const ValueHead& value, const Dataset& dataset,
                     const RandomPolicy& policy, std::size_t n_samples, int k_actions, Rng& rng);

struct MetricsConfig {
  std::size_t n_samples = 20000;
  int k_actions = 8;
  double random_std = 1.0;
};

// All four estimators with one child stream each, derived from `seed`.
MetricReport compute_metrics(const Critic& critic, const ValueHead& value, const Dataset& dataset,
                             const MetricsConfig& config, std::uint64_t seed);

// Fixed column order shared by the score and correlate outputs.
const std::vector<std::string>& metric_csv_columns();

struct MetricCsvRow {
  std::string dataset;
  std::string quality_meta;
  MetricReport report;
  std::optional<double> bwd;
  std::optional<double> oracle;
  std::uint64_t seed = 0;
};

std::string metric_csv_header();
std::string metric_csv_line(const MetricCsvRow& row);

}  // namespace bwdq

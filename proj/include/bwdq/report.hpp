#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bwdq/bwd.hpp"
#include "bwdq/config.hpp"
#include "bwdq/critic.hpp"
#include "bwdq/dataset.hpp"
#include "bwdq/metrics.hpp"
#include "bwdq/oracle.hpp"

namespace bwdq {

// Product-moment correlation. Throws InvalidArgument for unequal or short
// (< 3) inputs and UndefinedCorrelation when either side has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);
// Pearson on ranks; tied values share their average rank.
double spearman(const std::vector<double>& x, const std::vector<double>& y);
std::vector<double> average_ranks(const std::vector<double>& x);

// Everything the score command computes for one dataset.
struct ScoreConfig {
  CriticConfig critic;
  ValueHeadConfig value;
  MetricsConfig metrics;
  BwdConfig bwd;

  Json to_json() const;
};

struct ScoreResult {
  MetricReport metrics;
  BwdEstimate bwd;
  std::vector<double> ot_trace;
};

// Trains the critic, value head and potentials, then evaluates every metric.
ScoreResult score_dataset(const Dataset& dataset, const ScoreConfig& config, std::uint64_t seed);

struct SuiteEntry {
  std::string id;
  std::string env;  // name accepted by make_env
  double quality = 0.0;
  std::uint64_t seed = 0;
  Dataset dataset;
};

struct SuiteConfig {
  ScoreConfig score;
  OracleConfig oracle;
  int workers = 1;

  Json to_json() const;
};

struct SuiteRow {
  std::string id;
  std::string env;
  double quality = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  MetricReport metrics;
  BwdEstimate bwd;
  OracleScore oracle;
};

// Seed-averaged values of one (env, quality) group.
struct AveragedRow {
  std::string env;
  double quality = 0.0;
  int n_seeds = 0;
  std::map<std::string, double> values;  // metric name and "oracle"
};

struct CorrelationTable {
  std::string scope;  // environment name or "pooled"
  int n_points = 0;
  // Missing entries mean the correlation is undefined for this scope.
  std::map<std::string, double> pearson;
  std::map<std::string, double> spearman;
};

struct SuiteResult {
  std::vector<SuiteRow> rows;
  std::vector<AveragedRow> averaged;
  std::vector<CorrelationTable> correlations;  // per environment, then pooled
  std::vector<std::string> oracle_agents;
  std::string config_hash;

  const CorrelationTable& table(const std::string& scope) const;
  Json to_json() const;
  static SuiteResult from_json(const Json& j);
};

// Metrics correlated against the oracle, in report order.
const std::vector<std::string>& suite_metrics();

// Per-entry pipelines draw from streams derived from `seed` and the entry
// index, so the result does not depend on the worker count. Failed entries are
// flagged and excluded from the averages and correlations.
SuiteResult run_suite(const std::vector<SuiteEntry>& entries, const SuiteConfig& config,
                      std::uint64_t seed);

// Correlations of seed-averaged rows; used by run_suite and usable on edited rows.
void aggregate(SuiteResult& result);

// One row per dataset and seed, then the seed-averaged block with seed "mean".
std::string suite_csv(const SuiteResult& result);

}  // namespace bwdq

#include "bwdq/report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "bwdq/envgen.hpp"
#include "bwdq/errors.hpp"

namespace bwdq {

namespace {

void check_pair(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("correlation inputs differ in length");
  if (x.size() < 3) throw InvalidArgument("correlation needs at least 3 points");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw InvalidArgument("correlation inputs must be finite");
    }
  }
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_quality(double q) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", q);
  return buf;
}

double metric_value(const SuiteRow& row, const std::string& name) {
  if (name == "mean_reward") return row.metrics.mean_reward;
  if (name == "mean_q") return row.metrics.mean_q;
  if (name == "mean_advantage") return row.metrics.mean_advantage;
  if (name == "pd_random") return row.metrics.pd_random;
  if (name == "bwd") return row.bwd.value;
  if (name == "oracle") return row.oracle.score;
  throw InvalidArgument("unknown metric '" + name + "'");
}

CorrelationTable correlate(const std::string& scope, const std::vector<const AveragedRow*>& rows) {
  CorrelationTable t;
  t.scope = scope;
  t.n_points = static_cast<int>(rows.size());
  if (rows.size() < 3) return t;
  std::vector<double> oracle;
  for (const auto* r : rows) oracle.push_back(r->values.at("oracle"));
  for (const auto& m : suite_metrics()) {
    std::vector<double> x;
    for (const auto* r : rows) x.push_back(r->values.at(m));
    try {
      t.pearson[m] = pearson(x, oracle);
      t.spearman[m] = spearman(x, oracle);
    } catch (const UndefinedCorrelation&) {
      t.pearson.erase(m);
      t.spearman.erase(m);
    }
  }
  return t;
}

Json table_json(const CorrelationTable& t) {
  return {{"scope", t.scope}, {"n_points", t.n_points}, {"pearson", t.pearson}, {"spearman", t.spearman}};
}

}  // namespace

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("correlation undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y);
  return pearson(average_ranks(x), average_ranks(y));
}

Json ScoreConfig::to_json() const {
  return {{"critic", critic.to_json()},
          {"value", value.to_json()},
          {"metrics",
           {{"n_samples", metrics.n_samples},
            {"k_actions", metrics.k_actions},
            {"random_std", metrics.random_std}}},
          {"bwd", bwd.to_json()}};
}

ScoreResult score_dataset(const Dataset& dataset, const ScoreConfig& config, std::uint64_t seed) {
  validate(dataset);
  ScoreResult out;
  Rng critic_rng(derive_seed(seed, 1));
  Rng value_rng(derive_seed(seed, 2));
  Rng bwd_rng(derive_seed(seed, 4));
  const Critic critic = train_critic(dataset, config.critic, critic_rng).critic;
  const ValueHead value = fit_value_head(critic, dataset, config.value, value_rng);
  out.metrics = compute_metrics(critic, value, dataset, config.metrics, derive_seed(seed, 3));
  const RandomPolicy policy{dataset.act_dim, config.metrics.random_std};
  BwdTraining t = train_bwd(critic, dataset, policy, config.bwd, bwd_rng);
  out.bwd = estimate_bwd(t.potentials, critic, dataset, t.split.holdout, policy, config.bwd, bwd_rng);
  out.ot_trace = std::move(t.trace);
  return out;
}

Json SuiteConfig::to_json() const {
  // the worker count does not change results, so it stays out of the hash input
  return {{"score", score.to_json()}, {"oracle", oracle.to_json()}};
}

const std::vector<std::string>& suite_metrics() {
  static const std::vector<std::string> names = {"mean_reward", "mean_q", "mean_advantage",
                                                 "pd_random", "bwd"};
  return names;
}

const CorrelationTable& SuiteResult::table(const std::string& scope) const {
  for (const auto& t : correlations) {
    if (t.scope == scope) return t;
  }
  throw InvalidArgument("no correlation table for '" + scope + "'");
}

void aggregate(SuiteResult& result) {
  result.averaged.clear();
  result.correlations.clear();
  std::vector<std::string> envs;
  for (const auto& row : result.rows) {
    if (row.failed) continue;
    if (std::find(envs.begin(), envs.end(), row.env) == envs.end()) envs.push_back(row.env);
    auto it = std::find_if(result.averaged.begin(), result.averaged.end(), [&](const AveragedRow& a) {
      return a.env == row.env && a.quality == row.quality;
    });
    if (it == result.averaged.end()) {
      result.averaged.push_back({row.env, row.quality, 0, {}});
      it = std::prev(result.averaged.end());
    }
    ++it->n_seeds;
    for (const auto& m : suite_metrics()) it->values[m] += metric_value(row, m);
    it->values["oracle"] += metric_value(row, "oracle");
  }
  for (auto& a : result.averaged) {
    for (auto& [name, v] : a.values) v /= static_cast<double>(a.n_seeds);
  }
  std::stable_sort(result.averaged.begin(), result.averaged.end(),
                   [&](const AveragedRow& a, const AveragedRow& b) {
                     const auto ia = std::find(envs.begin(), envs.end(), a.env);
                     const auto ib = std::find(envs.begin(), envs.end(), b.env);
                     return ia != ib ? ia < ib : a.quality < b.quality;
                   });
  std::vector<const AveragedRow*> all;
  for (const auto& env : envs) {
    std::vector<const AveragedRow*> rows;
    for (const auto& a : result.averaged) {
      if (a.env == env) rows.push_back(&a);
    }
    result.correlations.push_back(correlate(env, rows));
    all.insert(all.end(), rows.begin(), rows.end());
  }
  result.correlations.push_back(correlate("pooled", all));
}

SuiteResult run_suite(const std::vector<SuiteEntry>& entries, const SuiteConfig& config,
                      std::uint64_t seed) {
  if (entries.size() < 3) throw InvalidArgument("a suite needs at least 3 datasets");
  if (config.workers < 1) throw InvalidArgument("workers must be >= 1");
  SuiteResult result;
  result.config_hash = config_hash(config.to_json());
  result.oracle_agents = {"bc", "iql"};
  result.rows.resize(entries.size());

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const auto work = [&]() {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      const SuiteEntry& e = entries[i];
      SuiteRow& row = result.rows[i];
      row.id = e.id;
      row.env = e.env;
      row.quality = e.quality;
      row.seed = e.seed;
      const std::uint64_t stream = derive_seed(seed, i + 1);
      try {
        const auto env = make_env(e.env);
        if (e.dataset.obs_dim != env->obs_dim() || e.dataset.act_dim != env->act_dim()) {
          throw InvalidArgument("dataset does not match environment '" + e.env + "'");
        }
        const ScoreResult s = score_dataset(e.dataset, config.score, derive_seed(stream, 1));
        row.metrics = s.metrics;
        row.bwd = s.bwd;
        Rng oracle_rng(derive_seed(stream, 2));
        row.oracle = oracle_score(e.dataset, *env, config.oracle, oracle_rng);
      } catch (const Error& err) {
        row.failed = true;
        row.error = err.what();
        std::lock_guard<std::mutex> lock(log_mutex);
        std::fprintf(stderr, "suite: dataset %s failed: %s\n", e.id.c_str(), err.what());
      }
    }
  };
  const int n_threads = std::min<int>(config.workers, static_cast<int>(entries.size()));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  aggregate(result);
  return result;
}

Json SuiteResult::to_json() const {
  Json rows_j = Json::array();
  for (const auto& r : rows) {
    Json j = {{"id", r.id}, {"env", r.env}, {"quality", r.quality}, {"seed", r.seed},
              {"failed", r.failed}};
    if (r.failed) {
      j["error"] = r.error;
    } else {
      j["metrics"] = r.metrics.to_json();
      j["bwd"] = r.bwd.to_json();
      j["oracle"] = r.oracle.to_json();
    }
    rows_j.push_back(std::move(j));
  }
  Json avg_j = Json::array();
  for (const auto& a : averaged) {
    avg_j.push_back({{"env", a.env}, {"quality", a.quality}, {"n_seeds", a.n_seeds}, {"values", a.values}});
  }
  Json corr_j = Json::array();
  for (const auto& t : correlations) corr_j.push_back(table_json(t));
  return {{"rows", rows_j},
          {"averaged", avg_j},
          {"correlations", corr_j},
          {"oracle_agents", oracle_agents},
          {"pd_label", "PD (state-marginal approximation)"},
          {"config_hash", config_hash}};
}

SuiteResult SuiteResult::from_json(const Json& j) {
  SuiteResult r;
  try {
    for (const auto& rj : j.at("rows")) {
      SuiteRow row;
      row.id = rj.at("id").get<std::string>();
      row.env = rj.at("env").get<std::string>();
      row.quality = rj.at("quality").get<double>();
      row.seed = rj.at("seed").get<std::uint64_t>();
      row.failed = rj.at("failed").get<bool>();
      if (row.failed) {
        row.error = rj.at("error").get<std::string>();
      } else {
        row.metrics = MetricReport::from_json(rj.at("metrics"));
        row.bwd = BwdEstimate::from_json(rj.at("bwd"));
        row.oracle = OracleScore::from_json(rj.at("oracle"));
      }
      r.rows.push_back(std::move(row));
    }
    for (const auto& aj : j.at("averaged")) {
      r.averaged.push_back({aj.at("env").get<std::string>(), aj.at("quality").get<double>(),
                            aj.at("n_seeds").get<int>(),
                            aj.at("values").get<std::map<std::string, double>>()});
    }
    for (const auto& tj : j.at("correlations")) {
      r.correlations.push_back({tj.at("scope").get<std::string>(), tj.at("n_points").get<int>(),
                                tj.at("pearson").get<std::map<std::string, double>>(),
                                tj.at("spearman").get<std::map<std::string, double>>()});
    }
    r.oracle_agents = j.at("oracle_agents").get<std::vector<std::string>>();
    r.config_hash = j.at("config_hash").get<std::string>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed suite document: ") + e.what(), 0);
  }
  return r;
}

std::string suite_csv(const SuiteResult& result) {
  std::ostringstream out;
  out << metric_csv_header() << '\n';
  for (const auto& r : result.rows) {
    if (r.failed) {
      // flagged rows keep their identity with empty values
      out << r.id << ',' << format_quality(r.quality) << ",,,,,,,," << r.seed << '\n';
      continue;
    }
    MetricCsvRow row{r.id, format_quality(r.quality), r.metrics, r.bwd.value, r.oracle.score, r.seed};
    out << metric_csv_line(row) << '\n';
  }
  for (const auto& a : result.averaged) {
    out << a.env << "_q" << format_quality(a.quality) << ',' << format_quality(a.quality);
    for (const char* m : {"mean_reward", "mean_q", "mean_advantage", "pd_random", "bwd", "oracle"}) {
      out << ',' << format_number(a.values.at(m));
    }
    out << ",," << "mean" << '\n';
  }
  return out.str();
}

}  // namespace bwdq

// Acceptance checks 1-11. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails. `--only 1,4` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bwdq/bwd.hpp"
#include "bwdq/critic.hpp"
#include "bwdq/envgen.hpp"
#include "bwdq/iql.hpp"
#include "bwdq/report.hpp"
#include "cli.hpp"
#include "fixtures.hpp"

using namespace bwdq;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void note(const std::string& msg) { std::fprintf(stderr, "  .. %s\n", msg.c_str()); }

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bwdq");
  args.push_back("--log-level");
  args.push_back("warn");
  return cli::run(args);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bwdq_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double weighted_output(const Network& net, const Matrix& x, const Matrix& up) {
  return (forward(net, x).array() * up.array()).sum();
}

// ---------------------------------------------------------------- 1

Outcome entropic_ot() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1);
  const Vector w = Vector::Constant(16, 1.0 / 16.0);
  double worst = 0.0;
  for (int problem = 0; problem < 20; ++problem) {
    const Matrix cost = testing::random_matrix(16, 16, rng, 0.0, 1.0);
    for (double eps : {0.1, 1.0}) {
      const SinkhornResult s = sinkhorn_reference(cost, w, w, eps, 10000);
      const TableFit fit = train_table_dual(cost, w, w, eps, 3000, 0.05);
      // the dual optimum sits epsilon below the regularized primal
      worst = std::max(worst, std::abs(fit.value + eps - s.primal) / std::abs(s.primal));
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 0.02 && t <= 120.0,
          "max relative error " + fmt("%.2e", worst) + " (limit 2e-2), " + fmt("%.1fs", t) + " (limit 120s)"};
}

// ---------------------------------------------------------------- 2

Outcome zero_cost_dual() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2);
  Dataset d = testing::random_dataset(rng, 2, 2, 400, 8);
  for (auto& t : d.transitions) {
    t.reward = 0.0;
    t.action.setZero();
    t.state /= 100.0;
    t.next_state /= 100.0;
    if (t.next_action) t.next_action->setZero();
  }
  CriticConfig cc;
  cc.steps = 200;
  cc.hidden_dim = 16;
  const Critic critic = train_critic(d, cc, rng).critic;
  // the critic is identically zero and the reference puts all mass on a' = 0,
  // so every cost vanishes
  const RandomPolicy still{2, 0.0};
  double worst = 0.0;
  std::string values;
  for (double eps : {0.5, 1.0}) {
    BwdConfig cfg;
    cfg.ot_steps = 2000;
    cfg.epsilon = eps;
    Rng run(derive_seed(2, static_cast<std::uint64_t>(eps * 10)));
    const BwdTraining t = train_bwd(critic, d, still, cfg, run);
    const BwdEstimate e = estimate_bwd(t.potentials, critic, d, t.split.holdout, still, cfg, run);
    worst = std::max(worst, std::abs(e.value * e.cost_scale + eps));
    values += " eps=" + fmt("%g", eps) + ":" + fmt("%.4f", e.value * e.cost_scale);
  }
  const double t = seconds_since(t0);
  return {worst <= 0.05 && t <= 30.0,
          "dual values" + values + ", max |L + eps| " + fmt("%.4f", worst) + " (limit 0.05), " +
              fmt("%.1fs", t) + " (limit 30s)"};
}

// ---------------------------------------------------------------- 3

Outcome sarsa_critic() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(3);
  double worst = 0.0;
  for (int m = 0; m < 10; ++m) {
    const GridMDP mdp = random_grid_mdp(5, 2, 0.9, rng);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    Matrix beta = Matrix::NullaryExpr(5, 2, [&] { return u(rng); });
    for (int s = 0; s < 5; ++s) beta.row(s) /= beta.row(s).sum();
    const Matrix exact = exact_q_beta(mdp, beta);
    const Dataset d = tabular_dataset(mdp, beta, 200000, 200000, rng);
    const Critic c = train_critic(d, CriticConfig{}, rng).critic;
    Matrix q(5, 2);
    for (int s = 0; s < 5; ++s) {
      for (int a = 0; a < 2; ++a) q(s, a) = q_value(c, Vector(Vector::Unit(5, s)), Vector(Vector::Unit(2, a)));
    }
    const double range = exact.maxCoeff() - exact.minCoeff();
    worst = std::max(worst, (q - exact).cwiseAbs().maxCoeff() / range);
  }
  const double t = seconds_since(t0);
  return {worst <= 0.05 && t <= 300.0,
          "max |Q - Q_exact| / range " + fmt("%.4f", worst) + " (limit 0.05), " + fmt("%.1fs", t) +
              " (limit 300s)"};
}

// ---------------------------------------------------------------- 4

Outcome gradient_suites() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(4);
  testing::GradientReport net_r, dual_r, reg_r;
  const auto merge = [](testing::GradientReport& into, const testing::GradientReport& r) {
    into.max_rel_error = std::max(into.max_rel_error, r.max_rel_error);
    into.probes += r.probes;
  };

  for (int trial = 0; trial < 6; ++trial) {
    Network net = init_network(5, 8, 2, 400 + static_cast<std::uint64_t>(trial));
    net.b1() = testing::random_matrix(8, 1, rng) * 0.3;
    net.b2() = testing::random_matrix(2, 1, rng);
    const Matrix x = testing::random_matrix(7, 5, rng);
    const Matrix up = testing::random_matrix(7, 2, rng);
    const Gradients g = backward(net, x, up);
    merge(net_r, testing::check_gradient(net.params(), g.flat, [&](const Vector& p) {
      Network probe = net;
      probe.params() = p;
      return weighted_output(probe, x, up);
    }, 1e-5));
  }

  Critic critic;
  critic.q_net = init_network(5, 8, 1, 41);
  critic.q_target = critic.q_net;
  critic.standardizer = Standardizer::identity(3);
  critic.trained = true;
  for (int trial = 0; trial < 4; ++trial) {
    BwdConfig cfg;
    cfg.hidden_dim = 8;
    PotentialPair p = init_potentials(3, 2, cfg, critic.standardizer, 0.5, 42);
    p.g_net = init_network(5, 8, 1, 50 + static_cast<std::uint64_t>(trial));
    p.f_net = init_network(5, 8, 1, 60 + static_cast<std::uint64_t>(trial));
    const PairBatch batch = make_pair_batch(critic, testing::random_matrix(6, 3, rng),
                                            testing::random_matrix(6, 2, rng), RandomPolicy{2}, 4, rng);
    const DualResult r = dual_objective(p, batch);
    PotentialPair probe = p;
    merge(dual_r, testing::check_gradient(p.g_net.params(), r.g_grad.flat, [&](const Vector& x) {
      probe.g_net.params() = x;
      return dual_objective(probe, batch).value;
    }, 1e-6));
    probe = p;
    merge(dual_r, testing::check_gradient(p.f_net.params(), r.f_grad.flat, [&](const Vector& x) {
      probe.f_net.params() = x;
      return dual_objective(probe, batch).value;
    }, 1e-6));
  }

  Critic reg_critic;
  reg_critic.q_net = init_network(4, 8, 1, 70);
  reg_critic.q_target = reg_critic.q_net;
  reg_critic.standardizer = Standardizer::identity(2);
  reg_critic.trained = true;
  for (int trial = 0; trial < 8; ++trial) {
    IqlConfig ic;
    ic.hidden_dim = 8;
    const IqlAgent agent = init_iql_agent(2, 2, Standardizer::identity(2), ic, 0.99,
                                          80 + static_cast<std::uint64_t>(trial));
    BwdConfig cfg;
    cfg.hidden_dim = 8;
    PotentialPair p = init_potentials(2, 2, cfg, reg_critic.standardizer, 0.2, 90);
    p.g_net = init_network(4, 8, 1, 91 + static_cast<std::uint64_t>(trial));
    p.f_net = init_network(4, 8, 1, 92 + static_cast<std::uint64_t>(trial));
    const Matrix states = testing::random_matrix(6, 2, rng);
    const std::uint64_t draw = 1000 + static_cast<std::uint64_t>(trial);
    Rng r0(draw);
    const RegTerm term = bwd_reg_term(agent, p, reg_critic, states, RandomPolicy{2}, 3, r0);
    IqlAgent probe = agent;
    merge(reg_r, testing::check_gradient(agent.actor.params(), term.actor_grad.flat, [&](const Vector& x) {
      probe.actor.params() = x;
      Rng r(draw);
      return bwd_reg_term(probe, p, reg_critic, states, RandomPolicy{2}, 3, r).value;
    }, 1e-6));
  }
  const double t = seconds_since(t0);
  const bool pass = net_r.max_rel_error <= 1e-3 && dual_r.max_rel_error <= 1e-3 &&
                    reg_r.max_rel_error <= 1e-3 && net_r.probes >= 200 && dual_r.probes >= 200 &&
                    reg_r.probes >= 200 && t <= 120.0;
  return {pass, "network " + fmt("%.1e", net_r.max_rel_error) + " over " + std::to_string(net_r.probes) +
                    " probes, dual " + fmt("%.1e", dual_r.max_rel_error) + " over " +
                    std::to_string(dual_r.probes) + ", regularizer " + fmt("%.1e", reg_r.max_rel_error) +
                    " over " + std::to_string(reg_r.probes) + " (limit 1e-3, >= 200 each), " +
                    fmt("%.1fs", t) + " (limit 120s)"};
}

// ---------------------------------------------------------------- 5, 6, 7

const std::vector<double> kLevels = {0.0, 0.25, 0.5, 0.75, 1.0};

struct Suite {
  SuiteResult result;
  double seconds = 0.0;
};

const Suite& pointmass_suite() {
  static std::optional<Suite> suite;
  if (suite) return *suite;
  const auto t0 = std::chrono::steady_clock::now();
  PointMassEnv env;
  std::vector<SuiteEntry> entries;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    Rng rng(derive_seed(5, s));
    auto data = generate_dataset(env, kLevels, 20000, 5, rng);
    for (std::size_t i = 0; i < kLevels.size(); ++i) {
      SuiteEntry e;
      e.env = "pointmass";
      e.quality = kLevels[i];
      e.seed = s;
      e.id = "pointmass_q" + fmt("%g", kLevels[i]) + "_s" + std::to_string(s);
      e.dataset = std::move(data[i]);
      entries.push_back(std::move(e));
    }
  }
  note("running the 15-dataset point-mass suite");
  suite = Suite{run_suite(entries, SuiteConfig{}, 5), 0.0};
  suite->seconds = seconds_since(t0);
  return *suite;
}

std::vector<double> averaged(const SuiteResult& r, const std::string& metric) {
  std::vector<double> out;
  for (const auto& a : r.averaged) out.push_back(a.values.at(metric));
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.3f", x);
  return s;
}

Outcome bwd_monotone() {
  const Suite& s = pointmass_suite();
  for (const auto& row : s.result.rows) {
    if (row.failed) return {false, "dataset " + row.id + " failed: " + row.error};
  }
  const auto bwd = averaged(s.result, "bwd");
  bool increasing = bwd.size() == kLevels.size();
  for (std::size_t i = 1; increasing && i < bwd.size(); ++i) increasing = bwd[i] > bwd[i - 1];
  bool ends = true;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    double lo = 0.0, hi = 0.0;
    for (const auto& row : s.result.rows) {
      if (row.seed != seed) continue;
      if (row.quality == 0.0) lo = row.bwd.value;
      if (row.quality == 1.0) hi = row.bwd.value;
    }
    ends = ends && lo < hi;
  }
  const double rho = spearman(kLevels, bwd);
  return {increasing && rho == 1.0 && ends && s.seconds <= 1800.0,
          "seed-averaged BWD [" + join(bwd) + "], spearman " + fmt("%.3f", rho) +
              (ends ? ", per-seed BWD(0) < BWD(1)" : ", per-seed BWD(0) >= BWD(1) on some seed") +
              ", suite " + fmt("%.0fs", s.seconds) + " (limit 1800s)"};
}

Outcome correlation_ordering() {
  const Suite& s = pointmass_suite();
  const CorrelationTable& t = s.result.table("pointmass");
  if (!t.pearson.count("bwd") || !t.pearson.count("mean_reward")) {
    return {false, "correlation undefined on the suite"};
  }
  const double bwd = t.pearson.at("bwd");
  const double reward = t.pearson.at("mean_reward");
  std::string all;
  bool best = true;
  for (const auto& [name, v] : t.pearson) {
    all += " " + name + "=" + fmt("%.3f", v);
    if (name != "bwd" && v > bwd) best = false;
  }
  return {bwd >= reward - 0.05 && bwd >= 0.8,
          "pearson with oracle:" + all + (best ? "; bwd highest" : "; bwd not highest (reported only)")};
}

Outcome baseline_sanity() {
  const Suite& s = pointmass_suite();
  const auto reward = averaged(s.result, "mean_reward");
  const auto q = averaged(s.result, "mean_q");
  const auto pd = averaged(s.result, "pd_random");
  const double rho_r = spearman(kLevels, reward);
  const double rho_q = spearman(kLevels, q);
  bool pd_sign = true;
  double min_abs_above = INFINITY, max_abs = 0.0;
  for (std::size_t i = 1; i < pd.size(); ++i) {
    pd_sign = pd_sign && pd[i] <= 0.0;
    min_abs_above = std::min(min_abs_above, std::abs(pd[i]));
  }
  for (double v : pd) max_abs = std::max(max_abs, std::abs(v));
  // near-minimal: within 5% of the largest magnitude of the smallest one above level 0
  const bool pd_small = std::abs(pd[0]) <= min_abs_above + 0.05 * max_abs;
  return {rho_r == 1.0 && rho_q == 1.0 && pd_sign && pd_small,
          "spearman(level, mean_reward) " + fmt("%.3f", rho_r) + ", spearman(level, mean_q) " +
              fmt("%.3f", rho_q) + ", pd_random [" + join(pd) + "]"};
}

// ---------------------------------------------------------------- 8

Outcome reduction_identity() {
  const fs::path dir = scratch("c8");
  if (cli({"generate", "--env", "pointmass", "--levels", "0.5", "--n", "20000", "--seeds", "1",
           "--seed", "8", "--out", (dir / "data").string()}) != 0) {
    return {false, "generate failed"};
  }
  const std::string data = (dir / "data" / "pointmass_q0.5_s1.bwds").string();
  int identical = 0;
  for (int seed = 1; seed <= 3; ++seed) {
    const std::vector<std::string> base = {"train", "--data", data, "--steps", "2000", "--eval-every",
                                           "500", "--seed", std::to_string(seed)};
    auto plain = base, zero = base;
    plain.insert(plain.end(), {"--out", (dir / ("plain" + std::to_string(seed))).string()});
    zero.insert(zero.end(), {"--bwd", "--lambda", "0", "--out", (dir / ("zero" + std::to_string(seed))).string()});
    if (cli(plain) != 0 || cli(zero) != 0) return {false, "train failed for seed " + std::to_string(seed)};
    const std::string a = slurp(dir / ("plain" + std::to_string(seed)) / "curve.csv");
    const std::string b = slurp(dir / ("zero" + std::to_string(seed)) / "curve.csv");
    identical += !a.empty() && a == b;
  }
  fs::remove_all(dir);
  return {identical == 3, std::to_string(identical) + "/3 seeds byte-identical curve.csv"};
}

// ---------------------------------------------------------------- 9

Outcome regularization_benefit() {
  struct Task {
    std::string env;
    double plain = 0.0;
    double reg = 0.0;
  };
  std::vector<Task> tasks = {{"pointmass"}, {"pointmass4d"}, {"grid"}};
  for (auto& task : tasks) {
    const auto env = make_env(task.env);
    Rng data_rng(derive_seed(9, 1));
    const Dataset d = generate_dataset(*env, {0.5}, 20000, 5, data_rng)[0];
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Rng a(seed), b(seed);
      const IqlRun plain = train_iql(d, *env, std::nullopt, IqlConfig{}, a);
      const IqlRun reg = train_iql(d, *env, RegConfig{}, IqlConfig{}, b);
      task.plain += plain.curve.back().normalized_return / 3.0;
      task.reg += reg.curve.back().normalized_return / 3.0;
      note(task.env + " seed " + std::to_string(seed) + ": iql " +
           fmt("%.2f", plain.curve.back().normalized_return) + ", iql+bwd " +
           fmt("%.2f", reg.curve.back().normalized_return));
    }
  }
  const bool within = tasks[0].reg >= tasks[0].plain - 5.0;
  bool any_better = false;
  std::string detail;
  for (const auto& t : tasks) {
    any_better = any_better || t.reg > t.plain;
    detail += " " + t.env + " " + fmt("%.2f", t.reg) + " vs " + fmt("%.2f", t.plain) + ";";
  }
  return {within && any_better, "seed-averaged final normalized return, iql+bwd vs iql:" + detail};
}

// ---------------------------------------------------------------- 10

Outcome determinism_and_format() {
  const fs::path dir = scratch("c10");
  bool cli_ok = true;
  std::string which;
  for (const std::string run : {"a", "b"}) {
    const fs::path out = dir / run;
    const std::vector<std::vector<std::string>> commands = {
        {"generate", "--env", "pointmass", "--levels", "0,0.5,1", "--n", "2000", "--seeds", "1",
         "--seed", "10", "--out", (out / "generate").string()},
        {"score", "--data", (out / "generate" / "pointmass_q0.5_s1.bwds").string(), "--critic-steps",
         "500", "--value-steps", "300", "--ot-steps", "500", "--seed", "10", "--out", (out / "score").string()},
        {"correlate", "--manifest", (out / "generate" / "manifest.json").string(), "--critic-steps",
         "300", "--value-steps", "200", "--ot-steps", "300", "--oracle-steps", "300", "--bc-steps", "300",
         "--hidden", "32", "--seed", "10", "--out", (out / "correlate").string()},
        {"train", "--data", (out / "generate" / "pointmass_q0.5_s1.bwds").string(), "--steps", "500",
         "--eval-every", "250", "--bwd", "--critic-steps", "300", "--seed", "10", "--out",
         (out / "train").string()}};
    for (const auto& c : commands) {
      if (cli(c) != 0) {
        cli_ok = false;
        which += " " + c[0] + "(exit)";
      }
    }
  }
  // manifests and configs must not mention the run directory
  for (const std::string cmd : {"generate", "score", "correlate", "train"}) {
    const bool same = fs::exists(dir / "a" / cmd) && [&] {
      // paths passed on the command line differ between the runs, so compare
      // every file except config.json and check config.json without "data"/"manifest"
      for (const auto& e : fs::recursive_directory_iterator(dir / "a" / cmd)) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), dir / "a" / cmd);
        std::string x = slurp(e.path()), y = slurp(dir / "b" / cmd / rel);
        if (rel == "config.json" || rel == "score.json") {
          for (std::string* s : {&x, &y}) {
            Json j = Json::parse(*s);
            if (j.contains("params")) {
              j["params"].erase("data");
              j["params"].erase("manifest");
              j.erase("config_hash");
            }
            *s = j.dump();
          }
        }
        if (x != y) return false;
      }
      return true;
    }();
    if (!same) {
      cli_ok = false;
      which += " " + cmd;
    }
  }
  fs::remove_all(dir);

  Rng rng(10);
  int round_trips = 0;
  std::uniform_int_distribution<int> dim(1, 6);
  for (int i = 0; i < 1000; ++i) {
    const Dataset d = testing::random_dataset(rng, dim(rng), dim(rng), 1 + i % 7, 9);
    std::stringstream first;
    save(d, first);
    const std::string bytes = first.str();
    std::stringstream in(bytes);
    const Dataset back = load(in);
    std::stringstream second;
    save(back, second);
    const bool exact = back.obs_dim == d.obs_dim && back.act_dim == d.act_dim &&
                       std::bit_cast<std::uint64_t>(back.discount) == std::bit_cast<std::uint64_t>(d.discount) &&
                       back.trajectory_starts == d.trajectory_starts && back.transitions == d.transitions &&
                       second.str() == bytes;
    round_trips += exact;
  }
  return {cli_ok && round_trips == 1000,
          std::string(cli_ok ? "generate, score, correlate, train byte-identical across reruns"
                             : "non-reproducible:" + which) +
              "; BWDS round trips bit-exact " + std::to_string(round_trips) + "/1000"};
}

// ---------------------------------------------------------------- 11

Outcome triage_cost() {
  const fs::path dir = scratch("c11");
  if (cli({"generate", "--env", "pointmass", "--levels", "0.5", "--n", "20000", "--seeds", "1",
           "--seed", "11", "--out", (dir / "data").string()}) != 0) {
    return {false, "generate failed"};
  }
  const std::string data = (dir / "data" / "pointmass_q0.5_s1.bwds").string();
  auto t0 = std::chrono::steady_clock::now();
  const int score = cli({"score", "--data", data, "--out", (dir / "score").string()});
  const double score_s = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  const int train = cli({"train", "--data", data, "--steps", "50000", "--out", (dir / "train").string()});
  const double train_s = seconds_since(t0);
  fs::remove_all(dir);
  if (score != 0 || train != 0) return {false, "score or train failed"};
  const double ratio = score_s / train_s;
  return {ratio <= 0.2, "score " + fmt("%.1fs", score_s) + ", train " + fmt("%.1fs", train_s) +
                            ", ratio " + fmt("%.3f", ratio) + " (limit 0.2)"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--only" && i + 1 < argc) {
      std::stringstream in(argv[++i]);
      std::string item;
      while (std::getline(in, item, ',')) only.insert(std::stoi(item));
    }
  }
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, entropic_ot},          {2, zero_cost_dual},        {3, sarsa_critic},
      {4, gradient_suites},      {5, bwd_monotone},          {6, correlation_ordering},
      {7, baseline_sanity},      {8, reduction_identity},    {9, regularization_benefit},
      {10, determinism_and_format}, {11, triage_cost}};
  int failed = 0;
  for (const auto& [id, check] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", id, seconds_since(t0),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

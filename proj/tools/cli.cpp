#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "bwdq/config.hpp"
#include "bwdq/dataset.hpp"
#include "bwdq/envgen.hpp"
#include "bwdq/errors.hpp"
#include "bwdq/iql.hpp"
#include "bwdq/report.hpp"

namespace bwdq::cli {

namespace fs = std::filesystem;

namespace {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

Level g_level = Level::info;
const auto g_start = std::chrono::steady_clock::now();

void log(Level level, const std::string& msg) {
  if (level > g_level) return;
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - g_start).count();
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[bwdq %8.2fs %s] %s\n", t, names[static_cast<int>(level)], msg.c_str());
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Kind { Int, Real, OptReal, Bool, String, RealList, StringList };

struct Param {
  std::string key;
  std::string flag;
  Kind kind = Kind::Int;
  Json value;
  std::string raw;
  bool set = false;
  CLI::Option* opt = nullptr;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_real(const std::string& flag, const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw UsageError(flag + ": expected a number, got '" + s + "'");
  return v;
}

Json parse_raw(const Param& p) {
  switch (p.kind) {
    case Kind::Int: {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(p.raw, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != p.raw.size()) {
        throw UsageError(p.flag + ": expected an integer, got '" + p.raw + "'");
      }
      return v;
    }
    case Kind::Real:
    case Kind::OptReal:
      return parse_real(p.flag, p.raw);
    case Kind::Bool:
      return true;
    case Kind::String:
      return p.raw;
    case Kind::RealList: {
      Json a = Json::array();
      for (const auto& item : split_list(p.raw)) a.push_back(parse_real(p.flag, item));
      return a;
    }
    case Kind::StringList: {
      Json a = Json::array();
      for (const auto& item : split_list(p.raw)) a.push_back(item);
      return a;
    }
  }
  return nullptr;
}

bool matches(Kind kind, const Json& v) {
  switch (kind) {
    case Kind::Int: return v.is_number_integer();
    case Kind::Real: return v.is_number();
    case Kind::OptReal: return v.is_null() || v.is_number();
    case Kind::Bool: return v.is_boolean();
    case Kind::String: return v.is_string();
    case Kind::RealList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_number(); });
    case Kind::StringList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_string(); });
  }
  return false;
}

// Flat parameter table for one command. Precedence: flag, then config file,
// then default.
class Params {
 public:
  void add(CLI::App* app, const std::string& name, Kind kind, Json def, const std::string& help) {
    Param& p = params_.emplace_back();
    p.flag = "--" + name;
    p.key = name;
    std::replace(p.key.begin(), p.key.end(), '-', '_');
    p.kind = kind;
    p.value = std::move(def);
    if (kind == Kind::Bool) {
      p.opt = app->add_flag(p.flag, p.set, help);
    } else {
      p.opt = app->add_option(p.flag, p.raw, help);
    }
  }

  bool has(const std::string& key) const {
    return std::any_of(params_.begin(), params_.end(), [&](const Param& p) { return p.key == key; });
  }

  void resolve(const Json& file, Json& out) {
    for (Param& p : params_) {
      Json v = p.value;
      if (file.contains(p.key)) {
        v = file.at(p.key);
        if (!matches(p.kind, v)) throw UsageError("config file: wrong type for '" + p.key + "'");
      }
      if (p.opt->count() > 0) v = parse_raw(p);
      out[p.key] = std::move(v);
    }
  }

 private:
  std::deque<Param> params_;
};

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

std::int64_t get_int(const Json& p, const std::string& key, std::int64_t min) {
  const auto v = p.at(key).get<std::int64_t>();
  if (v < min) {
    throw InvalidArgument(flag_name(key) + " must be >= " + std::to_string(min) + ", got " + std::to_string(v));
  }
  return v;
}

int get_i32(const Json& p, const std::string& key, std::int64_t min) {
  const auto v = get_int(p, key, min);
  if (v > std::numeric_limits<int>::max()) throw InvalidArgument(flag_name(key) + " is too large");
  return static_cast<int>(v);
}

std::optional<double> get_opt(const Json& p, const std::string& key) {
  if (p.at(key).is_null()) return std::nullopt;
  return p.at(key).get<double>();
}

std::string format_level(double q) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", q);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
  if (!out) throw UsageError("failed writing " + path.string());
}

Dataset load_dataset(const std::string& path) {
  if (path.empty()) throw UsageError("--data is required");
  if (!fs::is_regular_file(path)) throw UsageError("dataset file not found: " + path);
  return load(fs::path(path));
}

// BWDS files carry no metadata; generate records env and quality in the
// manifest next to them.
struct FileInfo {
  std::string env;
  std::string quality;
};

FileInfo manifest_info(const std::string& data) {
  FileInfo info;
  const fs::path manifest = fs::path(data).parent_path() / "manifest.json";
  if (!fs::is_regular_file(manifest)) return info;
  try {
    std::ifstream in(manifest);
    const Json m = Json::parse(in);
    const std::string name = fs::path(data).filename().string();
    for (const auto& f : m.at("files")) {
      if (f.at("file").get<std::string>() != name) continue;
      info.env = f.at("env").get<std::string>();
      info.quality = format_level(f.at("quality").get<double>());
    }
  } catch (const Json::exception& e) {
    throw FormatError("malformed manifest " + manifest.string() + ": " + e.what(), 0);
  }
  return info;
}

void write_config(const fs::path& out, const std::string& command, const Json& params,
                  const Json& resolved) {
  Json recorded = params;
  // where the outputs go does not change them
  recorded.erase("out");
  recorded.erase("log_level");
  Json doc = {{"command", command}, {"params", recorded}, {"resolved", resolved}};
  doc["config_hash"] = config_hash(Json{{"command", command}, {"params", recorded}});
  write_text(out / "config.json", doc.dump(2) + "\n");
}

ScoreConfig score_config(const Json& p) {
  ScoreConfig c;
  const int batch = get_i32(p, "batch_size", 1);
  const int hidden = get_i32(p, "hidden", 1);
  c.critic.steps = get_i32(p, "critic_steps", 1);
  c.critic.batch_size = batch;
  c.critic.hidden_dim = hidden;
  c.critic.discount = get_opt(p, "gamma");
  c.value.steps = get_i32(p, "value_steps", 1);
  c.value.batch_size = batch;
  c.value.hidden_dim = hidden;
  c.metrics.n_samples = static_cast<std::size_t>(get_int(p, "subsample", 1));
  c.bwd.ot_steps = get_i32(p, "ot_steps", 1);
  c.bwd.batch_size = batch;
  c.bwd.hidden_dim = hidden;
  c.bwd.k_negatives = get_i32(p, "k_negatives", 1);
  c.bwd.epsilon = p.at("epsilon").get<double>();
  c.bwd.cost_scale = get_opt(p, "cost_scale");
  return c;
}

void add_score_params(CLI::App* app, Params& ps) {
  ps.add(app, "gamma", Kind::OptReal, nullptr, "Discount override for the critic");
  ps.add(app, "epsilon", Kind::Real, 1.0, "Entropic regularization weight");
  ps.add(app, "cost-scale", Kind::OptReal, nullptr, "Cost multiplier (derived from the critic when unset)");
  ps.add(app, "k-negatives", Kind::Int, 8, "Random actions per state");
  ps.add(app, "critic-steps", Kind::Int, 10000, "Critic training steps");
  ps.add(app, "value-steps", Kind::Int, 5000, "Value-head training steps");
  ps.add(app, "ot-steps", Kind::Int, 10000, "Potential training steps");
  ps.add(app, "batch-size", Kind::Int, 256, "Minibatch size");
  ps.add(app, "hidden", Kind::Int, 256, "Hidden width of every network");
  ps.add(app, "subsample", Kind::Int, 20000, "Transitions sampled per metric");
}

// ---------------------------------------------------------------- commands

int cmd_generate(const Json& p) {
  const fs::path out = p.at("out").get<std::string>();
  const auto env = make_env(p.at("env").get<std::string>());
  const auto levels = p.at("levels").get<std::vector<double>>();
  if (levels.empty()) throw InvalidArgument("--levels is empty");
  for (double q : levels) {
    if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quality level " + format_level(q) + " outside [0, 1]");
  }
  const auto n = static_cast<std::size_t>(get_int(p, "n", 1));
  const int seeds = get_i32(p, "seeds", 1);
  const int mix = get_i32(p, "mix", 1);
  const auto gamma = get_opt(p, "gamma");
  if (gamma && !(*gamma >= 0.0 && *gamma < 1.0)) throw InvalidArgument("--gamma must lie in [0, 1)");
  ensure_dir(out);

  const auto seed = p.at("seed").get<std::uint64_t>();
  Json files = Json::array();
  for (int s = 1; s <= seeds; ++s) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    auto datasets = generate_dataset(*env, levels, n, mix, rng);
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (gamma) datasets[i].discount = *gamma;
      const std::string name = env->name() + "_q" + format_level(levels[i]) + "_s" + std::to_string(s) + ".bwds";
      save(datasets[i], out / name);
      files.push_back({{"file", name},
                       {"env", env->name()},
                       {"quality", levels[i]},
                       {"seed", s},
                       {"transitions", datasets[i].size()}});
      log(Level::info, "wrote " + (out / name).string());
    }
  }
  const Json manifest = {{"env", env->name()}, {"levels", levels}, {"files", files}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  write_config(out, "generate", p, Json{{"transitions_per_level", n}, {"policy_instances", mix}});
  return kOk;
}

int cmd_score(const Json& p) {
  const fs::path out = p.at("out").get<std::string>();
  const std::string data = p.at("data").get<std::string>();
  const ScoreConfig cfg = score_config(p);
  const Dataset d = load_dataset(data);
  ensure_dir(out);
  const auto seed = p.at("seed").get<std::uint64_t>();
  log(Level::info, "scoring " + data + " (" + std::to_string(d.size()) + " transitions)");
  const ScoreResult r = score_dataset(d, cfg, derive_seed(seed, 1));

  const std::string id = fs::path(data).stem().string();
  const std::string quality = manifest_info(data).quality;
  Json doc = {{"dataset", id},
              {"quality_meta", quality},
              {"transitions", d.size()},
              {"n_samples", r.metrics.n_samples},
              {"metrics", r.metrics.to_json()},
              {"bwd", r.bwd.to_json()},
              {"pd_label", "PD (state-marginal approximation)"}};
  write_text(out / "score.json", doc.dump(2) + "\n");
  MetricCsvRow row{id, quality, r.metrics, r.bwd.value, std::nullopt, seed};
  write_text(out / "score.csv", metric_csv_header() + "\n" + metric_csv_line(row) + "\n");
  write_config(out, "score", p, cfg.to_json());
  log(Level::info, "bwd " + std::to_string(r.bwd.value) + " +- " + std::to_string(r.bwd.std_error));
  return kOk;
}

std::vector<SuiteEntry> read_manifests(const std::vector<std::string>& paths) {
  std::vector<SuiteEntry> entries;
  for (const auto& path : paths) {
    if (!fs::is_regular_file(path)) throw UsageError("manifest not found: " + path);
    std::ifstream in(path);
    Json m;
    try {
      m = Json::parse(in);
      for (const auto& f : m.at("files")) {
        SuiteEntry e;
        const std::string file = f.at("file").get<std::string>();
        e.id = fs::path(file).stem().string();
        e.env = f.at("env").get<std::string>();
        e.quality = f.at("quality").get<double>();
        e.seed = f.at("seed").get<std::uint64_t>();
        e.dataset = load_dataset((fs::path(path).parent_path() / file).string());
        entries.push_back(std::move(e));
      }
    } catch (const Json::exception& e) {
      throw FormatError("malformed manifest " + path + ": " + e.what(), 0);
    }
  }
  return entries;
}

int cmd_correlate(const Json& p) {
  const fs::path out = p.at("out").get<std::string>();
  SuiteConfig cfg;
  cfg.score = score_config(p);
  cfg.oracle.iql.total_steps = get_i32(p, "oracle_steps", 1);
  cfg.oracle.iql.eval_every = cfg.oracle.iql.total_steps;
  cfg.oracle.iql.batch_size = cfg.score.critic.batch_size;
  cfg.oracle.iql.hidden_dim = cfg.score.critic.hidden_dim;
  cfg.oracle.bc.steps = get_i32(p, "bc_steps", 1);
  cfg.oracle.bc.batch_size = cfg.score.critic.batch_size;
  cfg.oracle.bc.hidden_dim = cfg.score.critic.hidden_dim;
  cfg.oracle.eval_episodes = get_i32(p, "oracle_episodes", 1);
  cfg.workers = get_i32(p, "workers", 1);
  const auto manifests = p.at("manifest").get<std::vector<std::string>>();
  if (manifests.empty()) throw UsageError("--manifest is required");
  const auto entries = read_manifests(manifests);
  ensure_dir(out);
  log(Level::info, "suite of " + std::to_string(entries.size()) + " datasets on " +
                       std::to_string(cfg.workers) + " worker(s)");
  const auto seed = p.at("seed").get<std::uint64_t>();
  const SuiteResult r = run_suite(entries, cfg, derive_seed(seed, 2));
  for (const auto& row : r.rows) {
    if (row.failed) log(Level::warn, "dataset " + row.id + " failed: " + row.error);
  }
  write_text(out / "suite.json", r.to_json().dump(2) + "\n");
  write_text(out / "suite.csv", suite_csv(r));
  write_config(out, "correlate", p, cfg.to_json());
  const auto& pooled = r.table("pooled");
  for (const auto& [name, v] : pooled.pearson) log(Level::info, "pearson(" + name + ", oracle) = " + std::to_string(v));
  return kOk;
}

int cmd_train(const Json& p) {
  const fs::path out = p.at("out").get<std::string>();
  const double lambda = p.at("lambda").get<double>();
  if (!(lambda >= 0.0)) throw InvalidArgument("--lambda must be >= 0");
  IqlConfig cfg;
  cfg.total_steps = get_i32(p, "steps", 1);
  cfg.batch_size = get_i32(p, "batch_size", 1);
  cfg.hidden_dim = get_i32(p, "hidden", 1);
  cfg.eval_every = get_i32(p, "eval_every", 1);
  cfg.eval_episodes = get_i32(p, "eval_episodes", 1);
  cfg.discount = get_opt(p, "gamma");
  std::optional<RegConfig> reg;
  if (p.at("bwd").get<bool>()) {
    RegConfig r;
    r.lambda_bwd = lambda;
    r.bwd.epsilon = p.at("epsilon").get<double>();
    r.bwd.cost_scale = get_opt(p, "cost_scale");
    r.bwd.k_negatives = get_i32(p, "k_negatives", 1);
    r.bwd.batch_size = cfg.batch_size;
    r.bwd.hidden_dim = cfg.hidden_dim;
    r.critic.steps = get_i32(p, "critic_steps", 1);
    r.critic.batch_size = cfg.batch_size;
    r.critic.hidden_dim = cfg.hidden_dim;
    r.critic.discount = cfg.discount;
    reg = r;
  }
  const std::string data = p.at("data").get<std::string>();
  const Dataset d = load_dataset(data);
  std::string env_name = p.at("env").get<std::string>();
  if (env_name.empty()) env_name = manifest_info(data).env;
  if (env_name.empty()) throw UsageError("no manifest entry for " + data + "; pass --env");
  const auto env = make_env(env_name);
  ensure_dir(out);
  const auto seed = p.at("seed").get<std::uint64_t>();
  Rng rng(derive_seed(seed, 3));
  log(Level::info, std::string("training ") + (reg ? "iql with bwd" : "iql") + " on " + data);
  const IqlRun run = train_iql(d, *env, reg, cfg, rng);
  write_text(out / "curve.csv", curve_csv(run, seed));
  save_agent(run.agent, out / "agent");
  Json summary = {{"variant", run.variant},
                  {"env", env_name},
                  {"random_return", run.reference.random_return},
                  {"expert_return", run.reference.expert_return},
                  {"final_step", run.curve.empty() ? 0 : run.curve.back().step},
                  {"final_normalized_return", run.curve.empty() ? 0.0 : run.curve.back().normalized_return},
                  {"config_hash", run.config_hash}};
  write_text(out / "run.json", summary.dump(2) + "\n");
  Json resolved = {{"iql", cfg.to_json()}};
  resolved["reg"] = reg ? reg->to_json() : Json(nullptr);
  write_config(out, "train", p, resolved);
  if (!run.curve.empty()) {
    log(Level::info, "final normalized return " + std::to_string(run.curve.back().normalized_return));
  }
  return kOk;
}

Json read_config_file(const std::string& path) {
  if (path.empty()) return Json::object();
  if (!fs::is_regular_file(path)) throw UsageError("config file not found: " + path);
  std::ifstream in(path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file " + path + " must hold a JSON object");
  return j;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Offline RL dataset quality estimation with the Bellman-Wasserstein distance"};
  app.name("bwdq");
  app.require_subcommand(1);
  app.fallthrough();
  Params global;
  global.add(&app, "seed", Kind::Int, 0, "Global seed");
  global.add(&app, "out", Kind::String, ".", "Output directory");
  global.add(&app, "log-level", Kind::String, "info", "error, warn, info or debug");
  std::string config_path;
  app.add_option("--config", config_path, "JSON file of parameters keyed like the flags");

  Params gen_ps, score_ps, corr_ps, train_ps;
  auto* gen = app.add_subcommand("generate", "Write graded synthetic datasets and a manifest");
  gen_ps.add(gen, "env", Kind::String, "pointmass", "pointmass, pointmass4d or grid");
  gen_ps.add(gen, "levels", Kind::RealList, Json{0.0, 0.25, 0.5, 0.75, 1.0}, "Comma-separated quality levels");
  gen_ps.add(gen, "n", Kind::Int, 20000, "Transitions per dataset");
  gen_ps.add(gen, "seeds", Kind::Int, 3, "Datasets per level");
  gen_ps.add(gen, "mix", Kind::Int, 5, "Policy instances mixed into each dataset");
  gen_ps.add(gen, "gamma", Kind::OptReal, nullptr, "Discount recorded in the datasets");

  auto* score = app.add_subcommand("score", "Baseline metrics and BWD of one dataset");
  score_ps.add(score, "data", Kind::String, "", "Dataset file (.bwds)");
  add_score_params(score, score_ps);

  auto* corr = app.add_subcommand("correlate", "Score a suite and correlate with the oracle");
  corr_ps.add(corr, "manifest", Kind::StringList, Json::array(), "Comma-separated manifest files");
  add_score_params(corr, corr_ps);
  corr_ps.add(corr, "oracle-steps", Kind::Int, 10000, "IQL steps of the oracle agent");
  corr_ps.add(corr, "bc-steps", Kind::Int, 5000, "Behaviour-cloning steps of the oracle agent");
  corr_ps.add(corr, "oracle-episodes", Kind::Int, 20, "Evaluation episodes per oracle agent");
  corr_ps.add(corr, "workers", Kind::Int, 1, "Worker threads");

  auto* train = app.add_subcommand("train", "Train IQL, optionally with the BWD regularizer");
  train_ps.add(train, "data", Kind::String, "", "Dataset file (.bwds)");
  train_ps.add(train, "env", Kind::String, "", "Environment (defaults to the manifest entry of --data)");
  train_ps.add(train, "steps", Kind::Int, 50000, "Training steps");
  train_ps.add(train, "eval-every", Kind::Int, 5000, "Steps between evaluations");
  train_ps.add(train, "eval-episodes", Kind::Int, 10, "Episodes per evaluation");
  train_ps.add(train, "batch-size", Kind::Int, 256, "Minibatch size");
  train_ps.add(train, "hidden", Kind::Int, 256, "Hidden width of every network");
  train_ps.add(train, "gamma", Kind::OptReal, nullptr, "Discount override");
  train_ps.add(train, "bwd", Kind::Bool, false, "Add the BWD regularizer");
  train_ps.add(train, "lambda", Kind::Real, 1.0, "Regularizer weight");
  train_ps.add(train, "epsilon", Kind::Real, 1.0, "Entropic regularization weight");
  train_ps.add(train, "cost-scale", Kind::OptReal, nullptr, "Cost multiplier (derived from the critic when unset)");
  train_ps.add(train, "k-negatives", Kind::Int, 8, "Random actions per state");
  train_ps.add(train, "critic-steps", Kind::Int, 10000, "Steps of the regularizer's critic");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  std::string command;
  Params* ps = nullptr;
  if (gen->parsed()) {
    command = "generate";
    ps = &gen_ps;
  } else if (score->parsed()) {
    command = "score";
    ps = &score_ps;
  } else if (corr->parsed()) {
    command = "correlate";
    ps = &corr_ps;
  } else {
    command = "train";
    ps = &train_ps;
  }

  try {
    Json file = read_config_file(config_path);
    for (const auto& [key, value] : file.items()) {
      if (!ps->has(key) && key != "seed" && key != "out" && key != "log_level") {
        throw UsageError("config file: unknown parameter '" + key + "' for " + command);
      }
    }
    Json params = Json::object();
    global.resolve(file, params);
    ps->resolve(file, params);
    const std::string level = params.at("log_level").get<std::string>();
    if (level == "error") g_level = Level::error;
    else if (level == "warn") g_level = Level::warn;
    else if (level == "info") g_level = Level::info;
    else if (level == "debug") g_level = Level::debug;
    else throw UsageError("--log-level must be error, warn, info or debug");
    if (params.at("seed").get<std::int64_t>() < 0) throw UsageError("--seed must be >= 0");
    log(Level::debug, "resolved parameters " + params.dump());

    if (command == "generate") return cmd_generate(params);
    if (command == "score") return cmd_score(params);
    if (command == "correlate") return cmd_correlate(params);
    return cmd_train(params);
  } catch (const UsageError& e) {
    log(Level::error, e.what());
    return kUsage;
  } catch (const InvalidArgument& e) {
    log(Level::error, e.what());
    return kUsage;
  } catch (const FormatError& e) {
    log(Level::error, e.what());
    return kFormat;
  } catch (const NumericError& e) {
    log(Level::error, e.what());
    return kNumeric;
  } catch (const UndefinedCorrelation& e) {
    log(Level::error, e.what());
    return kNumeric;
  } catch (const Json::exception& e) {
    log(Level::error, std::string("bad parameter value: ") + e.what());
    return kUsage;
  } catch (const std::exception& e) {
    log(Level::error, e.what());
    return kFailure;
  }
}

}  // namespace bwdq::cli

#include "bwdq/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "bwdq/binio.hpp"
#include "bwdq/errors.hpp"

namespace bwdq {

namespace {

constexpr std::uint32_t kFormatVersion = 1;

bool same(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool in_action_box(const Vector& a) {
  return a.allFinite() && a.minCoeff() >= -1.0 && a.maxCoeff() <= 1.0;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_json_array(const nlohmann::json& j, int expected, const char* field,
                       std::uint64_t line) {
  if (!j.is_array() || static_cast<int>(j.size()) != expected) {
    throw FormatError(std::string("field '") + field + "' has wrong length", line);
  }
  Vector v(expected);
  for (int i = 0; i < expected; ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace

std::pair<std::size_t, std::size_t> Dataset::trajectory_range(std::size_t k) const {
  const std::size_t begin = trajectory_starts.at(k);
  const std::size_t end =
      k + 1 < trajectory_starts.size() ? trajectory_starts[k + 1] : transitions.size();
  return {begin, end};
}

void Dataset::append_trajectory(std::vector<Transition> trajectory) {
  if (trajectory.empty()) return;
  trajectory_starts.push_back(transitions.size());
  for (auto& t : trajectory) transitions.push_back(std::move(t));
}

void validate(const Dataset& d) {
  if (d.obs_dim < 1 || d.act_dim < 1) throw InvalidArgument("dataset dims must be positive");
  if (!(d.discount > 0.0 && d.discount < 1.0)) {
    throw InvalidArgument("discount must lie in (0, 1)");
  }
  const std::size_t n = d.transitions.size();
  if (n == 0) {
    if (!d.trajectory_starts.empty()) throw InvalidArgument("empty dataset with trajectories");
    return;
  }
  if (d.trajectory_starts.empty() || d.trajectory_starts.front() != 0) {
    throw InvalidArgument("trajectory bounds must start at index 0");
  }
  for (std::size_t k = 1; k < d.trajectory_starts.size(); ++k) {
    if (d.trajectory_starts[k] <= d.trajectory_starts[k - 1] || d.trajectory_starts[k] >= n) {
      throw InvalidArgument("trajectory bounds overlap or exceed the transition list");
    }
  }
  std::vector<bool> is_last(n, false);
  for (std::size_t k = 0; k < d.num_trajectories(); ++k) {
    is_last[d.trajectory_range(k).second - 1] = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& t = d.transitions[i];
    if (t.state.size() != d.obs_dim || t.next_state.size() != d.obs_dim ||
        t.action.size() != d.act_dim ||
        (t.next_action && t.next_action->size() != d.act_dim)) {
      throw InvalidArgument("transition " + std::to_string(i) + " has wrong vector length");
    }
    if (!in_action_box(t.action) || (t.next_action && !in_action_box(*t.next_action))) {
      throw InvalidArgument("transition " + std::to_string(i) + " has action outside [-1, 1]");
    }
    if (!t.next_action && !t.terminal && !is_last[i]) {
      throw InvalidArgument("transition " + std::to_string(i) +
                            " lacks next_action in the middle of a trajectory");
    }
  }
}

Vector RandomPolicy::sample(Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector a(act_dim);
  for (int i = 0; i < act_dim; ++i) a(i) = std::clamp(std * normal(rng), clip_low, clip_high);
  return a;
}

bool operator==(const Transition& a, const Transition& b) {
  if (a.next_action.has_value() != b.next_action.has_value()) return false;
  if (a.next_action && !same(*a.next_action, *b.next_action)) return false;
  return same(a.state, b.state) && same(a.action, b.action) &&
         std::bit_cast<std::uint64_t>(a.reward) == std::bit_cast<std::uint64_t>(b.reward) &&
         same(a.next_state, b.next_state) && a.terminal == b.terminal;
}

void save(const Dataset& d, std::ostream& out) {
  validate(d);
  out.write("BWDS", 4);
  binio::write_u32(out, kFormatVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(d.obs_dim));
  binio::write_u32(out, static_cast<std::uint32_t>(d.act_dim));
  binio::write_f64(out, d.discount);
  binio::write_u64(out, d.transitions.size());
  binio::write_u64(out, d.trajectory_starts.size());
  for (auto s : d.trajectory_starts) binio::write_u64(out, s);
  for (const Transition& t : d.transitions) {
    for (double v : t.state) binio::write_f64(out, v);
    for (double v : t.action) binio::write_f64(out, v);
    binio::write_f64(out, t.reward);
    for (double v : t.next_state) binio::write_f64(out, v);
    binio::write_u8(out, t.terminal ? 1 : 0);
    binio::write_u8(out, t.next_action ? 1 : 0);
    if (t.next_action) {
      for (double v : *t.next_action) binio::write_f64(out, v);
    }
  }
}

void save(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  save(d, out);
  if (!out) throw InvalidArgument("failed writing " + path.string());
}

Dataset load(std::istream& in) {
  binio::Reader r(in);
  if (r.magic(4) != "BWDS") throw FormatError("bad magic, expected BWDS", 0);
  const auto version = r.u32("version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported version " + std::to_string(version), 4);
  }
  Dataset d;
  d.obs_dim = static_cast<int>(r.u32("obs_dim"));
  d.act_dim = static_cast<int>(r.u32("act_dim"));
  if (d.obs_dim < 1 || d.act_dim < 1) throw FormatError("dimensions must be positive", 8);
  d.discount = r.f64("discount");
  if (!(d.discount > 0.0 && d.discount < 1.0)) throw FormatError("discount outside (0,1)", 16);
  const std::uint64_t n = r.u64("n_transitions");
  const std::uint64_t n_traj = r.u64("n_trajectories");
  if (n_traj > n || (n > 0 && n_traj == 0)) {
    throw FormatError("trajectory count inconsistent with transition count", 32);
  }
  d.trajectory_starts.reserve(n_traj);
  for (std::uint64_t k = 0; k < n_traj; ++k) {
    const auto at = r.offset();
    const auto s = r.u64("trajectory start");
    if ((k == 0 && s != 0) || (k > 0 && s <= d.trajectory_starts.back()) || s >= n) {
      throw FormatError("trajectory starts must be increasing from 0", at);
    }
    d.trajectory_starts.push_back(s);
  }
  d.transitions.reserve(n);
  auto read_vec = [&](int dim, const char* what) {
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v(i) = r.f64(what);
    return v;
  };
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto record_offset = r.offset();
    Transition t;
    t.state = read_vec(d.obs_dim, "state");
    t.action = read_vec(d.act_dim, "action");
    t.reward = r.f64("reward");
    t.next_state = read_vec(d.obs_dim, "next_state");
    const auto flag_offset = r.offset();
    const auto terminal = r.u8("terminal");
    const auto has_next = r.u8("has_next_action");
    if (terminal > 1 || has_next > 1) throw FormatError("flag byte must be 0 or 1", flag_offset);
    t.terminal = terminal == 1;
    if (has_next == 1) t.next_action = read_vec(d.act_dim, "next_action");
    if (!in_action_box(t.action) || (t.next_action && !in_action_box(*t.next_action))) {
      throw FormatError("action outside [-1, 1] in transition " + std::to_string(i),
                        record_offset);
    }
    d.transitions.push_back(std::move(t));
  }
  try {
    validate(d);
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what(), r.offset());
  }
  return d;
}

Dataset load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open dataset file " + path.string());
  return load(in);
}

void export_jsonl(const Dataset& d, std::ostream& out) {
  validate(d);
  nlohmann::json header = {{"format", "bwds-jsonl"},
                           {"version", kFormatVersion},
                           {"obs_dim", d.obs_dim},
                           {"act_dim", d.act_dim},
                           {"discount", d.discount},
                           {"trajectory_starts", d.trajectory_starts},
                           {"meta", d.meta}};
  out << header.dump() << '\n';
  for (const Transition& t : d.transitions) {
    nlohmann::json j = {{"s", to_std(t.state)},
                        {"a", to_std(t.action)},
                        {"r", t.reward},
                        {"s2", to_std(t.next_state)},
                        {"terminal", t.terminal}};
    j["a2"] = t.next_action ? nlohmann::json(to_std(*t.next_action)) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
  }
}

Dataset import_jsonl(std::istream& in) {
  std::string line;
  std::uint64_t line_no = 0;
  if (!std::getline(in, line)) throw FormatError("missing jsonl header", 0);
  Dataset d;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != "bwds-jsonl") throw FormatError("bad jsonl header", 0);
    d.obs_dim = header.at("obs_dim").get<int>();
    d.act_dim = header.at("act_dim").get<int>();
    d.discount = header.at("discount").get<double>();
    d.trajectory_starts = header.at("trajectory_starts").get<std::vector<std::uint64_t>>();
    if (header.contains("meta")) d.meta = header["meta"].get<std::map<std::string, std::string>>();
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      Transition t;
      t.state = from_json_array(j.at("s"), d.obs_dim, "s", line_no);
      t.action = from_json_array(j.at("a"), d.act_dim, "a", line_no);
      t.reward = j.at("r").get<double>();
      t.next_state = from_json_array(j.at("s2"), d.obs_dim, "s2", line_no);
      t.terminal = j.at("terminal").get<bool>();
      if (!j.at("a2").is_null()) t.next_action = from_json_array(j["a2"], d.act_dim, "a2", line_no);
      d.transitions.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    // offsets in jsonl are line numbers
    throw FormatError(std::string("malformed jsonl: ") + e.what(), line_no);
  }
  try {
    validate(d);
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what(), line_no);
  }
  return d;
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, Rng& rng) {
  if (population == 0) throw InvalidArgument("cannot sample from an empty dataset");
  std::uniform_int_distribution<std::size_t> pick(0, population - 1);
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = pick(rng);
  return out;
}

std::vector<Transition> sample_batch(const Dataset& d, std::size_t batch_size, Rng& rng) {
  std::vector<Transition> out;
  out.reserve(batch_size);
  for (std::size_t i : sample_indices(d.size(), batch_size, rng)) out.push_back(d.transitions[i]);
  return out;
}

std::pair<Vector, Vector> sample_random_pair(const Dataset& d, const RandomPolicy& policy,
                                             Rng& rng) {
  const std::size_t i = sample_indices(d.size(), 1, rng).front();
  return {d.transitions[i].state, policy.sample(rng)};
}

Dataset fill_next_actions(Dataset d) {
  for (std::size_t k = 1; k < d.trajectory_starts.size(); ++k) {
    if (d.trajectory_starts[k] <= d.trajectory_starts[k - 1]) {
      throw InvalidArgument("overlapping trajectory bounds");
    }
  }
  if (!d.trajectory_starts.empty() && d.trajectory_starts.back() >= d.size()) {
    throw InvalidArgument("trajectory bound beyond the transition list");
  }
  for (std::size_t k = 0; k < d.num_trajectories(); ++k) {
    const auto [begin, end] = d.trajectory_range(k);
    for (std::size_t i = begin; i < end; ++i) {
      if (i + 1 < end) {
        d.transitions[i].next_action = d.transitions[i + 1].action;
      } else {
        d.transitions[i].next_action.reset();
      }
    }
  }
  return d;
}

Standardizer Standardizer::identity(int dim) {
  return {Vector::Zero(dim), Vector::Ones(dim)};
}

Standardizer Standardizer::fit(const Dataset& d) {
  if (d.empty()) throw InvalidArgument("cannot standardize an empty dataset");
  Standardizer s{Vector::Zero(d.obs_dim), Vector::Zero(d.obs_dim)};
  for (const auto& t : d.transitions) s.mean += t.state;
  s.mean /= static_cast<double>(d.size());
  for (const auto& t : d.transitions) s.std += (t.state - s.mean).cwiseAbs2();
  s.std = (s.std / static_cast<double>(d.size())).cwiseSqrt();
  for (Eigen::Index i = 0; i < s.std.size(); ++i) {
    if (s.std(i) < 1e-8) s.std(i) = 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& states) const {
  if (states.cols() != mean.size()) throw InvalidArgument("standardizer dimension mismatch");
  return (states.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

DatasetArrays to_arrays(const Dataset& d) {
  const auto n = static_cast<Eigen::Index>(d.size());
  DatasetArrays a;
  a.states.resize(n, d.obs_dim);
  a.actions.resize(n, d.act_dim);
  a.rewards.resize(n);
  a.next_states.resize(n, d.obs_dim);
  a.next_actions = Matrix::Zero(n, d.act_dim);
  a.has_next.resize(n);
  a.terminal.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = d.transitions[static_cast<std::size_t>(i)];
    a.states.row(i) = t.state.transpose();
    a.actions.row(i) = t.action.transpose();
    a.rewards(i) = t.reward;
    a.next_states.row(i) = t.next_state.transpose();
    if (t.next_action) a.next_actions.row(i) = t.next_action->transpose();
    a.has_next(i) = t.next_action ? 1.0 : 0.0;
    a.terminal(i) = t.terminal ? 1.0 : 0.0;
  }
  return a;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Vector gather_rows(const Vector& v, const std::vector<std::size_t>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  return out;
}

}  // namespace bwdq

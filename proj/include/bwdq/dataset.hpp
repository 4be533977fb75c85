#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bwdq/approx.hpp"
#include "bwdq/rng.hpp"

namespace bwdq {

struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  Vector next_state;
  std::optional<Vector> next_action;
  bool terminal = false;
};

// Bitwise equality of every field.
bool operator==(const Transition& a, const Transition& b);

// Offline experience. Trajectories are stored as a sorted list of start indices;
// trajectory k spans [starts[k], starts[k+1]) and the last one runs to the end.
struct Dataset {
  int obs_dim = 0;
  int act_dim = 0;
  double discount = 0.99;
  std::vector<Transition> transitions;
  std::vector<std::uint64_t> trajectory_starts;
  std::map<std::string, std::string> meta;

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }
  std::size_t num_trajectories() const { return trajectory_starts.size(); }
  std::pair<std::size_t, std::size_t> trajectory_range(std::size_t k) const;

  // Appends one trajectory and records its start index.
  void append_trajectory(std::vector<Transition> trajectory);
};

// Throws InvalidArgument describing the first violated invariant.
void validate(const Dataset& dataset);

// Clipped normal reference policy.
struct RandomPolicy {
  int act_dim = 1;
  double std = 1.0;
  double clip_low = -1.0;
  double clip_high = 1.0;

  Vector sample(Rng& rng) const;
};

void save(const Dataset& dataset, std::ostream& out);
void save(const Dataset& dataset, const std::filesystem::path& path);
Dataset load(std::istream& in);
Dataset load(const std::filesystem::path& path);

// JSON-lines interchange: a header object followed by one object per transition.
void export_jsonl(const Dataset& dataset, std::ostream& out);
Dataset import_jsonl(std::istream& in);

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, Rng& rng);
std::vector<Transition> sample_batch(const Dataset& dataset, std::size_t batch_size, Rng& rng);
std::pair<Vector, Vector> sample_random_pair(const Dataset& dataset, const RandomPolicy& policy,
                                             Rng& rng);

// Links each transition to the action taken next within its trajectory.
Dataset fill_next_actions(Dataset dataset);

// Per-dimension state standardization.
struct Standardizer {
  Vector mean;
  Vector std;

  static Standardizer identity(int dim);
  static Standardizer fit(const Dataset& dataset);
  Matrix apply(const Matrix& states) const;
};

// Column-major copies of the dataset used by the trainers. next_action rows are
// zero where absent and has_next marks which are present.
struct DatasetArrays {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Matrix next_actions;
  Vector has_next;
  Vector terminal;

  std::size_t size() const { return static_cast<std::size_t>(states.rows()); }
};

DatasetArrays to_arrays(const Dataset& dataset);

// Row gather helper.
Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows);
Vector gather_rows(const Vector& v, const std::vector<std::size_t>& rows);

}  // namespace bwdq

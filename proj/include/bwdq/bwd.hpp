#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bwdq/approx.hpp"
#include "bwdq/config.hpp"
#include "bwdq/critic.hpp"
#include "bwdq/dataset.hpp"

namespace bwdq {

// Exponent cap of the entropic penalty and the tolerated fraction of capped terms.
inline constexpr double kExponentCap = 30.0;
inline constexpr double kMaxClippedFraction = 0.01;

// Learned dual potentials g(s, a) and f(s, a'). Both read the critic's
// standardized state concatenated with an action.
struct PotentialPair {
  Network g_net;
  Network f_net;
  double epsilon = 1.0;
  double cost_scale = 1.0;
  Standardizer standardizer;
  std::string config_hash;
};

struct BwdConfig {
  int ot_steps = 10000;
  int batch_size = 256;
  int k_negatives = 8;
  double holdout_fraction = 0.1;
  int eval_batches = 32;
  int hidden_dim = 256;
  double learning_rate = 3e-4;
  double epsilon = 1.0;
  // Derived from the critic when unset, see auto_cost_scale().
  std::optional<double> cost_scale;

  Json to_json() const;
};

struct BwdEstimate {
  double value = 0.0;      // in unscaled cost units
  double std_error = 0.0;  // over evaluation batches
  double epsilon = 1.0;
  double cost_scale = 1.0;
  std::string config_hash;

  Json to_json() const;
  static BwdEstimate from_json(const Json& j);
};

// cost_scale * (Q(s, a') - ||a' - a||^2). Q is evaluated at the random action.
double bwd_cost(const Critic& critic, const Vector& state, const Vector& behavior_action,
                const Vector& random_action, double cost_scale = 1.0);

// 1 / max(1, s) where s is the 95th percentile of |Q(s, a')| over `probe` dataset
// states paired with random actions.
double auto_cost_scale(const Critic& critic, const Dataset& dataset, const RandomPolicy& policy,
                       std::size_t probe, Rng& rng);

// ---------------------------------------------------------------- objective on values

// Objective and exact derivatives for B behaviour atoms, each with K random
// atoms at the same state:
//   L = mean_i g_i + mean_ik f_ik - eps * mean_ik exp(min((g_i + f_ik - c_ik) / eps, cap))
struct DualValues {
  double value = 0.0;
  Vector d_g;     // B
  Matrix d_f;     // B x K
  Matrix d_cost;  // B x K
  std::int64_t clipped = 0;
  double max_exponent = -std::numeric_limits<double>::infinity();
};

DualValues dual_objective_values(const Vector& g, const Matrix& f, const Matrix& cost,
                                 double epsilon);

// Throws NumericError when more than 1% of the exponent terms were capped.
void check_exponent_guard(std::int64_t clipped, std::int64_t total, double max_exponent);

// ---------------------------------------------------------------- network mode

// B behaviour pairs (s_i, a_i), each with K random actions a'_ik stored at row
// i * K + k, and the critic's Q(s_i, a'_ik).
struct PairBatch {
  Matrix states;
  Matrix actions;
  Matrix random_actions;
  Vector random_q;
  int k = 1;

  Eigen::Index size() const { return states.rows(); }
};

PairBatch make_pair_batch(const Critic& critic, const Matrix& states, const Matrix& actions,
                          const RandomPolicy& policy, int k, Rng& rng);

// cost_scale * (Q(s_i, a'_ik) - ||a'_ik - a_i||^2) as a B x K matrix.
Matrix pair_costs(const PairBatch& batch, double cost_scale);

// Potential inputs: g rows are [z(s_i), a_i]; f row i * K + k is [z(s_i), a'_ik].
struct PotentialInputs {
  Matrix g_input;
  Matrix f_input;
};

PotentialInputs potential_inputs(const PotentialPair& p, const PairBatch& batch);

struct DualResult {
  double value = 0.0;
  Gradients g_grad;
  Gradients f_grad;
  std::int64_t clipped = 0;
  double max_exponent = 0.0;
};

// Forward/backward buffers reused across calls.
struct DualWorkspace {
  ForwardCache g_cache;
  ForwardCache f_cache;
  Matrix upstream_g;
  Matrix upstream_f;
};

// Objective value (in scaled units) with exact parameter gradients of both
// potentials (ascent direction).
DualResult dual_objective(const PotentialPair& p, const PairBatch& batch, DualWorkspace& ws);
DualResult dual_objective(const PotentialPair& p, const PairBatch& batch);

// Fresh potentials with output layers at zero, so g = f = 0 at the start.
PotentialPair init_potentials(int obs_dim, int act_dim, const BwdConfig& config,
                              const Standardizer& standardizer, double cost_scale,
                              std::uint64_t seed);

struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};

// Shuffled disjoint split; the holdout gets round(fraction * n) rows, at least one.
HoldoutSplit split_holdout(std::size_t n, double fraction, Rng& rng);

struct BwdTraining {
  PotentialPair potentials;
  std::vector<double> trace;  // per-step objective in scaled units
  HoldoutSplit split;
};

BwdTraining train_bwd(const Critic& critic, const Dataset& dataset, const RandomPolicy& policy,
                      const BwdConfig& config, Rng& rng);

// Mean objective over config.eval_batches holdout minibatches, divided by the
// cost scale.
BwdEstimate estimate_bwd(const PotentialPair& p, const Critic& critic, const Dataset& dataset,
                         const std::vector<std::size_t>& holdout, const RandomPolicy& policy,
                         const BwdConfig& config, Rng& rng);

// ---------------------------------------------------------------- discrete problems

// Table-mode objective for a full n x m coupling with weights mu, nu:
//   L = mu.g + nu.f - eps * sum_ij mu_i nu_j exp(min((g_i + f_j - C_ij) / eps, cap))
struct TableDual {
  double value = 0.0;
  Vector d_g;
  Vector d_f;
};

TableDual dual_objective_table(const Vector& g, const Vector& f, const Matrix& cost,
                               const Vector& mu, const Vector& nu, double epsilon);

struct TableFit {
  Vector g;
  Vector f;
  double value = 0.0;
  std::vector<double> trace;
};

// Full-batch adaptive-moment ascent on per-atom potentials with linear decay.
TableFit train_table_dual(const Matrix& cost, const Vector& mu, const Vector& nu, double epsilon,
                          int steps, double learning_rate);

struct SinkhornResult {
  double primal = 0.0;  // <P, C> + eps * KL(P || mu nu^T)
  Matrix plan;
  int iterations = 0;
  double marginal_error = 0.0;
};

// Log-domain Sinkhorn; stops early once both marginals match within `tol`.
SinkhornResult sinkhorn_reference(const Matrix& cost, const Vector& mu, const Vector& nu,
                                  double epsilon, int iters, double tol = 1e-12);

// ---------------------------------------------------------------- persistence

// Writes <dir>/potential_g.net, <dir>/potential_f.net and <dir>/potentials.json.
void save_potentials(const PotentialPair& p, const std::filesystem::path& dir);
PotentialPair load_potentials(const std::filesystem::path& dir);

}  // namespace bwdq

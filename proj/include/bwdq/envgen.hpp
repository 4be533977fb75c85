#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bwdq/approx.hpp"
#include "bwdq/dataset.hpp"
#include "bwdq/rng.hpp"

namespace bwdq {

struct StepResult {
  Vector next_obs;
  double reward = 0.0;
  bool terminal = false;
};

// Immutable environment description. All episode state is passed explicitly,
// so one instance can serve concurrent rollouts.
class Env {
 public:
  virtual ~Env() = default;

  virtual std::string name() const = 0;
  virtual int obs_dim() const = 0;
  virtual int act_dim() const = 0;
  virtual int max_steps() const = 0;
  virtual double discount() const = 0;

  virtual Vector reset(Rng& rng) const = 0;
  virtual StepResult step(const Vector& obs, const Vector& action, Rng& rng) const = 0;
  virtual Vector expert_action(const Vector& obs) const = 0;
  // Maps an action from the [-1, 1] box to the form stored in datasets.
  virtual Vector canonical_action(const Vector& action) const = 0;
  // Uninformed behaviour used by graded policies: clipped normal for continuous
  // tasks, uniform over actions for tabular ones.
  virtual Vector random_action(Rng& rng) const = 0;
};

struct PointMassConfig {
  int dims = 2;
  int max_steps = 50;
  double action_scale = 0.1;
  double noise_std = 0.01;
  double state_bound = 1.0;
  double expert_gain = 5.0;
  double discount = 0.99;
  std::optional<Vector> goal;  // origin when unset
};

// Point mass in a box: s' = clip(s + action_scale * a + noise), r = -||s - goal||.
class PointMassEnv final : public Env {
 public:
  explicit PointMassEnv(PointMassConfig config = {});

  std::string name() const override;
  int obs_dim() const override { return config_.dims; }
  int act_dim() const override { return config_.dims; }
  int max_steps() const override { return config_.max_steps; }
  double discount() const override { return config_.discount; }

  Vector reset(Rng& rng) const override;
  StepResult step(const Vector& obs, const Vector& action, Rng& rng) const override;
  Vector expert_action(const Vector& obs) const override;
  Vector canonical_action(const Vector& action) const override;
  Vector random_action(Rng& rng) const override;

  const PointMassConfig& config() const { return config_; }
  const Vector& goal() const { return goal_; }

 private:
  PointMassConfig config_;
  Vector goal_;
};

// Finite MDP: transition[a](s, s') and reward(s, a).
struct GridMDP {
  int n_states = 5;
  int n_actions = 2;
  std::vector<Matrix> transition;
  Matrix reward;
  double discount = 0.9;

  double p(int s, int a, int s_next) const { return transition[a](s, s_next); }
};

void validate(const GridMDP& mdp);
GridMDP random_grid_mdp(int n_states, int n_actions, double discount, Rng& rng);
// Chain of states; action 1 moves right and action 0 moves left, each slipping
// to the opposite direction with probability `slip`. Reward 1 in the last state.
GridMDP chain_mdp(int n_states, double slip, double discount);

// Row-stochastic behaviour table, n_states x n_actions.
using BehaviorTable = Matrix;

// Solves Q = r + gamma * P * Pi_beta * Q directly.
Matrix exact_q_beta(const GridMDP& mdp, const BehaviorTable& behavior);
// Optimal action values by value iteration to convergence.
Matrix optimal_q(const GridMDP& mdp);

// One-hot states and actions; the executed action is argmax of the action vector.
class GridEnv final : public Env {
 public:
  GridEnv(GridMDP mdp, int max_steps = 50, std::string label = "grid");

  std::string name() const override { return label_; }
  int obs_dim() const override { return mdp_.n_states; }
  int act_dim() const override { return mdp_.n_actions; }
  int max_steps() const override { return max_steps_; }
  double discount() const override { return mdp_.discount; }

  Vector reset(Rng& rng) const override;
  StepResult step(const Vector& obs, const Vector& action, Rng& rng) const override;
  Vector expert_action(const Vector& obs) const override;
  Vector canonical_action(const Vector& action) const override;
  Vector random_action(Rng& rng) const override;

  const GridMDP& mdp() const { return mdp_; }
  static int state_index(const Vector& obs);
  static int action_index(const Vector& action);

 private:
  GridMDP mdp_;
  int max_steps_;
  std::string label_;
  std::vector<int> expert_;
};

using Policy = std::function<Vector(const Vector& obs, Rng& rng)>;

// With probability `quality` the expert action plus N(0, expert_noise_std^2) noise,
// otherwise a draw from the random reference policy.
struct GradedPolicy {
  double quality = 0.0;
  double expert_noise_std = 0.1;

  Vector act(const Env& env, const Vector& obs, Rng& rng) const;
};

Policy graded_policy(const Env& env, double quality, double expert_noise_std = 0.1);
Policy expert_policy(const Env& env);
Policy random_policy(const Env& env, double std = 1.0);

struct Rollout {
  std::vector<Transition> trajectory;
  double total_return = 0.0;
};

Rollout rollout(const Env& env, const Policy& policy, int n_steps, Rng& rng,
                const std::optional<Vector>& start = std::nullopt);

double mean_return(const Env& env, const Policy& policy, int episodes, Rng& rng);

// Monte-Carlo returns of the random and expert policies, the ends of the
// 0-100 normalized scale.
struct ReturnScale {
  double random_return = 0.0;
  double expert_return = 1.0;

  // 100 * (score - random) / (expert - random)
  double normalize(double score) const;
};

ReturnScale reference_returns(const Env& env, int episodes, Rng& rng);

// One dataset per quality level; each mixes `n_seeds` independently seeded policy
// instantiations in equal shares. Next actions are filled.
std::vector<Dataset> generate_dataset(const Env& env, const std::vector<double>& quality_levels,
                                      std::size_t n_transitions_per_level, int n_seeds, Rng& rng);

// Long-trajectory sample of a tabular MDP under a behaviour table, with one-hot
// states and actions, for validating the critic against exact_q_beta.
Dataset tabular_dataset(const GridMDP& mdp, const BehaviorTable& behavior,
                        std::size_t n_transitions, std::size_t trajectory_length, Rng& rng);

// Behaviour table of a graded policy on a tabular MDP.
BehaviorTable graded_behavior(const GridMDP& mdp, double quality);

// Environment factory used by the CLI: "pointmass" (optionally with dims),
// "grid" (5-state chain).
std::unique_ptr<Env> make_env(const std::string& name, int dims = 2);

}  // namespace bwdq

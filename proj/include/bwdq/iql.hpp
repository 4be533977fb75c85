#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bwdq/approx.hpp"
#include "bwdq/bwd.hpp"
#include "bwdq/config.hpp"
#include "bwdq/critic.hpp"
#include "bwdq/dataset.hpp"
#include "bwdq/envgen.hpp"

namespace bwdq {

struct IqlConfig {
  int total_steps = 50000;
  int batch_size = 256;
  int hidden_dim = 256;
  double learning_rate = 3e-4;
  double expectile = 0.7;
  double awr_temperature = 3.0;
  double max_weight = 100.0;
  // Overrides the dataset's discount when set.
  std::optional<double> discount;
  double polyak = 0.005;
  int eval_every = 5000;
  int eval_episodes = 10;
  // Monte-Carlo episodes for the random and expert reference returns.
  int reference_episodes = 100;

  Json to_json() const;
};

struct IqlAgent {
  Network q_net;
  Network q_target;
  Network v_net;
  Network actor;  // pre-squash output; actions are tanh of it
  Standardizer standardizer;
  double expectile = 0.7;
  double awr_temperature = 3.0;
  double max_weight = 100.0;
  double discount = 0.99;
  double polyak = 0.005;

  int obs_dim() const { return static_cast<int>(standardizer.mean.size()); }
  int act_dim() const { return actor.output_dim(); }
};

IqlAgent init_iql_agent(int obs_dim, int act_dim, const Standardizer& standardizer,
                        const IqlConfig& config, double discount, std::uint64_t seed);

// Squashed actions tanh(actor(z(s))), one row per state.
Matrix actor_actions(const IqlAgent& agent, const Matrix& states);

// Expectile regression loss mean(|tau - 1[u < 0]| * u^2).
double expectile_loss(const Vector& u, double tau);
// Advantage weights min(exp(A / temperature), max_weight).
Vector awr_weights(const Vector& advantage, double temperature, double max_weight);

struct IqlLosses {
  double value = 0.0;
  double q = 0.0;
  double actor = 0.0;
};

// Optimizer states and buffers for one agent.
struct IqlLearner {
  IqlAgent agent;
  OptimState q_opt;
  OptimState v_opt;
  OptimState actor_opt;
  ForwardCache q_cache;
  ForwardCache v_cache;
  ForwardCache actor_cache;
  Gradients grads;
  Gradients actor_grads;
};

IqlLearner make_learner(IqlAgent agent, double learning_rate);

struct IqlBatch {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector terminal;
};

IqlBatch sample_iql_batch(const DatasetArrays& data, int batch_size, Rng& rng);

// One value, critic and actor update followed by the target update. When
// `extra_actor_grad` is given it is added to the actor's loss gradient before
// the optimizer step.
IqlLosses iql_step(IqlLearner& learner, const IqlBatch& batch,
                   const Gradients* extra_actor_grad = nullptr);

struct RegConfig {
  double lambda_bwd = 1.0;
  BwdConfig bwd;
  int potential_update_steps_per_actor_step = 1;
  CriticConfig critic;
  double random_std = 1.0;

  Json to_json() const;
};

struct RegTerm {
  double value = 0.0;  // batch dual objective in scaled units
  Gradients actor_grad;
  // Ascent gradients of the potentials on the same batch, so the first
  // potential update needs no second pass.
  Gradients g_grad;
  Gradients f_grad;
  std::int64_t clipped = 0;
  PairBatch batch;
};

// Batch dual objective with behaviour actions replaced by the actor's actions.
// actor_grad is with respect to the actor parameters only; the potentials and
// the critic are constants.
RegTerm bwd_reg_term(const IqlAgent& agent, const PotentialPair& potentials, const Critic& critic,
                     const Matrix& states, const RandomPolicy& policy, int k, Rng& rng);

struct EvalPoint {
  int step = 0;
  double mean_return = 0.0;
  double normalized_return = 0.0;
};

struct IqlRun {
  IqlAgent agent;
  std::vector<EvalPoint> curve;
  ReturnScale reference;
  std::string variant;  // "iql_bwd" when lambda_bwd > 0, else "iql"
  std::string config_hash;
};

// Mean undiscounted return of the greedy actor over `episodes` episodes.
double evaluate_actor(const IqlAgent& agent, const Env& env, int episodes, Rng& rng);

IqlRun train_iql(const Dataset& dataset, const Env& env, const std::optional<RegConfig>& reg,
                 const IqlConfig& config, Rng& rng);

std::string curve_csv_header();
std::string curve_csv(const IqlRun& run, std::uint64_t seed);

// Writes <dir>/iql_{q,q_target,v,actor}.net and <dir>/iql.json.
void save_agent(const IqlAgent& agent, const std::filesystem::path& dir);
IqlAgent load_agent(const std::filesystem::path& dir);

}  // namespace bwdq

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bwdq/approx.hpp"
#include "bwdq/config.hpp"
#include "bwdq/dataset.hpp"
#include "bwdq/rng.hpp"

namespace bwdq {

struct CriticConfig {
  int steps = 10000;
  int batch_size = 256;
  int hidden_dim = 256;
  double learning_rate = 3e-4;
  double polyak = 0.005;
  // Overrides the dataset's discount when set.
  std::optional<double> discount;
  bool standardize = true;
  // Linear learning-rate decay to zero over the run.
  bool anneal = true;

  Json to_json() const;
};

// Behavioural action-value estimate Q(s, a) fit by SARSA regression.
struct Critic {
  Network q_net;
  Network q_target;
  double polyak = 0.005;
  double discount = 0.99;
  Standardizer standardizer;
  bool trained = false;
  std::string config_hash;

  int obs_dim() const { return static_cast<int>(standardizer.mean.size()); }
  int act_dim() const { return q_net.input_dim() - obs_dim(); }
};

struct CriticFit {
  Critic critic;
  std::vector<double> loss;  // per-step mean squared TD error
};

CriticFit train_critic(const Dataset& dataset, const CriticConfig& config, Rng& rng);

// Evaluates q_net on standardized states concatenated with actions. Rows of
// `states` and `actions` are paired.
Vector q_value(const Critic& critic, const Matrix& states, const Matrix& actions);
double q_value(const Critic& critic, const Vector& state, const Vector& action);

// Concatenates standardized states with actions, the critic's input layout.
Matrix critic_input(const Critic& critic, const Matrix& states, const Matrix& actions);

struct ValueHead {
  Network v_net;
  Standardizer standardizer;
  bool trained = false;
};

struct ValueHeadConfig {
  int steps = 5000;
  int batch_size = 256;
  int hidden_dim = 256;
  double learning_rate = 3e-4;
  // Linear learning-rate decay to zero; the targets are fixed, so this removes
  // the optimizer's end-of-training jitter.
  bool anneal = true;

  Json to_json() const;
};

// Regresses V(s) on the frozen critic's Q(s, a) at the dataset's own actions.
ValueHead fit_value_head(const Critic& critic, const Dataset& dataset,
                         const ValueHeadConfig& config, Rng& rng);

Vector v_value(const ValueHead& head, const Matrix& states);

// Writes <dir>/critic_q.net, <dir>/critic_q_target.net and <dir>/critic.json.
void save_critic(const Critic& critic, const std::filesystem::path& dir);
Critic load_critic(const std::filesystem::path& dir);

}  // namespace bwdq

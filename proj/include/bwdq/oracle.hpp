#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bwdq/config.hpp"
#include "bwdq/dataset.hpp"
#include "bwdq/envgen.hpp"
#include "bwdq/iql.hpp"

namespace bwdq {

struct BcConfig {
  int steps = 5000;
  int batch_size = 256;
  int hidden_dim = 256;
  double learning_rate = 1e-3;

  Json to_json() const;
};

// Behaviour cloning: squared error between tanh(actor(z(s))) and the dataset
// action. Only the actor of the returned agent is trained.
IqlAgent train_bc(const Dataset& dataset, const BcConfig& config, std::uint64_t seed, Rng& rng);

struct OracleConfig {
  BcConfig bc;
  IqlConfig iql = default_oracle_iql();
  int eval_episodes = 20;
  int reference_episodes = 100;

  static IqlConfig default_oracle_iql();
  Json to_json() const;
};

struct OracleScore {
  double score = 0.0;  // mean of the per-agent normalized returns
  std::vector<std::string> agents;
  std::vector<double> normalized;
  ReturnScale reference;

  Json to_json() const;
  static OracleScore from_json(const Json& j);
};

OracleScore oracle_score(const Dataset& dataset, const Env& env, const OracleConfig& config, Rng& rng);

}  // namespace bwdq

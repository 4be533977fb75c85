#pragma once

#include <random>

#include "bwdq/dataset.hpp"
#include "test_support.hpp"

namespace bwdq::testing {

// Random valid dataset with `n_traj` trajectories of random length in [1, max_len].
inline Dataset random_dataset(std::mt19937_64& rng, int obs_dim, int act_dim, int n_traj,
                              int max_len = 6) {
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> wide(0.0, 100.0);
  std::bernoulli_distribution coin(0.3);
  Dataset d;
  d.obs_dim = obs_dim;
  d.act_dim = act_dim;
  d.discount = std::uniform_real_distribution<double>(0.01, 0.999)(rng);
  for (int k = 0; k < n_traj; ++k) {
    std::vector<Transition> traj;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      Transition t;
      t.state = Vector::NullaryExpr(obs_dim, [&] { return wide(rng); });
      t.action = Vector::NullaryExpr(act_dim, [&] { return u(rng); });
      t.reward = wide(rng);
      t.next_state = Vector::NullaryExpr(obs_dim, [&] { return wide(rng); });
      t.terminal = i + 1 == n && coin(rng);
      traj.push_back(std::move(t));
    }
    d.append_trajectory(std::move(traj));
  }
  return fill_next_actions(std::move(d));
}

}  // namespace bwdq::testing

#include "bwdq/envgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "bwdq/errors.hpp"

namespace bwdq {

// ---------------------------------------------------------------- point mass

PointMassEnv::PointMassEnv(PointMassConfig config) : config_(std::move(config)) {
  if (config_.dims < 1 || config_.max_steps < 1 || config_.action_scale <= 0.0 ||
      config_.noise_std < 0.0 || config_.state_bound <= 0.0) {
    throw InvalidArgument("invalid point-mass configuration");
  }
  goal_ = config_.goal.value_or(Vector::Zero(config_.dims));
  if (goal_.size() != config_.dims) throw InvalidArgument("goal dimension mismatch");
}

std::string PointMassEnv::name() const {
  return config_.dims == 2 ? "pointmass" : "pointmass" + std::to_string(config_.dims) + "d";
}

Vector PointMassEnv::reset(Rng& rng) const {
  std::uniform_real_distribution<double> u(-config_.state_bound, config_.state_bound);
  return Vector::NullaryExpr(config_.dims, [&] { return u(rng); });
}

StepResult PointMassEnv::step(const Vector& obs, const Vector& action, Rng& rng) const {
  if (obs.size() != config_.dims || action.size() != config_.dims) {
    throw InvalidArgument("point-mass step dimension mismatch");
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  StepResult r;
  r.reward = -(obs - goal_).norm();
  Vector next = obs + config_.action_scale * action.cwiseMax(-1.0).cwiseMin(1.0);
  for (int i = 0; i < config_.dims; ++i) next(i) += config_.noise_std * noise(rng);
  r.next_obs = next.cwiseMax(-config_.state_bound).cwiseMin(config_.state_bound);
  return r;
}

Vector PointMassEnv::expert_action(const Vector& obs) const {
  return (config_.expert_gain * (goal_ - obs)).cwiseMax(-1.0).cwiseMin(1.0);
}

Vector PointMassEnv::canonical_action(const Vector& action) const {
  return action.cwiseMax(-1.0).cwiseMin(1.0);
}

Vector PointMassEnv::random_action(Rng& rng) const {
  return RandomPolicy{config_.dims, 1.0, -1.0, 1.0}.sample(rng);
}

// ---------------------------------------------------------------- tabular

void validate(const GridMDP& mdp) {
  if (mdp.n_states < 1 || mdp.n_actions < 1) throw InvalidArgument("empty MDP");
  if (static_cast<int>(mdp.transition.size()) != mdp.n_actions ||
      mdp.reward.rows() != mdp.n_states || mdp.reward.cols() != mdp.n_actions) {
    throw InvalidArgument("MDP table shapes inconsistent");
  }
  for (const Matrix& t : mdp.transition) {
    if (t.rows() != mdp.n_states || t.cols() != mdp.n_states || t.minCoeff() < 0.0) {
      throw InvalidArgument("bad transition table");
    }
    if ((t.rowwise().sum().array() - 1.0).abs().maxCoeff() > 1e-12) {
      throw InvalidArgument("transition rows must sum to 1");
    }
  }
}

GridMDP random_grid_mdp(int n_states, int n_actions, double discount, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GridMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.discount = discount;
  mdp.reward = Matrix::NullaryExpr(n_states, n_actions, [&] { return u(rng); });
  for (int a = 0; a < n_actions; ++a) {
    Matrix t = Matrix::NullaryExpr(n_states, n_states, [&] { return u(rng); });
    for (int s = 0; s < n_states; ++s) t.row(s) /= t.row(s).sum();
    mdp.transition.push_back(std::move(t));
  }
  validate(mdp);
  return mdp;
}

GridMDP chain_mdp(int n_states, double slip, double discount) {
  GridMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = 2;
  mdp.discount = discount;
  mdp.reward = Matrix::Zero(n_states, 2);
  mdp.reward.row(n_states - 1).setOnes();
  for (int a = 0; a < 2; ++a) {
    Matrix t = Matrix::Zero(n_states, n_states);
    for (int s = 0; s < n_states; ++s) {
      const int right = std::min(s + 1, n_states - 1);
      const int left = std::max(s - 1, 0);
      t(s, a == 1 ? right : left) += 1.0 - slip;
      t(s, a == 1 ? left : right) += slip;
    }
    mdp.transition.push_back(std::move(t));
  }
  validate(mdp);
  return mdp;
}

Matrix exact_q_beta(const GridMDP& mdp, const BehaviorTable& behavior) {
  validate(mdp);
  if (behavior.rows() != mdp.n_states || behavior.cols() != mdp.n_actions ||
      behavior.minCoeff() < 0.0 ||
      (behavior.rowwise().sum().array() - 1.0).abs().maxCoeff() > 1e-9) {
    throw InvalidArgument("behaviour table must be row-stochastic with MDP shape");
  }
  if (!(mdp.discount >= 0.0 && mdp.discount < 1.0)) {
    throw InvalidArgument("policy evaluation system is singular for discount >= 1");
  }
  const int ns = mdp.n_states;
  const int na = mdp.n_actions;
  const int n = ns * na;
  // row (s, a), column (s', a'): P(s'|s,a) * beta(a'|s')
  Matrix system = Matrix::Identity(n, n);
  Vector rhs(n);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      const int row = s * na + a;
      rhs(row) = mdp.reward(s, a);
      for (int s2 = 0; s2 < ns; ++s2) {
        for (int a2 = 0; a2 < na; ++a2) {
          system(row, s2 * na + a2) -= mdp.discount * mdp.p(s, a, s2) * behavior(s2, a2);
        }
      }
    }
  }
  const Eigen::FullPivLU<Matrix> lu(system);
  if (!lu.isInvertible()) throw InvalidArgument("policy evaluation system is singular");
  const Vector q = lu.solve(rhs);
  if ((system * q - rhs).cwiseAbs().maxCoeff() > 1e-10) {
    throw NumericError("linear solve residual above 1e-10");
  }
  Matrix out(ns, na);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) out(s, a) = q(s * na + a);
  }
  return out;
}

Matrix optimal_q(const GridMDP& mdp) {
  validate(mdp);
  Matrix q = Matrix::Zero(mdp.n_states, mdp.n_actions);
  for (int it = 0; it < 1000000; ++it) {
    const Vector v = q.rowwise().maxCoeff();
    Matrix next = mdp.reward;
    for (int a = 0; a < mdp.n_actions; ++a) next.col(a) += mdp.discount * mdp.transition[a] * v;
    const double delta = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (delta < 1e-12) break;
  }
  return q;
}

GridEnv::GridEnv(GridMDP mdp, int max_steps, std::string label)
    : mdp_(std::move(mdp)), max_steps_(max_steps), label_(std::move(label)) {
  validate(mdp_);
  if (max_steps_ < 1) throw InvalidArgument("max_steps must be >= 1");
  const Matrix q = optimal_q(mdp_);
  for (int s = 0; s < mdp_.n_states; ++s) {
    Eigen::Index best = 0;
    q.row(s).maxCoeff(&best);
    expert_.push_back(static_cast<int>(best));
  }
}

int GridEnv::state_index(const Vector& obs) {
  Eigen::Index i = 0;
  obs.maxCoeff(&i);
  return static_cast<int>(i);
}

int GridEnv::action_index(const Vector& action) {
  Eigen::Index i = 0;
  action.maxCoeff(&i);
  return static_cast<int>(i);
}

Vector GridEnv::reset(Rng& rng) const {
  std::uniform_int_distribution<int> pick(0, mdp_.n_states - 1);
  return Vector::Unit(mdp_.n_states, pick(rng));
}

StepResult GridEnv::step(const Vector& obs, const Vector& action, Rng& rng) const {
  if (obs.size() != mdp_.n_states || action.size() != mdp_.n_actions) {
    throw InvalidArgument("grid step dimension mismatch");
  }
  const int s = state_index(obs);
  const int a = action_index(action);
  StepResult r;
  r.reward = mdp_.reward(s, a);
  // row() of a column-major matrix is strided, so copy it first
  const Vector row = mdp_.transition[a].row(s).transpose();
  std::discrete_distribution<int> draw(row.data(), row.data() + row.size());
  r.next_obs = Vector::Unit(mdp_.n_states, draw(rng));
  return r;
}

Vector GridEnv::expert_action(const Vector& obs) const {
  return Vector::Unit(mdp_.n_actions, expert_[state_index(obs)]);
}

Vector GridEnv::canonical_action(const Vector& action) const {
  return Vector::Unit(mdp_.n_actions, action_index(action));
}

Vector GridEnv::random_action(Rng& rng) const {
  std::uniform_int_distribution<int> pick(0, mdp_.n_actions - 1);
  return Vector::Unit(mdp_.n_actions, pick(rng));
}

// ---------------------------------------------------------------- policies

namespace {

// Episodes cut by the step budget are not terminal, so the behaviour's action at
// the final next state is recorded and the last transition still bootstraps.
std::optional<Vector> tail_action(const Env& env, const Policy& policy, const Rollout& r,
                                  Rng& rng) {
  const Transition& last = r.trajectory.back();
  if (last.terminal) return std::nullopt;
  return env.canonical_action(policy(last.next_state, rng));
}

Dataset link_actions(Dataset d, const std::vector<std::optional<Vector>>& tails) {
  d = fill_next_actions(std::move(d));
  for (std::size_t k = 0; k < d.num_trajectories(); ++k) {
    d.transitions[d.trajectory_range(k).second - 1].next_action = tails[k];
  }
  return d;
}

}  // namespace

Vector GradedPolicy::act(const Env& env, const Vector& obs, Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < quality) {
    std::normal_distribution<double> noise(0.0, expert_noise_std);
    Vector a = env.expert_action(obs);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) += noise(rng);
    return env.canonical_action(a);
  }
  return env.random_action(rng);
}

Policy graded_policy(const Env& env, double quality, double expert_noise_std) {
  if (!(quality >= 0.0 && quality <= 1.0)) throw InvalidArgument("quality must lie in [0, 1]");
  GradedPolicy p{quality, expert_noise_std};
  return [&env, p](const Vector& obs, Rng& rng) { return p.act(env, obs, rng); };
}

Policy expert_policy(const Env& env) {
  return [&env](const Vector& obs, Rng&) { return env.expert_action(obs); };
}

Policy random_policy(const Env& env, double std) {
  if (std == 1.0) return [&env](const Vector&, Rng& rng) { return env.random_action(rng); };
  RandomPolicy p{env.act_dim(), std};
  return [&env, p](const Vector&, Rng& rng) { return env.canonical_action(p.sample(rng)); };
}

Rollout rollout(const Env& env, const Policy& policy, int n_steps, Rng& rng,
                const std::optional<Vector>& start) {
  if (n_steps < 1) throw InvalidArgument("rollout needs n_steps >= 1");
  Rollout out;
  Vector obs = start ? *start : env.reset(rng);
  for (int t = 0; t < n_steps; ++t) {
    Transition tr;
    tr.state = obs;
    tr.action = env.canonical_action(policy(obs, rng));
    StepResult r = env.step(obs, tr.action, rng);
    tr.reward = r.reward;
    tr.next_state = r.next_obs;
    tr.terminal = r.terminal;
    out.total_return += r.reward;
    obs = std::move(r.next_obs);
    out.trajectory.push_back(std::move(tr));
    if (out.trajectory.back().terminal) break;
  }
  return out;
}

double mean_return(const Env& env, const Policy& policy, int episodes, Rng& rng) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) total += rollout(env, policy, env.max_steps(), rng).total_return;
  return total / episodes;
}

double ReturnScale::normalize(double score) const {
  const double span = expert_return - random_return;
  if (!(std::abs(span) > 1e-12)) throw NumericError("expert and random returns coincide");
  return 100.0 * (score - random_return) / span;
}

ReturnScale reference_returns(const Env& env, int episodes, Rng& rng) {
  if (episodes < 1) throw InvalidArgument("episodes must be >= 1");
  ReturnScale s;
  s.random_return = mean_return(env, random_policy(env), episodes, rng);
  s.expert_return = mean_return(env, expert_policy(env), episodes, rng);
  return s;
}

std::vector<Dataset> generate_dataset(const Env& env, const std::vector<double>& quality_levels,
                                      std::size_t n_transitions_per_level, int n_seeds,
                                      Rng& rng) {
  if (n_seeds < 1) throw InvalidArgument("n_seeds must be >= 1");
  std::vector<Dataset> out;
  for (double level : quality_levels) {
    if (!(level >= 0.0 && level <= 1.0)) throw InvalidArgument("quality must lie in [0, 1]");
    Dataset d;
    d.obs_dim = env.obs_dim();
    d.act_dim = env.act_dim();
    d.discount = env.discount();
    const Policy policy = graded_policy(env, level);
    std::vector<std::optional<Vector>> tails;
    std::ostringstream seeds;
    for (int k = 0; k < n_seeds; ++k) {
      const std::uint64_t seed = rng();
      seeds << (k ? "," : "") << seed;
      Rng local(seed);
      std::size_t quota = n_transitions_per_level / static_cast<std::size_t>(n_seeds) +
                          (static_cast<std::size_t>(k) <
                                   n_transitions_per_level % static_cast<std::size_t>(n_seeds)
                               ? 1
                               : 0);
      while (quota > 0) {
        const int len = static_cast<int>(std::min<std::size_t>(quota, env.max_steps()));
        Rollout r = rollout(env, policy, len, local);
        tails.push_back(tail_action(env, policy, r, local));
        quota -= r.trajectory.size();
        d.append_trajectory(std::move(r.trajectory));
      }
    }
    std::ostringstream q;
    q << level;
    d.meta = {{"generator", env.name()}, {"quality", q.str()}, {"seeds", seeds.str()}};
    out.push_back(link_actions(std::move(d), tails));
  }
  return out;
}

BehaviorTable graded_behavior(const GridMDP& mdp, double quality) {
  const GridEnv env(mdp);
  BehaviorTable b = Matrix::Constant(mdp.n_states, mdp.n_actions, (1.0 - quality) / mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    b(s, GridEnv::action_index(env.expert_action(Vector::Unit(mdp.n_states, s)))) += quality;
  }
  return b;
}

Dataset tabular_dataset(const GridMDP& mdp, const BehaviorTable& behavior,
                        std::size_t n_transitions, std::size_t trajectory_length, Rng& rng) {
  validate(mdp);
  const GridEnv env(mdp, static_cast<int>(std::max<std::size_t>(trajectory_length, 1)));
  const Policy policy = [&behavior](const Vector& obs, Rng& r) {
    const int s = GridEnv::state_index(obs);
    const Vector row = behavior.row(s).transpose();
    std::discrete_distribution<int> pick(row.data(), row.data() + row.size());
    return Vector(Vector::Unit(row.size(), pick(r)));
  };
  Dataset d;
  d.obs_dim = mdp.n_states;
  d.act_dim = mdp.n_actions;
  d.discount = mdp.discount > 0.0 ? mdp.discount : 0.5;
  std::vector<std::optional<Vector>> tails;
  std::size_t remaining = n_transitions;
  while (remaining > 0) {
    const int len = static_cast<int>(std::min(remaining, trajectory_length));
    Rollout r = rollout(env, policy, len, rng);
    tails.push_back(tail_action(env, policy, r, rng));
    remaining -= r.trajectory.size();
    d.append_trajectory(std::move(r.trajectory));
  }
  d.meta = {{"generator", "tabular"}};
  return link_actions(std::move(d), tails);
}

std::unique_ptr<Env> make_env(const std::string& name, int dims) {
  if (name == "pointmass") {
    PointMassConfig c;
    c.dims = dims;
    return std::make_unique<PointMassEnv>(c);
  }
  if (name == "pointmass4d") {
    PointMassConfig c;
    c.dims = 4;
    return std::make_unique<PointMassEnv>(c);
  }
  if (name == "grid") return std::make_unique<GridEnv>(chain_mdp(5, 0.1, 0.99), 50, "grid");
  throw InvalidArgument("unknown environment '" + name + "'");
}

}  // namespace bwdq

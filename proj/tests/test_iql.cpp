#include <cmath>
#include <filesystem>

#include "bwdq/envgen.hpp"
#include "bwdq/errors.hpp"
#include "bwdq/iql.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace bwdq;

namespace {

IqlConfig small_config(int steps) {
  IqlConfig c;
  c.total_steps = steps;
  c.hidden_dim = 32;
  c.batch_size = 64;
  c.eval_every = std::max(1, steps / 4);
  c.eval_episodes = 3;
  c.reference_episodes = 10;
  return c;
}

RegConfig small_reg(double lambda) {
  RegConfig r;
  r.lambda_bwd = lambda;
  r.bwd.hidden_dim = 16;
  r.bwd.batch_size = 32;
  r.bwd.k_negatives = 4;
  r.critic.steps = 200;
  r.critic.hidden_dim = 16;
  return r;
}

Critic quick_critic(const Dataset& d, Rng& rng) {
  CriticConfig cc;
  cc.steps = 300;
  cc.hidden_dim = 16;
  return train_critic(d, cc, rng).critic;
}

}  // namespace

TEST_CASE("expectile one half is half the squared loss") {
  Rng rng(1);
  const Vector u = testing::random_matrix(50, 1, rng, -3, 3);
  CHECK(expectile_loss(u, 0.5) == doctest::Approx(0.5 * u.squaredNorm() / 50.0).epsilon(1e-14));
  // upper expectile penalizes positive residuals more
  Vector pos = Vector::Constant(1, 1.0);
  CHECK(expectile_loss(pos, 0.7) == doctest::Approx(0.7));
  CHECK(expectile_loss(Vector(-pos), 0.7) == doctest::Approx(0.3));
}

TEST_CASE("advantage weights") {
  const Vector w = awr_weights(Vector::Zero(16), 3.0, 100.0);
  CHECK((w.array() == 1.0).all());
  Vector a(3);
  a << 3.0, -3.0, 100.0;
  const Vector v = awr_weights(a, 3.0, 100.0);
  CHECK(v(0) == doctest::Approx(std::exp(1.0)));
  CHECK(v(1) == doctest::Approx(std::exp(-1.0)));
  CHECK(v(2) == 100.0);
}

TEST_CASE("zero advantage gives a plain cloning step") {
  Rng rng(2);
  const Dataset d = generate_dataset(PointMassEnv{}, {0.5}, 500, 1, rng)[0];
  IqlConfig cfg = small_config(1);
  IqlAgent agent = init_iql_agent(2, 2, Standardizer::fit(d), cfg, 0.99, 3);
  // identical value and target critic outputs make every advantage zero
  agent.q_target.params().setZero();
  agent.v_net.params().setZero();
  IqlLearner learner = make_learner(agent, cfg.learning_rate);
  const IqlBatch batch = sample_iql_batch(to_arrays(d), 64, rng);
  const Matrix before = actor_actions(learner.agent, batch.states);
  const IqlLosses losses = iql_step(learner, batch);
  const double bc = (before - batch.actions).rowwise().squaredNorm().mean();
  CHECK(losses.actor == doctest::Approx(bc).epsilon(1e-12));
  CHECK(losses.value == 0.0);
}

TEST_CASE("actor actions stay in the box") {
  Rng rng(3);
  IqlAgent agent = init_iql_agent(3, 2, Standardizer::identity(3), small_config(1), 0.99, 4);
  agent.actor.params() *= 50.0;
  const Matrix a = actor_actions(agent, testing::random_matrix(200, 3, rng, -1000, 1000));
  CHECK(a.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("regularizer actor gradient matches finite differences") {
  Rng rng(5);
  const Dataset d = generate_dataset(PointMassEnv{}, {0.5}, 500, 1, rng)[0];
  const Critic critic = quick_critic(d, rng);
  IqlConfig cfg = small_config(1);
  cfg.hidden_dim = 8;
  const IqlAgent agent = init_iql_agent(2, 2, Standardizer::fit(d), cfg, 0.99, 6);
  BwdConfig bc;
  bc.hidden_dim = 8;
  PotentialPair p = init_potentials(2, 2, bc, critic.standardizer, 0.1, 7);
  p.g_net = init_network(4, 8, 1, 8);
  p.f_net = init_network(4, 8, 1, 9);
  const Matrix states = gather_rows(to_arrays(d).states, {0, 50, 100, 150, 200, 250});
  const RandomPolicy policy{2};

  Rng r0(10);
  const RegTerm term = bwd_reg_term(agent, p, critic, states, policy, 3, r0);
  IqlAgent probe = agent;
  const auto report = testing::check_gradient(agent.actor.params(), term.actor_grad.flat,
                                              [&](const Vector& x) {
                                                probe.actor.params() = x;
                                                Rng r(10);
                                                return bwd_reg_term(probe, p, critic, states, policy, 3, r).value;
                                              },
                                              1e-6);
  CHECK(report.probes > 20);
  CHECK(report.max_rel_error <= 1e-3);

  // potential gradients agree with the dual objective on the same batch
  const DualResult r = dual_objective(p, term.batch);
  CHECK(r.value == doctest::Approx(term.value).epsilon(1e-12));
  CHECK((r.g_grad.flat - term.g_grad.flat).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((r.f_grad.flat - term.f_grad.flat).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("actor update leaves potentials and critic untouched") {
  Rng rng(11);
  const Dataset d = generate_dataset(PointMassEnv{}, {0.5}, 500, 1, rng)[0];
  const Critic critic = quick_critic(d, rng);
  const IqlConfig cfg = small_config(1);
  IqlLearner learner = make_learner(init_iql_agent(2, 2, Standardizer::fit(d), cfg, 0.99, 12),
                                    cfg.learning_rate);
  const PotentialPair p = init_potentials(2, 2, BwdConfig{}, critic.standardizer, 0.1, 13);
  const PotentialPair p_before = p;
  const Critic c_before = critic;
  const DatasetArrays arr = to_arrays(d);
  const RegTerm term = bwd_reg_term(learner.agent, p, critic, arr.states.topRows(32),
                                    RandomPolicy{2}, 4, rng);
  Gradients extra;
  extra.flat = -term.actor_grad.flat;
  const Network actor_before = learner.agent.actor;
  iql_step(learner, sample_iql_batch(arr, 64, rng), &extra);
  CHECK(p.g_net == p_before.g_net);
  CHECK(p.f_net == p_before.f_net);
  CHECK(critic.q_net == c_before.q_net);
  CHECK(!(learner.agent.actor == actor_before));
}

TEST_CASE("zero lambda reproduces plain IQL exactly") {
  for (const std::string name : {"pointmass", "grid"}) {
    auto env = make_env(name);
    Rng data_rng(14);
    const Dataset d = generate_dataset(*env, {0.5}, 2000, 2, data_rng)[0];
    const IqlConfig cfg = small_config(200);
    Rng a(7), b(7);
    const IqlRun base = train_iql(d, *env, std::nullopt, cfg, a);
    const IqlRun zero = train_iql(d, *env, small_reg(0.0), cfg, b);
    CAPTURE(name);
    CHECK(curve_csv(base, 7) == curve_csv(zero, 7));
    CHECK(base.agent.actor == zero.agent.actor);
    CHECK(base.variant == "iql");
    CHECK(zero.variant == "iql");
    REQUIRE(base.curve.size() == 4);
    CHECK(base.curve.back().step == 200);
  }
}

TEST_CASE("nonzero lambda changes the actor") {
  auto env = make_env("pointmass");
  Rng data_rng(15);
  const Dataset d = generate_dataset(*env, {0.5}, 2000, 2, data_rng)[0];
  const IqlConfig cfg = small_config(100);
  Rng a(7), b(7);
  const IqlRun base = train_iql(d, *env, std::nullopt, cfg, a);
  const IqlRun reg = train_iql(d, *env, small_reg(1.0), cfg, b);
  CHECK(reg.variant == "iql_bwd");
  CHECK(!(base.agent.actor == reg.agent.actor));
  CHECK(base.agent.v_net == reg.agent.v_net);
  CHECK(base.agent.q_net == reg.agent.q_net);
}

TEST_CASE("trained agent beats the mixed behaviour on the chain") {
  auto env = make_env("grid");
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const Dataset d = generate_dataset(*env, {0.3}, 10000, 3, rng)[0];
    double behaviour = 0.0;
    for (std::size_t k = 0; k < d.num_trajectories(); ++k) {
      const auto [b, e] = d.trajectory_range(k);
      for (std::size_t i = b; i < e; ++i) behaviour += d.transitions[i].reward;
    }
    behaviour /= static_cast<double>(d.num_trajectories());
    IqlConfig cfg = small_config(3000);
    cfg.hidden_dim = 64;
    cfg.eval_episodes = 20;
    const IqlRun run = train_iql(d, *env, std::nullopt, cfg, rng);
    CAPTURE(seed);
    CHECK(run.curve.back().mean_return >= behaviour);
  }
}

TEST_CASE("expert-like actor scores higher on expert potentials") {
  PointMassEnv env;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const Dataset d = generate_dataset(env, {1.0}, 4000, 2, rng)[0];
    CriticConfig cc;
    cc.steps = 2000;
    cc.hidden_dim = 64;
    const Critic critic = train_critic(d, cc, rng).critic;
    BwdConfig bc;
    bc.ot_steps = 2000;
    bc.hidden_dim = 64;
    bc.batch_size = 64;
    const RandomPolicy policy{2};
    const BwdTraining t = train_bwd(critic, d, policy, bc, rng);

    IqlConfig cfg = small_config(1);
    cfg.hidden_dim = 64;
    IqlLearner expert = make_learner(init_iql_agent(2, 2, Standardizer::fit(d), cfg, 0.99, seed),
                                     1e-3);
    const DatasetArrays arr = to_arrays(d);
    for (int i = 0; i < 1500; ++i) iql_step(expert, sample_iql_batch(arr, 64, rng));
    IqlAgent centre = expert.agent;
    centre.actor.params().setZero();

    const Matrix states = arr.states.topRows(512);
    Rng r1(seed + 100), r2(seed + 100);
    const double v_expert = bwd_reg_term(expert.agent, t.potentials, critic, states, policy, 8, r1).value;
    const double v_centre = bwd_reg_term(centre, t.potentials, critic, states, policy, 8, r2).value;
    CAPTURE(seed);
    CHECK(v_expert > v_centre);
  }
}

TEST_CASE("train_iql argument checks") {
  auto env = make_env("pointmass");
  Rng rng(16);
  const Dataset d = generate_dataset(*env, {0.5}, 200, 1, rng)[0];
  CHECK_THROWS_AS(train_iql(d, *env, small_reg(-1.0), small_config(10), rng), InvalidArgument);
  IqlConfig bad = small_config(10);
  bad.expectile = 1.0;
  CHECK_THROWS_AS(train_iql(d, *env, std::nullopt, bad, rng), InvalidArgument);
  CHECK_THROWS_AS(train_iql(d, *make_env("grid"), std::nullopt, small_config(10), rng), InvalidArgument);
}

TEST_CASE("curve csv and agent persistence") {
  IqlRun run;
  run.variant = "iql";
  run.curve = {{10, -5.5, 90.25}, {20, -4.0, 95.0}};
  CHECK(curve_csv(run, 3) ==
        "step,mean_return,normalized_return,seed,variant\n10,-5.5,90.25,3,iql\n20,-4,95,3,iql\n");

  const IqlAgent a = init_iql_agent(3, 2, Standardizer::identity(3), small_config(1), 0.95, 5);
  const auto dir = std::filesystem::temp_directory_path() / "bwdq_test_agent";
  std::filesystem::remove_all(dir);
  save_agent(a, dir);
  const IqlAgent b = load_agent(dir);
  CHECK(b.actor == a.actor);
  CHECK(b.q_net == a.q_net);
  CHECK(b.q_target == a.q_target);
  CHECK(b.v_net == a.v_net);
  CHECK(b.discount == a.discount);
  CHECK(b.standardizer.std == a.standardizer.std);
  std::filesystem::remove_all(dir);
}

TEST_CASE("reference returns normalize to zero and one hundred") {
  PointMassEnv env;
  Rng rng(17);
  const ReturnScale s = reference_returns(env, 50, rng);
  CHECK(s.random_return < s.expert_return);
  CHECK(s.normalize(s.random_return) == doctest::Approx(0.0));
  CHECK(s.normalize(s.expert_return) == doctest::Approx(100.0));
  CHECK_THROWS_AS((ReturnScale{1.0, 1.0}.normalize(0.5)), NumericError);
}

#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"

#include "bwdq/approx.hpp"
#include "bwdq/errors.hpp"
#include "test_support.hpp"

using namespace bwdq;

namespace {

// Straight-line scalar reimplementation of the forward pass.
double scalar_forward(const Network& net, const Matrix& x, Eigen::Index row, Eigen::Index out) {
  double y = net.b2()(out);
  for (int j = 0; j < net.hidden_dim(); ++j) {
    double pre = net.b1()(j);
    for (int k = 0; k < net.input_dim(); ++k) pre += net.w1()(j, k) * x(row, k);
    y += net.w2()(out, j) * (pre > 0.0 ? pre : 0.0);
  }
  return y;
}

double weighted_output(const Network& net, const Matrix& x, const Matrix& upstream) {
  return (forward(net, x).array() * upstream.array()).sum();
}

}  // namespace

TEST_CASE("init_network is deterministic and bounded") {
  const Network a = init_network(2, 4, 1, 7);
  const Network b = init_network(2, 4, 1, 7);
  CHECK(a == b);

  const Network c = init_network(3, 256, 1, 0);
  CHECK(c.w1().cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 3.0));
  CHECK(c.b1().isZero());
  CHECK(c.b2().isZero());

  const Network d = init_network(2, 8, 1, 1);
  CHECK(forward(d, Matrix::Zero(3, 2)).isZero());

  CHECK_THROWS_AS(init_network(0, 4, 1, 0), InvalidArgument);
  CHECK_THROWS_AS(init_network(2, -1, 1, 0), InvalidArgument);
}

TEST_CASE("forward") {
  SUBCASE("identity-like 1-1-1 network") {
    Network net(1, 1, 1);
    net.w1()(0, 0) = 1.0;
    net.w2()(0, 0) = 1.0;
    Matrix x(1, 1);
    x << 2.0;
    CHECK(forward(net, x)(0, 0) == 2.0);
  }
  SUBCASE("matches scalar loop") {
    const Network net = init_network(5, 16, 3, 11);
    std::mt19937_64 rng(3);
    const Matrix x = testing::random_matrix(9, 5, rng);
    const Matrix y = forward(net, x);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index o = 0; o < 3; ++o) {
        CHECK(y(r, o) == doctest::Approx(scalar_forward(net, x, r, o)).epsilon(1e-12));
      }
    }
    CHECK(forward_cached(net, x).output == y);
  }
  SUBCASE("shape mismatch") {
    const Network net = init_network(3, 4, 1, 0);
    CHECK_THROWS_AS(forward(net, Matrix::Zero(2, 4)), InvalidArgument);
    CHECK_THROWS_AS(backward(net, Matrix::Zero(2, 3), Matrix::Zero(3, 1)), InvalidArgument);
  }
}

TEST_CASE("backward") {
  SUBCASE("zero upstream gives zero gradients") {
    const Network net = init_network(3, 8, 2, 5);
    const Gradients g = backward(net, Matrix::Ones(4, 3), Matrix::Zero(4, 2));
    CHECK(g.flat.isZero());
  }
  SUBCASE("dead relu gives zero first-layer gradient") {
    Network net = init_network(2, 8, 1, 5);
    net.b1().setConstant(-100.0);
    const Gradients g = backward(net, Matrix::Ones(4, 2), Matrix::Ones(4, 1));
    const Eigen::Index w1n = 8 * 2;
    CHECK(g.flat.head(w1n).isZero());
  }
  SUBCASE("finite differences, h=1e-4") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
      Network net = init_network(3, 8, 2, 100 + trial);
      net.b1() = testing::random_matrix(8, 1, rng) * 0.3;
      net.b2() = testing::random_matrix(2, 1, rng);
      const Matrix x = testing::random_matrix(6, 3, rng);
      const Matrix up = testing::random_matrix(6, 2, rng);
      const Gradients g = backward(net, x, up);
      CHECK(g.all_finite());
      const auto report = testing::check_gradient(
          net.params(), g.flat,
          [&](const Vector& p) {
            Network probe = net;
            probe.params() = p;
            return weighted_output(probe, x, up);
          },
          1e-4);
      CHECK(report.max_rel_error <= 1e-3);
    }
  }
  SUBCASE("input gradient") {
    std::mt19937_64 rng(23);
    const Network net = init_network(4, 8, 1, 9);
    const Matrix x = testing::random_matrix(5, 4, rng);
    const Matrix up = testing::random_matrix(5, 1, rng);
    ForwardCache cache = forward_cached(net, x);
    Gradients g;
    Matrix dx;
    backward_into(net, cache, up, g, &dx);
    Vector flat_x = Eigen::Map<const Vector>(x.data(), x.size());
    Vector flat_dx = Eigen::Map<const Vector>(dx.data(), dx.size());
    const auto report = testing::check_gradient(
        flat_x, flat_dx,
        [&](const Vector& p) {
          Matrix probe = Eigen::Map<const Matrix>(p.data(), x.rows(), x.cols());
          return weighted_output(net, probe, up);
        },
        1e-4);
    CHECK(report.max_rel_error <= 1e-3);
  }
}

TEST_CASE("optim_step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Network net = init_network(2, 4, 1, 1);
    const Network before = net;
    OptimState st = OptimState::for_size(net.num_params());
    optim_step(net, Gradients{Vector::Zero(net.num_params())}, st);
    CHECK(net == before);
    CHECK(st.step_count == 1);
  }
  SUBCASE("first step magnitude equals learning rate") {
    Vector p = Vector::Zero(1);
    OptimState st = OptimState::for_size(1, 0.1);
    optim_step(p, Vector::Ones(1), st);
    CHECK(p(0) == doctest::Approx(-0.1).epsilon(1e-6));
  }
  SUBCASE("quadratic convergence") {
    // (p-3)^2 from p=0; with lr 0.1 adaptive steps reach the minimum within 100 steps.
    Vector p = Vector::Zero(1);
    OptimState st = OptimState::for_size(1, 0.1);
    for (int i = 0; i < 100; ++i) {
      Vector g(1);
      g << 2.0 * (p(0) - 3.0);
      optim_step(p, g, st);
    }
    CHECK(std::abs(p(0) - 3.0) < 0.1);
  }
  SUBCASE("non-finite gradient") {
    Vector p = Vector::Zero(2);
    OptimState st = OptimState::for_size(2);
    Vector g(2);
    g << 1.0, std::nan("");
    CHECK_THROWS_AS(optim_step(p, g, st), NumericError);
  }
  SUBCASE("second moment stays non-negative") {
    std::mt19937_64 rng(1);
    Vector p = Vector::Zero(10);
    OptimState st = OptimState::for_size(10);
    for (int i = 0; i < 50; ++i) optim_step(p, testing::random_matrix(10, 1, rng), st);
    CHECK(st.second_moment.minCoeff() >= 0.0);
  }
}

TEST_CASE("polyak update is the exact convex combination") {
  Network online = init_network(2, 4, 1, 1);
  Network target = init_network(2, 4, 1, 2);
  const Vector expected = (1.0 - 0.25) * target.params() + 0.25 * online.params();
  polyak_update(target, online, 0.25);
  CHECK(target.params() == expected);
}

TEST_CASE("determinism of a short training trajectory") {
  auto run = [] {
    Network net = init_network(3, 8, 1, 42);
    OptimState st = OptimState::for_size(net.num_params(), 1e-2);
    std::mt19937_64 rng(9);
    for (int i = 0; i < 20; ++i) {
      const Matrix x = testing::random_matrix(16, 3, rng);
      const Matrix y = forward(net, x);
      optim_step(net, backward(net, x, y), st);
    }
    return net;
  };
  CHECK(run() == run());
}

TEST_CASE("NET1 serialization") {
  const Network net = init_network(3, 5, 2, 4);
  std::stringstream ss;
  save_network(net, ss);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "NET1");
  CHECK(bytes.size() == 4 + 12 + 1 + 8 * static_cast<std::size_t>(net.num_params()));
  std::stringstream in(bytes);
  CHECK(load_network(in) == net);

  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(load_network(bad), FormatError);
  std::stringstream truncated(bytes.substr(0, 30));
  CHECK_THROWS_AS(load_network(truncated), FormatError);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace bwdq::testing {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                     double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

struct GradientReport {
  double max_rel_error = 0.0;
  int probes = 0;
};

// Central finite-difference check. Compares entries of `analytic` against
// (f(p + h e_i) - f(p - h e_i)) / 2h over `indices` (all entries when empty),
// skipping entries where both gradients are below 1e-6 in magnitude.
inline GradientReport check_gradient(const Eigen::VectorXd& params,
                                     const Eigen::VectorXd& analytic,
                                     const std::function<double(const Eigen::VectorXd&)>& f,
                                     double h, std::vector<Eigen::Index> indices = {}) {
  if (indices.empty()) {
    for (Eigen::Index i = 0; i < params.size(); ++i) indices.push_back(i);
  }
  GradientReport report;
  Eigen::VectorXd probe = params;
  for (Eigen::Index i : indices) {
    probe(i) = params(i) + h;
    const double up = f(probe);
    probe(i) = params(i) - h;
    const double down = f(probe);
    probe(i) = params(i);
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic(i);
    if (std::abs(a) <= 1e-6 && std::abs(numeric) <= 1e-6) continue;
    const double rel = std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
    report.max_rel_error = std::max(report.max_rel_error, rel);
    ++report.probes;
  }
  return report;
}

inline std::vector<Eigen::Index> random_indices(Eigen::Index n, int count, std::mt19937_64& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> out;
  for (int i = 0; i < count; ++i) out.push_back(pick(rng));
  return out;
}

}  // namespace bwdq::testing

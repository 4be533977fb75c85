#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include <Eigen/Dense>

namespace bwdq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint8_t { kRelu = 0 };

// One-hidden-layer dense network: out = W2 * relu(W1 * x + b1) + b2.
//
// Parameters live in a single flat vector laid out as
//   [ W1 (hidden x input, column-major) | b1 | W2 (output x hidden, column-major) | b2 ]
// so that optimizers, target-network averaging and serialization can treat them
// uniformly. Gradients use the same layout.
class Network {
 public:
  Network() = default;
  Network(int input_dim, int hidden_dim, int output_dim);

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int output_dim() const { return output_dim_; }
  Activation activation() const { return activation_; }

  Eigen::Index num_params() const { return params_.size(); }
  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  Eigen::Map<Matrix> w1();
  Eigen::Map<const Matrix> w1() const;
  Eigen::Map<Vector> b1();
  Eigen::Map<const Vector> b1() const;
  Eigen::Map<Matrix> w2();
  Eigen::Map<const Matrix> w2() const;
  Eigen::Map<Vector> b2();
  Eigen::Map<const Vector> b2() const;

  bool all_finite() const { return params_.allFinite(); }

  friend bool operator==(const Network& a, const Network& b);

 private:
  int input_dim_ = 0;
  int hidden_dim_ = 0;
  int output_dim_ = 0;
  Activation activation_ = Activation::kRelu;
  Vector params_;
};

// Flat gradient vector in the same layout as Network::params().
struct Gradients {
  Vector flat;

  bool all_finite() const { return flat.allFinite(); }
};

// Adaptive-moment optimizer state for one parameter vector.
struct OptimState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step_count = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_opt = 1e-8;

  static OptimState for_size(Eigen::Index n, double learning_rate = 3e-4);
};

// Forward state kept for backward(). Rows are processed in blocks of
// kRowBlock so the hidden activations stay in cache; backward() recomputes them
// block by block instead of storing B x hidden matrices. Trainers keep one cache
// per network and pass it back in to avoid reallocation.
inline constexpr Eigen::Index kRowBlock = 64;

struct ForwardCache {
  Matrix input;   // B x input_dim
  Matrix output;  // B x output_dim
  Matrix pre;     // block workspace, kRowBlock x hidden_dim
  Matrix d_pre;   // block workspace, kRowBlock x hidden_dim
};

// Fan-in scaled uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)], zero biases.
Network init_network(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed);

Matrix forward(const Network& net, const Matrix& batch);
ForwardCache forward_cached(const Network& net, const Matrix& batch);
const Matrix& forward_cached(const Network& net, const Matrix& batch, ForwardCache& cache);

// Exact gradient of sum(upstream .* forward(net, batch)) with respect to the parameters.
Gradients backward(const Network& net, const Matrix& batch, const Matrix& upstream_grad);
Gradients backward(const Network& net, ForwardCache& cache, const Matrix& upstream_grad);

// Writes parameter gradients into `grads` (resized as needed) and, when `input_grad`
// is non-null, d/d(batch) as a B x input_dim matrix.
void backward_into(const Network& net, ForwardCache& cache, const Matrix& upstream_grad,
                   Gradients& grads, Matrix* input_grad = nullptr);

// Bias-corrected adaptive-moment update (descent direction). Throws NumericError
// on non-finite gradients.
void optim_step(Vector& params, const Vector& grads, OptimState& state);
void optim_step(Network& net, const Gradients& grads, OptimState& state);

// target <- (1 - rate) * target + rate * online, elementwise.
void polyak_update(Network& target, const Network& online, double rate);

void save_network(const Network& net, std::ostream& out);
Network load_network(std::istream& in);

}  // namespace bwdq

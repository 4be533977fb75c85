#include "bwdq/approx.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "bwdq/binio.hpp"
#include "bwdq/errors.hpp"

namespace bwdq {

namespace {

Eigen::Index w1_size(const Network& n) { return Eigen::Index(n.hidden_dim()) * n.input_dim(); }
Eigen::Index w2_offset(const Network& n) { return w1_size(n) + n.hidden_dim(); }
Eigen::Index b2_offset(const Network& n) {
  return w2_offset(n) + Eigen::Index(n.output_dim()) * n.hidden_dim();
}

void check_batch(const Network& net, const Matrix& batch) {
  if (batch.cols() != net.input_dim()) {
    throw InvalidArgument("network expects " + std::to_string(net.input_dim()) +
                          " input columns, got " + std::to_string(batch.cols()));
  }
}

}  // namespace

Network::Network(int input_dim, int hidden_dim, int output_dim)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), output_dim_(output_dim) {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) {
    throw InvalidArgument("network dimensions must be >= 1");
  }
  const Eigen::Index n = Eigen::Index(hidden_dim) * input_dim + hidden_dim +
                         Eigen::Index(output_dim) * hidden_dim + output_dim;
  params_ = Vector::Zero(n);
}

Eigen::Map<Matrix> Network::w1() { return {params_.data(), hidden_dim_, input_dim_}; }
Eigen::Map<const Matrix> Network::w1() const { return {params_.data(), hidden_dim_, input_dim_}; }
Eigen::Map<Vector> Network::b1() { return {params_.data() + w1_size(*this), hidden_dim_}; }
Eigen::Map<const Vector> Network::b1() const {
  return {params_.data() + w1_size(*this), hidden_dim_};
}
Eigen::Map<Matrix> Network::w2() {
  return {params_.data() + w2_offset(*this), output_dim_, hidden_dim_};
}
Eigen::Map<const Matrix> Network::w2() const {
  return {params_.data() + w2_offset(*this), output_dim_, hidden_dim_};
}
Eigen::Map<Vector> Network::b2() { return {params_.data() + b2_offset(*this), output_dim_}; }
Eigen::Map<const Vector> Network::b2() const {
  return {params_.data() + b2_offset(*this), output_dim_};
}

bool operator==(const Network& a, const Network& b) {
  return a.input_dim_ == b.input_dim_ && a.hidden_dim_ == b.hidden_dim_ &&
         a.output_dim_ == b.output_dim_ && a.activation_ == b.activation_ &&
         a.params_ == b.params_;
}

OptimState OptimState::for_size(Eigen::Index n, double learning_rate) {
  OptimState s;
  s.first_moment = Vector::Zero(n);
  s.second_moment = Vector::Zero(n);
  s.learning_rate = learning_rate;
  return s;
}

Network init_network(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed) {
  Network net(input_dim, hidden_dim, output_dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u1(-std::sqrt(6.0 / input_dim),
                                            std::sqrt(6.0 / input_dim));
  std::uniform_real_distribution<double> u2(-std::sqrt(6.0 / hidden_dim),
                                            std::sqrt(6.0 / hidden_dim));
  auto w1 = net.w1();
  for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] = u1(rng);
  auto w2 = net.w2();
  for (Eigen::Index i = 0; i < w2.size(); ++i) w2.data()[i] = u2(rng);
  return net;
}

namespace {

// Pre-activations of rows [r0, r0 + n) into `pre`, then the outputs into `out`.
void forward_block(const Network& net, const Matrix& batch, Eigen::Index r0, Eigen::Index n,
                   Matrix& pre, Matrix& out) {
  pre.resize(n, net.hidden_dim());
  pre.noalias() = batch.middleRows(r0, n) * net.w1().transpose();
  pre.rowwise() += net.b1().transpose();
  out.middleRows(r0, n).noalias() = pre.cwiseMax(0.0) * net.w2().transpose();
  out.middleRows(r0, n).rowwise() += net.b2().transpose();
}

}  // namespace

const Matrix& forward_cached(const Network& net, const Matrix& batch, ForwardCache& c) {
  check_batch(net, batch);
  c.input = batch;
  c.output.resize(batch.rows(), net.output_dim());
  for (Eigen::Index r0 = 0; r0 < batch.rows(); r0 += kRowBlock) {
    forward_block(net, c.input, r0, std::min(kRowBlock, batch.rows() - r0), c.pre, c.output);
  }
  return c.output;
}

ForwardCache forward_cached(const Network& net, const Matrix& batch) {
  ForwardCache c;
  forward_cached(net, batch, c);
  return c;
}

Matrix forward(const Network& net, const Matrix& batch) {
  check_batch(net, batch);
  Matrix out(batch.rows(), net.output_dim());
  Matrix pre;
  for (Eigen::Index r0 = 0; r0 < batch.rows(); r0 += kRowBlock) {
    forward_block(net, batch, r0, std::min(kRowBlock, batch.rows() - r0), pre, out);
  }
  return out;
}

void backward_into(const Network& net, ForwardCache& cache, const Matrix& upstream_grad,
                   Gradients& grads, Matrix* input_grad) {
  if (upstream_grad.rows() != cache.output.rows() ||
      upstream_grad.cols() != net.output_dim()) {
    throw InvalidArgument("upstream gradient shape does not match network output");
  }
  grads.flat.setZero(net.num_params());
  const Eigen::Index h = net.hidden_dim();
  const Eigen::Index rows = cache.input.rows();

  Eigen::Map<Matrix> dw1(grads.flat.data(), h, net.input_dim());
  Eigen::Map<Vector> db1(grads.flat.data() + w1_size(net), h);
  Eigen::Map<Matrix> dw2(grads.flat.data() + w2_offset(net), net.output_dim(), h);
  Eigen::Map<Vector> db2(grads.flat.data() + b2_offset(net), net.output_dim());
  if (input_grad != nullptr) input_grad->resize(rows, net.input_dim());

  Matrix& pre = cache.pre;
  Matrix& d_pre = cache.d_pre;
  for (Eigen::Index r0 = 0; r0 < rows; r0 += kRowBlock) {
    const Eigen::Index n = std::min(kRowBlock, rows - r0);
    const auto x = cache.input.middleRows(r0, n);
    const auto up = upstream_grad.middleRows(r0, n);
    pre.resize(n, h);
    pre.noalias() = x * net.w1().transpose();
    pre.rowwise() += net.b1().transpose();
    dw2.noalias() += up.transpose() * pre.cwiseMax(0.0);
    db2 += up.colwise().sum().transpose();

    // relu derivative: zero where the pre-activation is not positive
    d_pre.resize(n, h);
    d_pre.noalias() = up * net.w2();
    {
      double* d = d_pre.data();
      const double* p = pre.data();
      for (Eigen::Index i = 0; i < d_pre.size(); ++i) d[i] = p[i] > 0.0 ? d[i] : 0.0;
    }
    for (Eigen::Index k = 0; k < x.cols(); ++k) dw1.col(k).noalias() += d_pre.transpose() * x.col(k);
    db1 += d_pre.colwise().sum().transpose();
    if (input_grad != nullptr) input_grad->middleRows(r0, n).noalias() = d_pre * net.w1();
  }
}

Gradients backward(const Network& net, ForwardCache& cache, const Matrix& upstream_grad) {
  Gradients g;
  backward_into(net, cache, upstream_grad, g);
  return g;
}

Gradients backward(const Network& net, const Matrix& batch, const Matrix& upstream_grad) {
  ForwardCache cache = forward_cached(net, batch);
  return backward(net, cache, upstream_grad);
}

void optim_step(Vector& params, const Vector& grads, OptimState& state) {
  if (grads.size() != params.size()) {
    throw InvalidArgument("gradient size does not match parameter size");
  }
  if (!grads.allFinite()) {
    throw NumericError("non-finite gradient passed to optimizer");
  }
  if (state.first_moment.size() != params.size()) {
    state.first_moment = Vector::Zero(params.size());
    state.second_moment = Vector::Zero(params.size());
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
  params.array() -= state.learning_rate * (state.first_moment.array() / bc1) /
                    ((state.second_moment.array() / bc2).sqrt() + state.eps_opt);
}

void optim_step(Network& net, const Gradients& grads, OptimState& state) {
  optim_step(net.params(), grads.flat, state);
}

void polyak_update(Network& target, const Network& online, double rate) {
  if (target.num_params() != online.num_params()) {
    throw InvalidArgument("target and online networks differ in shape");
  }
  target.params() = (1.0 - rate) * target.params() + rate * online.params();
}

void save_network(const Network& net, std::ostream& out) {
  out.write("NET1", 4);
  binio::write_u32(out, static_cast<std::uint32_t>(net.input_dim()));
  binio::write_u32(out, static_cast<std::uint32_t>(net.hidden_dim()));
  binio::write_u32(out, static_cast<std::uint32_t>(net.output_dim()));
  binio::write_u8(out, static_cast<std::uint8_t>(net.activation()));
  for (Eigen::Index i = 0; i < net.num_params(); ++i) binio::write_f64(out, net.params()[i]);
}

Network load_network(std::istream& in) {
  binio::Reader r(in);
  if (r.magic(4) != "NET1") throw FormatError("bad network magic", 0);
  const auto in_dim = r.u32("input_dim");
  const auto hid = r.u32("hidden_dim");
  const auto out_dim = r.u32("output_dim");
  const auto tag_offset = r.offset();
  if (r.u8("activation") != static_cast<std::uint8_t>(Activation::kRelu)) {
    throw FormatError("unknown activation tag", tag_offset);
  }
  if (in_dim == 0 || hid == 0 || out_dim == 0) throw FormatError("zero network dimension", 4);
  Network net(static_cast<int>(in_dim), static_cast<int>(hid), static_cast<int>(out_dim));
  for (Eigen::Index i = 0; i < net.num_params(); ++i) net.params()[i] = r.f64("parameter");
  return net;
}

}  // namespace bwdq

#include "bwdq/critic.hpp"

#include <cmath>
#include <fstream>

#include "bwdq/errors.hpp"

namespace bwdq {

namespace {

void gather_into(const Matrix& src, const std::vector<std::size_t>& rows, Matrix& dst) {
  dst.resize(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    dst.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(rows[i]));
  }
}

}  // namespace

Json CriticConfig::to_json() const {
  Json j = {{"steps", steps},
            {"batch_size", batch_size},
            {"hidden_dim", hidden_dim},
            {"learning_rate", learning_rate},
            {"polyak", polyak},
            {"standardize", standardize},
            {"anneal", anneal}};
  j["discount"] = discount ? Json(*discount) : Json(nullptr);
  return j;
}

Json ValueHeadConfig::to_json() const {
  return {{"steps", steps},
          {"batch_size", batch_size},
          {"hidden_dim", hidden_dim},
          {"learning_rate", learning_rate},
          {"anneal", anneal}};
}

Matrix critic_input(const Critic& critic, const Matrix& states, const Matrix& actions) {
  if (states.rows() != actions.rows() || states.cols() != critic.obs_dim() ||
      actions.cols() != critic.act_dim()) {
    throw InvalidArgument("critic input shape mismatch");
  }
  Matrix x(states.rows(), states.cols() + actions.cols());
  x.leftCols(states.cols()) = critic.standardizer.apply(states);
  x.rightCols(actions.cols()) = actions;
  return x;
}

CriticFit train_critic(const Dataset& dataset, const CriticConfig& config, Rng& rng) {
  if (dataset.empty()) throw InvalidArgument("cannot train a critic on an empty dataset");
  if (config.steps < 0 || config.batch_size < 1 || config.hidden_dim < 1) {
    throw InvalidArgument("invalid critic configuration");
  }
  if (!(config.polyak > 0.0 && config.polyak <= 1.0)) {
    throw InvalidArgument("polyak rate must lie in (0, 1]");
  }
  const double gamma = config.discount.value_or(dataset.discount);
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("critic discount must lie in [0, 1)");

  CriticFit fit;
  Critic& c = fit.critic;
  c.discount = gamma;
  c.polyak = config.polyak;
  c.standardizer = config.standardize ? Standardizer::fit(dataset)
                                      : Standardizer::identity(dataset.obs_dim);
  c.q_net = init_network(dataset.obs_dim + dataset.act_dim, config.hidden_dim, 1, rng());
  c.q_target = c.q_net;
  c.config_hash = config_hash(config.to_json());

  const DatasetArrays arr = to_arrays(dataset);
  const Matrix x = critic_input(c, arr.states, arr.actions);
  const Matrix xn = critic_input(c, arr.next_states, arr.next_actions);
  // bootstrap only where a next action exists and the episode continues
  const Vector bootstrap = arr.has_next.cwiseProduct((1.0 - arr.terminal.array()).matrix());

  // The output layer starts as the constant mean discounted return-to-go of the
  // data. Bootstrapping through a slow target otherwise leaves the initial
  // function's offset in place after 10k steps.
  // A bootstrapped transition whose successor is not stored continues with the
  // stationary guess mean(r) / (1 - gamma).
  const double tail = arr.rewards.mean() / (1.0 - gamma);
  Vector returns(arr.rewards.size());
  for (Eigen::Index i = returns.size() - 1; i >= 0; --i) {
    double next = 0.0;
    if (bootstrap(i) > 0.0) {
      const bool chained = i + 1 < returns.size() && arr.states.row(i + 1) == arr.next_states.row(i);
      next = chained ? returns(i + 1) : tail;
    }
    returns(i) = arr.rewards(i) + gamma * next;
  }
  c.q_net.w2().setZero();
  c.q_net.b2()(0) = returns.mean();
  c.q_target = c.q_net;

  OptimState opt = OptimState::for_size(c.q_net.num_params(), config.learning_rate);
  ForwardCache online_cache;
  ForwardCache target_cache;
  Gradients grads;
  Matrix xb, xnb, upstream(config.batch_size, 1);
  fit.loss.reserve(static_cast<std::size_t>(config.steps));

  for (int step = 0; step < config.steps; ++step) {
    if (config.anneal) {
      opt.learning_rate = config.learning_rate * (1.0 - static_cast<double>(step) / config.steps);
    }
    const auto idx = sample_indices(dataset.size(), static_cast<std::size_t>(config.batch_size), rng);
    gather_into(x, idx, xb);
    gather_into(xn, idx, xnb);
    const Matrix& q_next = forward_cached(c.q_target, xnb, target_cache);
    const Matrix& q = forward_cached(c.q_net, xb, online_cache);
    double loss = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double target = arr.rewards(idx[i]) + gamma * bootstrap(idx[i]) * q_next(r, 0);
      const double diff = q(r, 0) - target;
      loss += diff * diff;
      upstream(r, 0) = 2.0 * diff / config.batch_size;
    }
    loss /= config.batch_size;
    if (!std::isfinite(loss)) {
      throw NumericError("critic TD loss is not finite at step " + std::to_string(step));
    }
    fit.loss.push_back(loss);
    backward_into(c.q_net, online_cache, upstream, grads);
    optim_step(c.q_net, grads, opt);
    polyak_update(c.q_target, c.q_net, c.polyak);
  }
  c.trained = true;
  return fit;
}

Vector q_value(const Critic& critic, const Matrix& states, const Matrix& actions) {
  return forward(critic.q_net, critic_input(critic, states, actions)).col(0);
}

double q_value(const Critic& critic, const Vector& state, const Vector& action) {
  return q_value(critic, Matrix(state.transpose()), Matrix(action.transpose()))(0);
}

ValueHead fit_value_head(const Critic& critic, const Dataset& dataset,
                         const ValueHeadConfig& config, Rng& rng) {
  if (!critic.trained) throw InvalidState("value head needs a trained critic");
  if (dataset.empty()) throw InvalidArgument("cannot fit a value head on an empty dataset");
  if (config.steps < 0 || config.batch_size < 1 || config.hidden_dim < 1) {
    throw InvalidArgument("invalid value head configuration");
  }
  ValueHead head;
  head.standardizer = critic.standardizer;
  head.v_net = init_network(dataset.obs_dim, config.hidden_dim, 1, rng());

  const DatasetArrays arr = to_arrays(dataset);
  const Matrix s = head.standardizer.apply(arr.states);
  const Vector targets = q_value(critic, arr.states, arr.actions);

  // start at the mean target so training only has to fit the state dependence
  head.v_net.w2().setZero();
  head.v_net.b2()(0) = targets.mean();

  OptimState opt = OptimState::for_size(head.v_net.num_params(), config.learning_rate);
  ForwardCache cache;
  Gradients grads;
  Matrix sb, upstream(config.batch_size, 1);
  for (int step = 0; step < config.steps; ++step) {
    if (config.anneal) {
      opt.learning_rate = config.learning_rate * (1.0 - static_cast<double>(step) / config.steps);
    }
    const auto idx = sample_indices(dataset.size(), static_cast<std::size_t>(config.batch_size), rng);
    gather_into(s, idx, sb);
    const Matrix& v = forward_cached(head.v_net, sb, cache);
    double loss = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double diff = v(r, 0) - targets(idx[i]);
      loss += diff * diff;
      upstream(r, 0) = 2.0 * diff / config.batch_size;
    }
    if (!std::isfinite(loss)) {
      throw NumericError("value head loss is not finite at step " + std::to_string(step));
    }
    backward_into(head.v_net, cache, upstream, grads);
    optim_step(head.v_net, grads, opt);
  }
  head.trained = true;
  return head;
}

Vector v_value(const ValueHead& head, const Matrix& states) {
  if (states.cols() != head.v_net.input_dim()) throw InvalidArgument("value head input mismatch");
  return forward(head.v_net, head.standardizer.apply(states)).col(0);
}

void save_critic(const Critic& critic, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, net] : {std::pair{"critic_q.net", &critic.q_net},
                                  std::pair{"critic_q_target.net", &critic.q_target}}) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + (dir / name).string());
    save_network(*net, out);
  }
  const Json j = {{"discount", critic.discount},
                  {"polyak", critic.polyak},
                  {"standardizer", standardizer_to_json(critic.standardizer)},
                  {"trained", critic.trained},
                  {"config_hash", critic.config_hash}};
  std::ofstream out(dir / "critic.json");
  if (!out) throw InvalidArgument("cannot write " + (dir / "critic.json").string());
  out << j.dump(2) << '\n';
}

Critic load_critic(const std::filesystem::path& dir) {
  Critic c;
  for (const auto& [name, net] : {std::pair{"critic_q.net", &c.q_net},
                                  std::pair{"critic_q_target.net", &c.q_target}}) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + (dir / name).string());
    *net = load_network(in);
  }
  std::ifstream in(dir / "critic.json");
  if (!in) throw InvalidArgument("cannot open " + (dir / "critic.json").string());
  try {
    const Json j = Json::parse(in);
    c.discount = j.at("discount").get<double>();
    c.polyak = j.at("polyak").get<double>();
    c.standardizer = standardizer_from_json(j.at("standardizer"));
    c.trained = j.at("trained").get<bool>();
    c.config_hash = j.at("config_hash").get<std::string>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad critic sidecar: ") + e.what(), 0);
  }
  return c;
}

}  // namespace bwdq

#pragma once

// Softmax policy over {delay, maneuver}: a tanh MLP with hand-derived
// gradients, Adam, and REINFORCE with epsilon-greedy exploration.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "camdp/cdm.hpp"
#include "camdp/errors.hpp"
#include "camdp/rng.hpp"
#include "camdp/simenv.hpp"

namespace camdp {

enum class FeatureScaling {
  Linear,  // (d/100, sigma/100, moved, k/20)
  Log,     // log10 of d and sigma mapped from [1e-3, 1e2] km onto [0, 1]
};

struct PolicyShape {
  int input = 4;
  int hidden1 = 64;
  int hidden2 = 128;
  int output = 2;

  std::size_t count() const {
    return static_cast<std::size_t>(hidden1 * input + hidden1 + hidden2 * hidden1 + hidden2 +
                                    output * hidden2 + output);
  }
  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Flat parameter vector laid out as W1, b1, W2, b2, W3, b3 (column-major).
struct PolicyParams {
  PolicyShape shape;
  FeatureScaling features = FeatureScaling::Linear;
  std::uint64_t seed = 0;
  Eigen::VectorXd theta;
  AdamState adam;

  using MatMap = Eigen::Map<Eigen::MatrixXd>;
  using CMatMap = Eigen::Map<const Eigen::MatrixXd>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  using CVecMap = Eigen::Map<const Eigen::VectorXd>;

  struct Offsets {
    std::size_t w1, b1, w2, b2, w3, b3;
  };
  Offsets offsets() const {
    Offsets o{};
    o.w1 = 0;
    o.b1 = o.w1 + static_cast<std::size_t>(shape.hidden1 * shape.input);
    o.w2 = o.b1 + static_cast<std::size_t>(shape.hidden1);
    o.b2 = o.w2 + static_cast<std::size_t>(shape.hidden2 * shape.hidden1);
    o.w3 = o.b2 + static_cast<std::size_t>(shape.hidden2);
    o.b3 = o.w3 + static_cast<std::size_t>(shape.output * shape.hidden2);
    return o;
  }

  CMatMap w1() const { return {theta.data() + offsets().w1, shape.hidden1, shape.input}; }
  CVecMap b1() const { return {theta.data() + offsets().b1, shape.hidden1}; }
  CMatMap w2() const { return {theta.data() + offsets().w2, shape.hidden2, shape.hidden1}; }
  CVecMap b2() const { return {theta.data() + offsets().b2, shape.hidden2}; }
  CMatMap w3() const { return {theta.data() + offsets().w3, shape.output, shape.hidden2}; }
  CVecMap b3() const { return {theta.data() + offsets().b3, shape.output}; }

  bool finite() const { return theta.allFinite(); }

  /// Glorot-uniform weights from `seed`, zero biases, fresh Adam state.
  static PolicyParams init(const PolicyShape& shape, std::uint64_t seed,
                           FeatureScaling features = FeatureScaling::Linear) {
    if (shape.input != 4 || shape.output != 2 || shape.hidden1 < 1 || shape.hidden2 < 1) {
      fail(ErrorKind::ShapeMismatch, "policy needs 4 inputs, 2 outputs and non-empty hidden layers");
    }
    PolicyParams p;
    p.shape = shape;
    p.features = features;
    p.seed = seed;
    p.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.count()));
    Rng rng(derive_seed(seed, "policy-init"));
    const auto o = p.offsets();
    auto fill = [&](std::size_t off, int rows, int cols) {
      const double limit = std::sqrt(6.0 / (rows + cols));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (int i = 0; i < rows * cols; ++i) p.theta[static_cast<Eigen::Index>(off) + i] = u(rng);
    };
    fill(o.w1, shape.hidden1, shape.input);
    fill(o.w2, shape.hidden2, shape.hidden1);
    fill(o.w3, shape.output, shape.hidden2);
    p.adam.m = Eigen::VectorXd::Zero(p.theta.size());
    p.adam.v = Eigen::VectorXd::Zero(p.theta.size());
    return p;
  }
};

inline Eigen::Vector4d state_features(const MdpState& s, FeatureScaling scaling) {
  auto scale = [&](double x) {
    if (scaling == FeatureScaling::Linear) return x / kStateUpperBound;
    return (std::log10(std::clamp(x, 1e-3, kStateUpperBound)) + 3.0) / 5.0;
  };
  return {scale(s.d_m), scale(s.sigma_t), s.moved ? 1.0 : 0.0,
          static_cast<double>(s.k) / static_cast<double>(kLastStep)};
}

namespace detail {

inline std::array<double, 2> softmax2(double z0, double z1) {
  const double m = std::max(z0, z1);
  const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
  const double s = e0 + e1;
  return {e0 / s, e1 / s};
}

}  // namespace detail

/// Network probabilities without the moved-state override.
inline std::array<double, 2> network_probabilities(const PolicyParams& p, const MdpState& s) {
  const Eigen::Vector4d x = state_features(s, p.features);
  const Eigen::VectorXd h1 = (p.w1() * x + p.b1()).array().tanh();
  const Eigen::VectorXd h2 = (p.w2() * h1 + p.b2()).array().tanh();
  const Eigen::Vector2d z = p.w3() * h2 + p.b3();
  return detail::softmax2(z[0], z[1]);
}

/// [P(delay), P(maneuver)]. A moved state must continue, so it returns [1, 0].
inline std::array<double, 2> forward(const PolicyParams& p, const MdpState& s) {
  if (s.moved) return {1.0, 0.0};
  return network_probabilities(p, s);
}

/// Argmax of forward(); ties go to delay.
inline Action act_greedy(const PolicyParams& p, const MdpState& s) {
  const auto pr = forward(p, s);
  return pr[1] > pr[0] ? Action::Maneuver : Action::Delay;
}

/// Accumulates sum_j weight_j * d log pi(a_j | x_j) / d theta into grad for a
/// batch of feature columns X (4 x T).
inline void accumulate_log_prob_gradient(const PolicyParams& p, const Eigen::MatrixXd& x,
                                         const std::vector<int>& actions,
                                         const Eigen::RowVectorXd& weights,
                                         Eigen::VectorXd& grad) {
  const auto T = x.cols();
  if (T == 0) return;
  const Eigen::MatrixXd h1 = ((p.w1() * x).colwise() + p.b1()).array().tanh();
  const Eigen::MatrixXd h2 = ((p.w2() * h1).colwise() + p.b2()).array().tanh();
  const Eigen::MatrixXd z = (p.w3() * h2).colwise() + p.b3();

  Eigen::MatrixXd gz(2, T);  // (onehot(a) - p) * weight
  for (Eigen::Index j = 0; j < T; ++j) {
    const auto pr = detail::softmax2(z(0, j), z(1, j));
    const int a = actions[static_cast<std::size_t>(j)];
    gz(0, j) = ((a == 0 ? 1.0 : 0.0) - pr[0]) * weights[j];
    gz(1, j) = ((a == 1 ? 1.0 : 0.0) - pr[1]) * weights[j];
  }
  const auto o = p.offsets();
  const auto& s = p.shape;
  auto gmat = [&](std::size_t off, int rows, int cols) {
    return PolicyParams::MatMap(grad.data() + off, rows, cols);
  };
  auto gvec = [&](std::size_t off, int n) { return PolicyParams::VecMap(grad.data() + off, n); };

  gmat(o.w3, s.output, s.hidden2).noalias() += gz * h2.transpose();
  gvec(o.b3, s.output) += gz.rowwise().sum();
  const Eigen::MatrixXd ga2 =
      (p.w3().transpose() * gz).array() * (1.0 - h2.array().square());
  gmat(o.w2, s.hidden2, s.hidden1).noalias() += ga2 * h1.transpose();
  gvec(o.b2, s.hidden2) += ga2.rowwise().sum();
  const Eigen::MatrixXd ga1 =
      (p.w2().transpose() * ga2).array() * (1.0 - h1.array().square());
  gmat(o.w1, s.hidden1, s.input).noalias() += ga1 * x.transpose();
  gvec(o.b1, s.hidden1) += ga1.rowwise().sum();
}

/// d log pi(action | s) / d theta for a single non-moved state.
inline Eigen::VectorXd log_prob_gradient(const PolicyParams& p, const MdpState& s, Action action) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p.theta.size());
  if (s.moved) return g;
  Eigen::MatrixXd x = state_features(s, p.features);
  Eigen::RowVectorXd w = Eigen::RowVectorXd::Ones(1);
  accumulate_log_prob_gradient(p, x, {static_cast<int>(action)}, w, g);
  return g;
}

inline double log_prob(const PolicyParams& p, const MdpState& s, Action action) {
  return std::log(forward(p, s)[static_cast<std::size_t>(action)]);
}

/// One Adam step that ascends along `ascent`.
inline void adam_ascent_step(PolicyParams& p, const Eigen::VectorXd& ascent,
                             const AdamConfig& cfg) {
  auto& a = p.adam;
  if (a.m.size() != p.theta.size()) {
    a.m = Eigen::VectorXd::Zero(p.theta.size());
    a.v = Eigen::VectorXd::Zero(p.theta.size());
  }
  ++a.t;
  const double t = static_cast<double>(a.t);
  a.m = cfg.beta1 * a.m - (1.0 - cfg.beta1) * ascent;  // moments of the loss gradient
  a.v = cfg.beta2 * a.v + (1.0 - cfg.beta2) * ascent.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  p.theta.array() -=
      cfg.learning_rate * (a.m.array() / c1) / ((a.v.array() / c2).sqrt() + cfg.epsilon);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int iterations = 4000;
  int episodes_per_batch = 200;
  double eps_max = 0.1;
  double eps_min = 0.01;
  double eps_decay = 0.999;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  bool baseline = false;  // subtract the previous batch's mean reward
  // Roll a whole batch out against a frozen copy of the parameters (and
  // parallelize it). Off: each episode sees the previous episode's update.
  bool snapshot_per_batch = false;
  int threads = 1;
  PolicyShape shape;
  FeatureScaling features = FeatureScaling::Linear;
  // Extension: start the output bias at this per-step maneuver probability
  // instead of zero (0.5). Unset keeps the plain initialization.
  std::optional<double> initial_maneuver_prob;

  void validate() const {
    auto bad = [](const std::string& why) { fail(ErrorKind::ConfigError, why); };
    if (iterations < 1 || episodes_per_batch < 1) bad("iterations and episodes_per_batch must be >= 1");
    if (!(eps_min > 0.0 && eps_min <= eps_max && eps_max <= 1.0)) bad("need 0 < eps_min <= eps_max <= 1");
    if (!(eps_decay > 0.0 && eps_decay <= 1.0)) bad("eps_decay must lie in (0, 1]");
    if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
    if (threads < 1) bad("threads must be >= 1");
    if (initial_maneuver_prob && !(*initial_maneuver_prob > 0.0 && *initial_maneuver_prob < 1.0)) {
      bad("initial_maneuver_prob must lie in (0, 1)");
    }
  }
};

inline double epsilon_at(const TrainConfig& cfg, int batch) {
  return std::max(cfg.eps_min, cfg.eps_max * std::pow(cfg.eps_decay, batch));
}

struct BatchRecord {
  int batch = 0;
  double mean_reward = 0.0;  // over completed episodes
  double epsilon = 0.0;
  int aborted = 0;
  int maneuvers = 0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<BatchRecord> history;
  std::size_t aborted = 0;
};

namespace detail {

struct EpisodeSample {
  Eigen::MatrixXd x;  // features of every decision the network made
  std::vector<int> actions;
  double reward = 0.0;
  bool aborted = false;
  bool maneuvered = false;
};

// Env needs reset(Rng&), step(Action, Rng&) -> fuel, done(), state(), terminal_cost().
template <typename Env>
EpisodeSample sample_episode(Env& env, const PolicyParams& p, double eps, double eta, Rng& rng) {
  EpisodeSample out;
  std::array<double, kHorizonSteps> cols[4];
  int n = 0;
  double fuel = 0.0;
  try {
    env.reset(rng);
    while (!env.done()) {
      const MdpState s = env.state();
      Action a = Action::Delay;
      if (!s.moved) {
        if (uniform01(rng) < eps) {
          a = uniform01(rng) < 0.5 ? Action::Delay : Action::Maneuver;
        } else {
          const auto pr = network_probabilities(p, s);
          a = uniform01(rng) < pr[1] ? Action::Maneuver : Action::Delay;
        }
        const Eigen::Vector4d f = state_features(s, p.features);
        for (int r = 0; r < 4; ++r) cols[r][static_cast<std::size_t>(n)] = f[r];
        out.actions.push_back(static_cast<int>(a));
        out.maneuvered = out.maneuvered || a == Action::Maneuver;
        ++n;
      }
      fuel += env.step(a, rng);
    }
    out.reward = -(eta * fuel + (1.0 - eta) * env.terminal_cost());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::EpisodeAborted) throw;
    out.aborted = true;
    return out;
  }
  out.x.resize(4, n);
  for (int r = 0; r < 4; ++r) {
    for (int j = 0; j < n; ++j) out.x(r, j) = cols[r][static_cast<std::size_t>(j)];
  }
  return out;
}

}  // namespace detail

/// REINFORCE: per episode, theta <- theta + Adam(grad log pi(trajectory) * R).
/// make_env() is called once per worker and must return an independent env.
template <typename MakeEnv>
TrainResult train(MakeEnv&& make_env, const TrainConfig& cfg, double eta,
                  const std::function<void(const BatchRecord&)>& on_batch = {}) {
  cfg.validate();
  TrainResult result;
  result.params = PolicyParams::init(cfg.shape, cfg.seed, cfg.features);
  PolicyParams& p = result.params;
  if (cfg.initial_maneuver_prob) {
    const double q = *cfg.initial_maneuver_prob;
    p.theta[static_cast<Eigen::Index>(p.offsets().b3) + 1] = std::log(q / (1.0 - q));
  }
  const AdamConfig adam{cfg.learning_rate};
  const std::uint64_t stream = derive_seed(cfg.seed, "train");
  const auto n_ep = static_cast<std::size_t>(cfg.episodes_per_batch);
  const int workers = cfg.snapshot_per_batch ? std::max(1, cfg.threads) : 1;

  std::vector<decltype(make_env())> envs;
  for (int w = 0; w < workers; ++w) envs.push_back(make_env());

  Eigen::VectorXd grad(p.theta.size());
  double baseline = 0.0;
  std::vector<detail::EpisodeSample> samples(n_ep);

  auto apply = [&](const detail::EpisodeSample& ep, const PolicyParams& at) {
    if (ep.aborted || ep.actions.empty()) return;
    const double weight = ep.reward - (cfg.baseline ? baseline : 0.0);
    grad.setZero();
    Eigen::RowVectorXd w = Eigen::RowVectorXd::Constant(ep.x.cols(), weight);
    accumulate_log_prob_gradient(at, ep.x, ep.actions, w, grad);
    adam_ascent_step(p, grad, adam);
  };

  for (int i = 0; i < cfg.iterations; ++i) {
    const double eps = epsilon_at(cfg, i);
    auto run = [&](std::size_t e, int worker, const PolicyParams& at) {
      Rng rng(derive_seed(stream, {static_cast<std::uint64_t>(i), e}));
      samples[e] = detail::sample_episode(envs[static_cast<std::size_t>(worker)], at, eps, eta, rng);
    };

    if (cfg.snapshot_per_batch) {
      const PolicyParams snapshot = p;
      if (workers == 1) {
        for (std::size_t e = 0; e < n_ep; ++e) run(e, 0, snapshot);
      } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr error;
        std::mutex error_mutex;
        for (int w = 0; w < workers; ++w) {
          pool.emplace_back([&, w] {
            try {
              for (std::size_t e = next++; e < n_ep; e = next++) run(e, w, snapshot);
            } catch (...) {
              std::lock_guard lock(error_mutex);
              if (!error) error = std::current_exception();
            }
          });
        }
        for (auto& t : pool) t.join();
        if (error) std::rethrow_exception(error);
      }
      for (std::size_t e = 0; e < n_ep; ++e) apply(samples[e], snapshot);
    } else {
      for (std::size_t e = 0; e < n_ep; ++e) {
        run(e, 0, p);
        apply(samples[e], p);
      }
    }

    BatchRecord rec;
    rec.batch = i;
    rec.epsilon = eps;
    double sum = 0.0;
    int done = 0;
    for (const auto& ep : samples) {
      if (ep.aborted) {
        ++rec.aborted;
        continue;
      }
      sum += ep.reward;
      ++done;
      rec.maneuvers += ep.maneuvered ? 1 : 0;
    }
    rec.mean_reward = done > 0 ? sum / done : std::numeric_limits<double>::quiet_NaN();
    result.aborted += static_cast<std::size_t>(rec.aborted);
    if (!std::isfinite(rec.mean_reward)) {
      fail(ErrorKind::DivergedTraining, "batch " + std::to_string(i) + " mean reward is not finite");
    }
    if (!p.finite()) {
      fail(ErrorKind::DivergedTraining, "non-finite parameters after batch " + std::to_string(i));
    }
    baseline = rec.mean_reward;
    result.history.push_back(rec);
    if (on_batch) on_batch(rec);
  }
  return result;
}

/// Convenience overload: synthetic episodes from a noise model.
inline TrainResult train(const NoiseModel& noise, const EpisodeConfig& episode,
                         const TrainConfig& cfg,
                         const std::function<void(const BatchRecord&)>& on_batch = {}) {
  episode.validate();
  return train([&] { return Environment(episode, &noise); }, cfg, episode.eta, on_batch);
}

inline void write_reward_csv(const std::string& path, const std::vector<BatchRecord>& history) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << "batch,mean_reward,epsilon,aborted,maneuvers\n";
  for (const auto& r : history) {
    out << r.batch << ',' << detail::fmt17(r.mean_reward) << ',' << detail::fmt17(r.epsilon) << ','
        << r.aborted << ',' << r.maneuvers << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed for " + path);
}

// ---------------------------------------------------------------------------
// Checkpoints: text, one hex-float per line so the round trip is exact.

inline constexpr const char* kPolicyFormat = "camdp-policy/1";

inline void save_params(const PolicyParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  const auto& s = p.shape;
  out << kPolicyFormat << '\n';
  out << "shape " << s.input << ' ' << s.hidden1 << ' ' << s.hidden2 << ' ' << s.output << '\n';
  out << "activation tanh\n";
  out << "features " << (p.features == FeatureScaling::Linear ? "linear" : "log") << '\n';
  out << "seed " << p.seed << '\n';
  out << "adam_t " << p.adam.t << '\n';
  const bool has_adam = p.adam.m.size() == p.theta.size();
  out << "count " << p.theta.size() << ' ' << (has_adam ? 3 : 1) << '\n';
  char buf[40];
  auto dump = [&](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%a\n", v[i]);
      out << buf;
    }
  };
  dump(p.theta);
  if (has_adam) {
    dump(p.adam.m);
    dump(p.adam.v);
  }
  out << "end\n";
  if (!out) fail(ErrorKind::IoError, "write failed for " + path);
}

inline PolicyParams load_params(const std::string& path, const PolicyShape& expected = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  auto malformed = [&](const std::string& why) {
    fail(ErrorKind::MalformedParams, path + ": " + why);
  };
  std::string line, word;
  if (!std::getline(in, line) || line != kPolicyFormat) malformed("missing format header");

  PolicyParams p;
  auto expect_line = [&](const std::string& key) {
    if (!std::getline(in, line)) malformed("truncated before " + key);
    std::istringstream is(line);
    if (!(is >> word) || word != key) malformed("expected " + key);
    return is;
  };
  {
    auto is = expect_line("shape");
    if (!(is >> p.shape.input >> p.shape.hidden1 >> p.shape.hidden2 >> p.shape.output)) {
      malformed("bad shape line");
    }
  }
  {
    auto is = expect_line("activation");
    if (!(is >> word) || word != "tanh") malformed("unsupported activation");
  }
  {
    auto is = expect_line("features");
    if (!(is >> word) || (word != "linear" && word != "log")) malformed("bad features line");
    p.features = word == "linear" ? FeatureScaling::Linear : FeatureScaling::Log;
  }
  {
    auto is = expect_line("seed");
    if (!(is >> p.seed)) malformed("bad seed line");
  }
  {
    auto is = expect_line("adam_t");
    if (!(is >> p.adam.t)) malformed("bad adam_t line");
  }
  std::size_t count = 0;
  int blocks = 0;
  {
    auto is = expect_line("count");
    if (!(is >> count >> blocks) || (blocks != 1 && blocks != 3)) malformed("bad count line");
  }
  if (!(p.shape == expected)) {
    fail(ErrorKind::ShapeMismatch,
         path + ": checkpoint shape " + std::to_string(p.shape.hidden1) + "/" +
             std::to_string(p.shape.hidden2) + " does not match expected " +
             std::to_string(expected.hidden1) + "/" + std::to_string(expected.hidden2));
  }
  if (count != p.shape.count()) malformed("parameter count does not match shape");

  auto read_block = [&](Eigen::VectorXd& v) {
    v.resize(static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) {
      if (!std::getline(in, line)) malformed("truncated at value " + std::to_string(i));
      char* end = nullptr;
      v[static_cast<Eigen::Index>(i)] = std::strtod(line.c_str(), &end);
      if (end == line.c_str() || *end != '\0') malformed("bad value at entry " + std::to_string(i));
    }
  };
  read_block(p.theta);
  if (blocks == 3) {
    read_block(p.adam.m);
    read_block(p.adam.v);
  } else {
    p.adam.m = Eigen::VectorXd::Zero(p.theta.size());
    p.adam.v = Eigen::VectorXd::Zero(p.theta.size());
  }
  if (!std::getline(in, line) || line != "end") malformed("missing end marker");
  if (!p.finite()) malformed("non-finite parameters");
  return p;
}

}  // namespace camdp

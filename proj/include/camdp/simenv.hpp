#pragma once

// Finite-horizon MDP for the maneuver decision: state (d_m, sigma_T, moved, k)
// on the 21-step grid, multiplicative GND/NCT transitions, one-shot phasing
// maneuver, fuel and terminal-risk costs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "camdp/cdm.hpp"
#include "camdp/errors.hpp"
#include "camdp/maneuver.hpp"
#include "camdp/risk.hpp"
#include "camdp/rng.hpp"

namespace camdp {

enum class Action : int { Delay = 0, Maneuver = 1 };

struct MdpState {
  double d_m = 0.0;      // km
  double sigma_t = 0.0;  // km
  bool moved = false;
  int k = 0;

  bool within_bounds() const {
    return d_m >= 0.0 && d_m <= kStateUpperBound && sigma_t >= 0.0 &&
           sigma_t <= kStateUpperBound && k >= 0 && k <= kLastStep;
  }
  friend bool operator==(const MdpState&, const MdpState&) = default;
};

enum class HbrMode { Fixed, Sampled };
enum class PhaseMode { Fixed, Analytic };
enum class NRevMode { Schedule, Optimal };

/// 0.01 degree. Read as radians it would put cut-off CAMs near 270 g instead
/// of the grams the baseline is known to spend.
inline constexpr double kDefaultFixedPhase = 0.01 * std::numbers::pi / 180.0;

struct EpisodeConfig {
  double eta = 0.25;
  HbrMode hbr_mode = HbrMode::Fixed;
  double hbr_fixed = 0.010;  // km
  double hbr_min = 0.005;    // km, sampled mode
  double hbr_max = 0.015;
  PhaseMode phase_mode = PhaseMode::Fixed;
  double fixed_delta_theta = kDefaultFixedPhase;  // rad
  NRevMode n_rev_mode = NRevMode::Schedule;
  double altitude_min = kMinServiceAltitude;  // km
  double altitude_max = kMaxServiceAltitude;
  double m_o = 300.0;         // kg
  double isp = 300.0;         // s
  double delta_r_cap = 70.0;  // km
  double poc_threshold = kDefaultPocThreshold;
  std::optional<double> lambda;  // unset: max(1, 10 * P_C / threshold)
  double sigma_floor = kDefaultSigmaFloor;
  double rho_t_fraction = 1.0;  // rho_{0,T} = fraction * d_m

  void validate() const {
    auto bad = [](const std::string& why) { fail(ErrorKind::ConfigError, why); };
    if (!(eta >= 0.0 && eta <= 1.0)) bad("eta must lie in [0, 1]");
    if (!(hbr_fixed > 0.0)) bad("hbr_fixed must be positive");
    if (!(hbr_min > 0.0 && hbr_max >= hbr_min)) bad("need 0 < hbr_min <= hbr_max");
    if (!(fixed_delta_theta > 0.0)) bad("fixed_delta_theta must be positive");
    if (!(altitude_min >= kMinServiceAltitude && altitude_max <= kMaxServiceAltitude &&
          altitude_min <= altitude_max)) {
      bad("service altitude range must lie within [160, 2000] km");
    }
    if (!(m_o > 0.0 && isp > 0.0 && delta_r_cap > 0.0)) bad("m_o, isp, delta_r_cap must be > 0");
    if (!(poc_threshold >= 0.0 && poc_threshold <= 1.0)) bad("poc_threshold must lie in [0, 1]");
    if (lambda && !(*lambda >= 1.0)) bad("lambda must be >= 1");
    if (!(sigma_floor > 0.0)) bad("sigma_floor must be positive");
    if (!(rho_t_fraction > 0.0 && rho_t_fraction <= 1.0)) bad("rho_t_fraction must lie in (0, 1]");
  }
};

struct TraceStep {
  MdpState state;
  Action action = Action::Delay;
  double fuel_cost = 0.0;
};

struct EpisodeTrace {
  std::vector<TraceStep> steps;
  MdpState final_state;
  double risk_cost = 0.0;
  std::optional<int> maneuver_step;
  double propellant_kg = 0.0;
  double delta_theta = 0.0;
  double total_cost = 0.0;

  double fuel_sum() const {
    double s = 0.0;
    for (const auto& st : steps) s += st.fuel_cost;
    return s;
  }
};

inline double episode_cost(const EpisodeTrace& trace, double eta) {
  return eta * trace.fuel_sum() + (1.0 - eta) * trace.risk_cost;
}

/// Result of committing to a maneuver at some step.
struct ManeuverOutcome {
  double delta_theta = 0.0;
  std::int64_t n_rev = 0;
  double propellant_kg = 0.0;
  double fuel_cost = 0.0;  // normalized by the n_r = 1 plan
};

class Environment {
 public:
  explicit Environment(EpisodeConfig config, const NoiseModel* noise = nullptr)
      : config_(std::move(config)), noise_(noise) {
    config_.validate();
  }

  const EpisodeConfig& config() const { return config_; }
  const MdpState& state() const { return state_; }
  double hbr() const { return hbr_; }
  double altitude() const { return altitude_; }
  bool done() const { return state_.k >= kLastStep; }
  std::optional<int> maneuver_step() const { return maneuver_step_; }
  const ManeuverOutcome& maneuver() const { return maneuver_; }

  /// Synthetic episode: initial state drawn from the noise model's pool.
  MdpState reset(Rng& rng) {
    if (!noise_ || noise_->initial_states.empty()) {
      fail(ErrorKind::InvalidArgument, "synthetic reset needs a noise model with initial states");
    }
    replay_ = nullptr;
    std::uniform_int_distribution<std::size_t> pick(0, noise_->initial_states.size() - 1);
    const auto& s0 = noise_->initial_states[pick(rng)];
    begin({s0.miss_distance, s0.sigma_t, false, 0}, rng);
    return state_;
  }

  /// Replay episode: starts at the series' first grid CDM and reuses its
  /// recorded step ratios as the transition noise.
  MdpState reset(const EventSeries& series, Rng& rng) {
    if (series.empty()) fail(ErrorKind::ExhaustedDataset, "event has no grid CDMs");
    replay_ = &series;
    const auto& r = series.first();
    begin({std::clamp(r.miss_distance, 0.0, kStateUpperBound),
           std::clamp(r.sigma_t, 0.0, kStateUpperBound), false, series.first_step},
          rng);
    return state_;
  }

  /// Applies the action at step k and moves to k + 1. Returns the fuel cost.
  double step(Action action, Rng& rng) {
    if (done()) fail(ErrorKind::InvalidArgument, "episode already at the final step");
    double fuel = 0.0;
    if (action == Action::Maneuver && !state_.moved) {
      maneuver_ = plan(state_);
      fuel = maneuver_.fuel_cost;
      const double shift = service_radius() * maneuver_.delta_theta;
      const double rho_t = config_.rho_t_fraction * std::max(state_.d_m, 1e-6);
      state_.d_m = std::sqrt(std::max(
          0.0, state_.d_m * state_.d_m + 2.0 * rho_t * shift + shift * shift));
      state_.d_m = std::min(state_.d_m, kStateUpperBound);
      state_.moved = true;
      maneuver_step_ = state_.k;
    }
    advance(rng);
    return fuel;
  }

  /// C_risk of the current (final) state: +1 if PoC >= threshold, else -1.
  double terminal_cost() const { return terminal_cost(state_, hbr_, config_); }

  static double terminal_cost(const MdpState& s, double hbr, const EpisodeConfig& cfg) {
    return state_poc(s.d_m, s.sigma_t, hbr, cfg.sigma_floor) >= cfg.poc_threshold ? 1.0 : -1.0;
  }

  double current_poc() const {
    return state_poc(state_.d_m, state_.sigma_t, hbr_, config_.sigma_floor);
  }

  /// Phase shift, revolutions and propellant for maneuvering from `s`.
  ManeuverOutcome plan(const MdpState& s) const {
    try {
      const OrbitSpec service = OrbitSpec::service(altitude_);
      ManeuverOutcome out;
      out.delta_theta = required_phase(s);
      if (out.delta_theta <= 0.0) return out;
      const double remaining = grid_time(s.k);
      out.n_rev = config_.n_rev_mode == NRevMode::Schedule
                      ? static_cast<std::int64_t>(kHorizonSteps - s.k)
                      : optimal_revolutions(out.delta_theta, remaining, service,
                                            config_.delta_r_cap);
      const auto p = plan_maneuver(out.delta_theta, out.n_rev, service, config_.m_o, config_.isp,
                                   config_.delta_r_cap);
      // Normalizer: the same shift in a single revolution, without the cap.
      const auto worst = plan_maneuver(out.delta_theta, 1, service, config_.m_o, config_.isp,
                                       std::numeric_limits<double>::infinity());
      out.propellant_kg = p.propellant_kg;
      out.fuel_cost = worst.propellant_kg > 0.0 ? p.propellant_kg / worst.propellant_kg : 0.0;
      return out;
    } catch (const Error& e) {
      fail(ErrorKind::EpisodeAborted, "maneuver planning at k=" + std::to_string(s.k) + ": " +
                                          e.what());
    }
  }

  double required_phase(const MdpState& s) const {
    if (config_.phase_mode == PhaseMode::Fixed) return config_.fixed_delta_theta;
    const double poc = state_poc(s.d_m, s.sigma_t, hbr_, config_.sigma_floor);
    if (!(poc > 0.0)) return 0.0;
    const double lambda = config_.lambda.value_or(
        config_.poc_threshold > 0.0 ? std::max(1.0, 10.0 * poc / config_.poc_threshold) : 1.0);
    double target = 0.0;
    try {
      target = safe_miss_distance(state_geometry(s.d_m, s.sigma_t, hbr_, config_.sigma_floor),
                                  poc, lambda);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InfeasibleReduction) return 0.0;
      throw;
    }
    const double d = std::max(s.d_m, 1e-6);
    const double f = config_.rho_t_fraction;
    const RtnVector rho0{d * std::sqrt(std::max(0.0, 1.0 - f * f)), f * d, 0.0};
    return phase_shift_for_miss(rho0, rho0.norm(), std::max(target, rho0.norm()),
                                service_radius());
  }

  double service_radius() const { return altitude_ + kEarthRadius; }

 private:
  void begin(MdpState s0, Rng& rng) {
    state_ = s0;
    maneuver_step_.reset();
    maneuver_ = {};
    hbr_ = config_.hbr_mode == HbrMode::Fixed
               ? config_.hbr_fixed
               : std::uniform_real_distribution<double>(config_.hbr_min, config_.hbr_max)(rng);
    altitude_ =
        std::uniform_real_distribution<double>(config_.altitude_min, config_.altitude_max)(rng);
  }

  void advance(Rng& rng) {
    const int next = state_.k + 1;
    double wd = 0.0, ws = 0.0;
    if (replay_) {
      if (replay_->has_step(next) && replay_->has_step(state_.k)) {
        const auto& prev = replay_->at_step(state_.k);
        const auto& cur = replay_->at_step(next);
        if (!state_.moved) {
          // Unmaneuvered replay follows the record exactly.
          state_.d_m = std::clamp(cur.miss_distance, 0.0, kStateUpperBound);
          state_.sigma_t = std::clamp(cur.sigma_t, 0.0, kStateUpperBound);
          state_.k = next;
          return;
        }
        if (prev.miss_distance > 0.0) wd = cur.miss_distance / prev.miss_distance - 1.0;
        if (prev.sigma_t > 0.0) ws = cur.sigma_t / prev.sigma_t - 1.0;
      }
    } else {
      const StepNoise& n = noise_->into(next);
      wd = sample_gnd(n.miss, rng);
      ws = sample_nct(n.sigma, rng);
    }
    state_.d_m = std::clamp(state_.d_m * (1.0 + wd), 0.0, kStateUpperBound);
    state_.sigma_t = std::clamp(state_.sigma_t * (1.0 + ws), 0.0, kStateUpperBound);
    state_.k = next;
  }

  EpisodeConfig config_;
  const NoiseModel* noise_ = nullptr;
  const EventSeries* replay_ = nullptr;
  MdpState state_;
  double hbr_ = 0.01;
  double altitude_ = 400.0;
  std::optional<int> maneuver_step_;
  ManeuverOutcome maneuver_;
};

/// Runs one episode from the environment's current state to k = 20.
/// `choose(state, env)` returns the action; moved states always delay.
template <typename Choose>
EpisodeTrace run_episode(Environment& env, Choose&& choose, Rng& rng) {
  EpisodeTrace trace;
  trace.steps.reserve(static_cast<std::size_t>(kHorizonSteps));
  while (!env.done()) {
    TraceStep ts;
    ts.state = env.state();
    ts.action = ts.state.moved ? Action::Delay : choose(ts.state, env);
    ts.fuel_cost = env.step(ts.action, rng);
    trace.steps.push_back(ts);
  }
  trace.final_state = env.state();
  trace.risk_cost = env.terminal_cost();
  trace.maneuver_step = env.maneuver_step();
  if (trace.maneuver_step) {
    trace.propellant_kg = env.maneuver().propellant_kg;
    trace.delta_theta = env.maneuver().delta_theta;
  }
  trace.total_cost = episode_cost(trace, env.config().eta);
  return trace;
}

/// Unmaneuvered K-step series from the synthetic simulator.
inline std::vector<EventSeries> generate_synthetic(const NoiseModel& noise, std::size_t n_events,
                                                   Rng& rng) {
  if (noise.initial_states.empty()) {
    fail(ErrorKind::InvalidArgument, "noise model has no initial states");
  }
  std::vector<EventSeries> out;
  out.reserve(n_events);
  std::uniform_int_distribution<std::size_t> pick(0, noise.initial_states.size() - 1);
  for (std::size_t i = 0; i < n_events; ++i) {
    const InitialState s0 = noise.initial_states[pick(rng)];
    EventSeries ev;
    ev.event_id = "syn" + std::to_string(i);
    double d = std::clamp(s0.miss_distance, 0.0, kStateUpperBound);
    double s = std::clamp(s0.sigma_t, 0.0, kStateUpperBound);
    for (int k = 0; k < kHorizonSteps; ++k) {
      if (k > 0) {
        const auto& n = noise.into(k);
        d = std::clamp(d * (1.0 + sample_gnd(n.miss, rng)), 0.0, kStateUpperBound);
        s = std::clamp(s * (1.0 + sample_nct(n.sigma, rng)), 0.0, kStateUpperBound);
      }
      CdmRecord r;
      r.event_id = ev.event_id;
      r.time_to_tca = grid_time(k);
      r.miss_distance = d;
      r.sigma_t = s;
      r.rel_position = {0.0, d, 0.0};
      r.rel_velocity = {0.0, 0.0, 7.5};
      r.covariance_chaser = Covariance3::diagonal(0.0, s * s, 0.0);
      r.r_t = 0.5 * s0.hbr;
      r.r_c = 0.5 * s0.hbr;
      ev.records.push_back(std::move(r));
    }
    out.push_back(std::move(ev));
  }
  return out;
}

inline void write_trace_csv(const std::string& path, const std::vector<EpisodeTrace>& traces) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << "episode,k,d_m,sigma_t,moved,action,fuel\n";
  for (std::size_t e = 0; e < traces.size(); ++e) {
    auto row = [&](const MdpState& s, int action, double fuel) {
      out << e << ',' << s.k << ',' << detail::fmt17(s.d_m) << ',' << detail::fmt17(s.sigma_t)
          << ',' << (s.moved ? 1 : 0) << ',' << action << ',' << detail::fmt17(fuel) << '\n';
    };
    for (const auto& st : traces[e].steps) row(st.state, static_cast<int>(st.action), st.fuel_cost);
    row(traces[e].final_state, -1, 0.0);  // terminal state, no action
  }
  if (!out) fail(ErrorKind::IoError, "write failed for " + path);
}

}  // namespace camdp

#pragma once

// Cut-off baseline, action-distribution and fuel metrics, convergence
// detection and the ablation harness.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "camdp/cdm.hpp"
#include "camdp/errors.hpp"
#include "camdp/policy.hpp"
#include "camdp/rng.hpp"
#include "camdp/simenv.hpp"

namespace camdp {

inline constexpr int kCutoffStep = 18;  // 24 h before TCA

inline Action cutoff_policy(const MdpState& s, double poc, double threshold) {
  return s.k == kCutoffStep && !s.moved && poc >= threshold ? Action::Maneuver : Action::Delay;
}

/// Decision rule used in evaluation rollouts.
using Decider = std::function<Action(const MdpState&, const Environment&)>;

inline Decider cutoff_decider() {
  return [](const MdpState& s, const Environment& env) {
    return cutoff_policy(s, env.current_poc(), env.config().poc_threshold);
  };
}

inline Decider greedy_decider(const PolicyParams& params) {
  return [&params](const MdpState& s, const Environment&) { return act_greedy(params, s); };
}

struct ActionDistribution {
  std::size_t tp = 0;  // maneuver, true risk high
  std::size_t fp = 0;  // maneuver, true risk low
  std::size_t tn = 0;  // stay, true risk low
  std::size_t fn = 0;  // stay, true risk high

  std::size_t total() const { return tp + fp + tn + fn; }
  std::size_t high() const { return tp + fn; }
  std::size_t low() const { return fp + tn; }
  std::size_t maneuvers() const { return tp + fp; }

  static double pct(std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : 100.0 * static_cast<double>(a) / static_cast<double>(b);
  }
  double tp_pct() const { return pct(tp, high()); }
  double fn_pct() const { return pct(fn, high()); }
  double fp_pct() const { return pct(fp, low()); }
  double tn_pct() const { return pct(tn, low()); }
  /// Share of maneuvers that hit true-high events.
  double precision_pct() const { return pct(tp, maneuvers()); }

  friend bool operator==(const ActionDistribution&, const ActionDistribution&) = default;
};

struct FuelReport {
  std::vector<double> per_episode_kg;
  std::size_t maneuvers = 0;

  double total_kg() const {
    double s = 0.0;
    for (double x : per_episode_kg) s += x;
    return s;
  }
  double avg_per_cam_g() const {
    return maneuvers == 0 ? 0.0 : 1e3 * total_kg() / static_cast<double>(maneuvers);
  }
  std::vector<double> cumulative_kg() const {
    std::vector<double> c(per_episode_kg.size());
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = s += per_episode_kg[i];
    return c;
  }
  friend bool operator==(const FuelReport&, const FuelReport&) = default;
};

struct EvalReport {
  ActionDistribution actions;
  FuelReport fuel;
  std::size_t aborted = 0;
  std::array<std::size_t, kHorizonSteps> maneuver_steps{};  // histogram over k
  double mean_cost = 0.0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct EvalOptions {
  std::uint64_t seed = 0;  // per-event streams for HBR and service altitude
  int threads = 1;
};

/// Greedy rollouts over an event set, replaying each event's recorded step
/// ratios. Labels use the final unmaneuvered CDM with the episode's HBR.
inline EvalReport evaluate(const Decider& decide, const std::vector<EventSeries>& events,
                           const EpisodeConfig& config, const EvalOptions& opt = {}) {
  config.validate();
  struct Outcome {
    bool aborted = false;
    RiskLabel label = RiskLabel::Low;
    std::optional<int> step;
    double kg = 0.0;
    double cost = 0.0;
  };
  std::vector<Outcome> outcomes(events.size());
  auto run = [&](std::size_t i) {
    Environment env(config);
    Rng rng(derive_seed(derive_seed(opt.seed, "eval-event"), {i}));
    Outcome& o = outcomes[i];
    try {
      env.reset(events[i], rng);
      LabelOptions lo;
      lo.sigma_floor = config.sigma_floor;
      lo.hbr_override = env.hbr();
      o.label = label_true_risk(events[i], config.poc_threshold, lo);
      const EpisodeTrace tr = run_episode(env, decide, rng);
      o.step = tr.maneuver_step;
      o.kg = tr.propellant_kg;
      o.cost = tr.total_cost;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EpisodeAborted) throw;
      o.aborted = true;
    }
  };

  const int workers = std::max(1, std::min<int>(opt.threads, static_cast<int>(events.size())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < events.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex m;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = static_cast<std::size_t>(w); i < events.size();
               i += static_cast<std::size_t>(workers)) {
            run(i);
          }
        } catch (...) {
          std::lock_guard lock(m);
          if (!error) error = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }

  // Aggregate in event order so the report does not depend on the thread count.
  EvalReport rep;
  double cost_sum = 0.0;
  for (const auto& o : outcomes) {
    if (o.aborted) {
      ++rep.aborted;
      continue;
    }
    const bool high = o.label == RiskLabel::High;
    if (o.step) {
      ++rep.maneuver_steps[static_cast<std::size_t>(*o.step)];
      ++rep.fuel.maneuvers;
      ++(high ? rep.actions.tp : rep.actions.fp);
    } else {
      ++(high ? rep.actions.fn : rep.actions.tn);
    }
    rep.fuel.per_episode_kg.push_back(o.kg);
    cost_sum += o.cost;
  }
  const auto n = rep.actions.total();
  rep.mean_cost = n ? cost_sum / static_cast<double>(n) : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Convergence

struct ConvergenceOptions {
  int window = 200;
  double tolerance = 0.01;  // relative change between consecutive windows
};

/// First batch i at which the mean reward over batches (i-w, i] differs from
/// the mean over (i-2w, i-w] by less than `tolerance` relative.
inline std::optional<int> detect_convergence(const std::vector<double>& rewards,
                                             const ConvergenceOptions& opt = {}) {
  const auto w = static_cast<std::size_t>(opt.window);
  if (w == 0 || rewards.size() < 2 * w) return std::nullopt;
  double prev = 0.0, last = 0.0;
  for (std::size_t j = 0; j < w; ++j) {
    prev += rewards[j];
    last += rewards[w + j];
  }
  for (std::size_t i = 2 * w - 1;; ++i) {
    const double scale = std::abs(prev);
    if (scale > 0.0 && std::abs(last - prev) < opt.tolerance * scale) return static_cast<int>(i);
    if (i + 1 >= rewards.size()) return std::nullopt;
    // Slide both windows by one batch.
    prev += rewards[i + 1 - w] - rewards[i + 1 - 2 * w];
    last += rewards[i + 1] - rewards[i + 1 - w];
  }
}

inline std::optional<int> detect_convergence(const std::vector<BatchRecord>& history,
                                             const ConvergenceOptions& opt = {}) {
  std::vector<double> r;
  r.reserve(history.size());
  for (const auto& b : history) r.push_back(b.mean_reward);
  return detect_convergence(r, opt);
}

// ---------------------------------------------------------------------------
// Ablations

struct AblationRun {
  std::string name;
  std::string group;  // "var1" or "var2"
  EpisodeConfig episode;
  int iterations = 4000;
};

struct AblationSpec {
  std::vector<AblationRun> runs;

  /// Variation 1: {fixed, sampled HBR} x {fixed, analytic phase}.
  /// Variation 2: eta = 0.0, 0.1, ..., 1.0. eta = 1 gets its own iteration cap.
  static AblationSpec standard(const EpisodeConfig& base, int iterations,
                               int eta_one_iterations) {
    AblationSpec spec;
    for (int hbr = 0; hbr < 2; ++hbr) {
      for (int phase = 0; phase < 2; ++phase) {
        AblationRun r;
        r.group = "var1";
        r.episode = base;
        r.episode.hbr_mode = hbr == 0 ? HbrMode::Fixed : HbrMode::Sampled;
        r.episode.phase_mode = phase == 0 ? PhaseMode::Fixed : PhaseMode::Analytic;
        r.name = std::string("var1_hbr-") + (hbr == 0 ? "fixed" : "random") + "_phase-" +
                 (phase == 0 ? "fixed" : "analytic");
        r.iterations = iterations;
        spec.runs.push_back(r);
      }
    }
    for (int e = 0; e <= 10; ++e) {
      AblationRun r;
      r.group = "var2";
      r.episode = base;
      r.episode.eta = e / 10.0;
      char buf[32];
      std::snprintf(buf, sizeof buf, "var2_eta-%.1f", r.episode.eta);
      r.name = buf;
      r.iterations = e == 10 ? eta_one_iterations : iterations;
      spec.runs.push_back(r);
    }
    return spec;
  }
};

struct RunReport {
  AblationRun run;
  std::optional<int> converged_at;
  std::vector<BatchRecord> history;
  EvalReport trained;
  EvalReport cutoff;
  std::string error;  // empty on success
};

struct AblationBundle {
  std::vector<RunReport> reports;
  std::uint64_t seed = 0;
  std::string resolved_config;  // JSON text of the run configuration
};

struct AblationOptions {
  TrainConfig train;       // iterations is overridden per run
  std::uint64_t seed = 0;  // root seed
  int threads = 1;
  ConvergenceOptions convergence;
  std::function<void(const std::string& run, const BatchRecord&)> on_batch;
};

inline AblationBundle run_ablation(const AblationSpec& spec, const NoiseModel& noise,
                                   const std::vector<EventSeries>& eval_events,
                                   const AblationOptions& opt) {
  AblationBundle bundle;
  bundle.seed = opt.seed;
  for (const auto& run : spec.runs) {
    RunReport rep;
    rep.run = run;
    try {
      TrainConfig tc = opt.train;
      tc.iterations = run.iterations;
      tc.seed = opt.seed;
      std::function<void(const BatchRecord&)> cb;
      if (opt.on_batch) cb = [&](const BatchRecord& b) { opt.on_batch(run.name, b); };
      const TrainResult tr = train(noise, run.episode, tc, cb);
      rep.history = tr.history;
      rep.converged_at = detect_convergence(tr.history, opt.convergence);
      EvalOptions eo{derive_seed(opt.seed, "eval"), opt.threads};
      rep.trained = evaluate(greedy_decider(tr.params), eval_events, run.episode, eo);
      rep.cutoff = evaluate(cutoff_decider(), eval_events, run.episode, eo);
    } catch (const std::exception& e) {
      rep.error = e.what();
    }
    bundle.reports.push_back(std::move(rep));
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Plot data

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) fail(ErrorKind::IoError, "cannot write " + p.string());
  return out;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void write_action_row(std::ostream& out, const std::string& run, const std::string& policy,
                             const EvalReport& r) {
  const auto& a = r.actions;
  out << run << ',' << policy << ',' << a.tp << ',' << a.fp << ',' << a.tn << ',' << a.fn << ','
      << fmt17(a.tp_pct()) << ',' << fmt17(a.fn_pct()) << ',' << fmt17(a.fp_pct()) << ','
      << fmt17(a.tn_pct()) << ',' << fmt17(r.fuel.total_kg()) << ',' << r.fuel.maneuvers << ','
      << fmt17(r.fuel.avg_per_cam_g()) << ',' << r.aborted << '\n';
}

}  // namespace detail

/// log10(PoC) histogram of the events' final CDMs; PoC = 0 is counted in its
/// own "zero" row.
inline void write_poc_histogram(const std::filesystem::path& path,
                                const std::vector<EventSeries>& events,
                                const EpisodeConfig& cfg) {
  constexpr int lo = -60, hi = 0;
  std::vector<std::size_t> bins(static_cast<std::size_t>(hi - lo + 1), 0);
  std::size_t zeros = 0, above = 0;
  for (const auto& ev : events) {
    if (ev.empty()) continue;
    const auto& r = ev.last();
    const double p = state_poc(r.miss_distance, r.sigma_t, cfg.hbr_fixed, cfg.sigma_floor);
    if (p >= cfg.poc_threshold) ++above;
    if (!(p > 0.0)) {
      ++zeros;
      continue;
    }
    const int b = std::clamp(static_cast<int>(std::floor(std::log10(p))), lo, hi);
    ++bins[static_cast<std::size_t>(b - lo)];
  }
  auto out = detail::open_out(path);
  out << "log10_poc_bin_lower,count\n";
  out << "zero," << zeros << '\n';
  for (int b = lo; b <= hi; ++b) out << b << ',' << bins[static_cast<std::size_t>(b - lo)] << '\n';
  out << "# above_threshold=" << above << " of " << events.size() << '\n';
}

/// Writes reward curves, action distributions, cumulative fuel, the dataset
/// PoC histogram and summary.txt into out_dir.
inline void emit_plots_data(const AblationBundle& bundle, const std::vector<EventSeries>& dataset,
                            const EpisodeConfig& base, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  using detail::fmt17;

  {
    auto out = detail::open_out(out_dir / "reward_curves.csv");
    out << "run,batch,mean_reward,epsilon\n";
    for (const auto& r : bundle.reports) {
      for (const auto& b : r.history) {
        out << r.run.name << ',' << b.batch << ',' << fmt17(b.mean_reward) << ','
            << fmt17(b.epsilon) << '\n';
      }
    }
  }
  {
    auto out = detail::open_out(out_dir / "action_distribution.csv");
    out << "run,policy,tp,fp,tn,fn,tp_pct,fn_pct,fp_pct,tn_pct,total_kg,maneuvers,avg_per_cam_g,"
           "aborted\n";
    for (const auto& r : bundle.reports) {
      if (!r.error.empty()) continue;
      detail::write_action_row(out, r.run.name, "trained", r.trained);
      detail::write_action_row(out, r.run.name, "cutoff", r.cutoff);
    }
  }
  {
    // The cut-off rule ignores eta, so runs that differ only in eta share one
    // cut-off series.
    auto out = detail::open_out(out_dir / "cumulative_fuel.csv");
    out << "series,episode,cumulative_kg\n";
    std::map<std::string, const EvalReport*> cutoffs;
    for (const auto& r : bundle.reports) {
      if (!r.error.empty()) continue;
      const auto c = r.trained.fuel.cumulative_kg();
      for (std::size_t i = 0; i < c.size(); ++i) {
        out << "trained:" << r.run.name << ',' << i << ',' << fmt17(c[i]) << '\n';
      }
      const std::string key = std::string("cutoff:hbr-") +
                              (r.run.episode.hbr_mode == HbrMode::Fixed ? "fixed" : "random") +
                              "_phase-" +
                              (r.run.episode.phase_mode == PhaseMode::Fixed ? "fixed" : "analytic");
      cutoffs.emplace(key, &r.cutoff);
    }
    for (const auto& [key, rep] : cutoffs) {
      const auto c = rep->fuel.cumulative_kg();
      for (std::size_t i = 0; i < c.size(); ++i) out << key << ',' << i << ',' << fmt17(c[i]) << '\n';
    }
  }
  write_poc_histogram(out_dir / "poc_histogram.csv", dataset, base);
  {
    auto out = detail::open_out(out_dir / "summary.txt");
    out << "run_id = " << detail::hex64(derive_seed(bundle.seed, bundle.resolved_config)) << '\n';
    out << "config_hash = " << detail::hex64(fnv1a64(bundle.resolved_config)) << '\n';
    out << "seed = " << bundle.seed << '\n';
    out << "runs = " << bundle.reports.size() << '\n';
    for (const auto& r : bundle.reports) {
      const std::string p = "run." + r.run.name + ".";
      out << p << "eta = " << fmt17(r.run.episode.eta) << '\n';
      out << p << "iterations = " << r.run.iterations << '\n';
      if (!r.error.empty()) {
        out << p << "error = " << r.error << '\n';
        continue;
      }
      out << p << "converged_at = "
          << (r.converged_at ? std::to_string(*r.converged_at) : std::string("none")) << '\n';
      for (const auto& [name, rep] : {std::pair{"trained", &r.trained}, {"cutoff", &r.cutoff}}) {
        out << p << name << ".tp_pct = " << fmt17(rep->actions.tp_pct()) << '\n';
        out << p << name << ".fp_pct = " << fmt17(rep->actions.fp_pct()) << '\n';
        out << p << name << ".precision_pct = " << fmt17(rep->actions.precision_pct()) << '\n';
        out << p << name << ".total_kg = " << fmt17(rep->fuel.total_kg()) << '\n';
        out << p << name << ".maneuvers = " << rep->fuel.maneuvers << '\n';
        out << p << name << ".avg_per_cam_g = " << fmt17(rep->fuel.avg_per_cam_g()) << '\n';
        out << p << name << ".aborted = " << rep->aborted << '\n';
      }
    }
  }
}

/// Single-evaluation report directory (cmd eval).
inline void write_eval_report(const EvalReport& rep, const std::string& policy_name,
                              const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  using detail::fmt17;
  {
    auto out = detail::open_out(out_dir / "action_distribution.csv");
    out << "run,policy,tp,fp,tn,fn,tp_pct,fn_pct,fp_pct,tn_pct,total_kg,maneuvers,avg_per_cam_g,"
           "aborted\n";
    detail::write_action_row(out, "eval", policy_name, rep);
  }
  {
    auto out = detail::open_out(out_dir / "fuel.csv");
    out << "episode,propellant_kg,cumulative_kg\n";
    const auto c = rep.fuel.cumulative_kg();
    for (std::size_t i = 0; i < c.size(); ++i) {
      out << i << ',' << fmt17(rep.fuel.per_episode_kg[i]) << ',' << fmt17(c[i]) << '\n';
    }
  }
  {
    auto out = detail::open_out(out_dir / "maneuver_steps.csv");
    out << "k,time_to_tca_hr,maneuvers\n";
    for (int k = 0; k < kHorizonSteps; ++k) {
      out << k << ',' << grid_time(k) << ',' << rep.maneuver_steps[static_cast<std::size_t>(k)]
          << '\n';
    }
  }
}

}  // namespace camdp

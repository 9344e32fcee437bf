// camdp: fit, simulate, train, eval and ablate from one binary.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "camdp/cdm.hpp"
#include "camdp/config.hpp"
#include "camdp/eval.hpp"
#include "camdp/policy.hpp"
#include "camdp/simenv.hpp"

namespace fs = std::filesystem;
using namespace camdp;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  std::vector<std::string> sets;  // key=value
};

RunConfig resolve(const Common& c, const std::vector<std::pair<std::string, std::string>>& extra) {
  ConfigBuilder b;
  b.apply_environment();
  if (!c.config_path.empty()) b.apply_file(c.config_path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorKind::ConfigError, "--set expects key=value, got " + kv);
    b.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : extra) b.set(k, v);
  if (c.seed) b.set("seed", std::to_string(*c.seed));
  if (c.threads) b.set("threads", std::to_string(*c.threads));
  if (!c.out.empty()) b.set("out", c.out);
  return b.build();
}

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path out = cfg.out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + out.string() + ": " + ec.message());
  write_resolved_config(cfg, (out / "resolved_config.json").string());
  return out;
}

IngestOptions ingest_options(const RunConfig& cfg) {
  IngestOptions o;
  o.time_unit = cfg.data.time_unit;
  o.length_unit = cfg.data.length_unit;
  return o;
}

/// Fitted model file, else a fit of data.csv, else the reference model.
NoiseModel resolve_noise(const RunConfig& cfg) {
  if (!cfg.data.noise_model.empty()) return load_noise_model(cfg.data.noise_model);
  if (!cfg.data.csv.empty()) {
    const auto ingested = ingest_csv(cfg.data.csv, ingest_options(cfg));
    std::cerr << "ingest: " << ingested.report.summary() << '\n';
    return fit_noise_model(ingested.events);
  }
  return reference_noise_model(derive_seed(cfg.seed, "fit"), cfg.reference);
}

/// Evaluation events: data.events (canonical CSV), else synthetic.
std::vector<EventSeries> resolve_events(const RunConfig& cfg, const NoiseModel& noise) {
  if (!cfg.data.events.empty()) {
    return ingest_csv(cfg.data.events, canonical_ingest_options()).events;
  }
  Rng rng(derive_seed(cfg.seed, "sim"));
  return generate_synthetic(noise, cfg.eval.events, rng);
}

void progress(const std::string& run, const BatchRecord& b) {
  if (b.batch % 250 == 0) {
    std::cerr << run << (run.empty() ? "" : " ") << "batch " << b.batch
              << " mean_reward=" << b.mean_reward << " eps=" << b.epsilon << '\n';
  }
}

int cmd_fit(const RunConfig& cfg, bool reference) {
  const fs::path out = prepare_out(cfg);
  NoiseModel model;
  if (reference || cfg.data.csv.empty()) {
    if (!reference) fail(ErrorKind::ConfigError, "fit needs --csv (or --reference)");
    model = reference_noise_model(derive_seed(cfg.seed, "fit"), cfg.reference);
  } else {
    const auto ingested = ingest_csv(cfg.data.csv, ingest_options(cfg));
    {
      std::ofstream rep(out / "ingest_report.txt");
      rep << ingested.report.summary() << '\n';
    }
    std::cerr << "ingest: " << ingested.report.summary() << '\n';
    write_events_csv((out / "events_grid.csv").string(), ingested.events);
    write_poc_histogram(out / "poc_histogram.csv", ingested.events, cfg.episode);
    model = fit_noise_model(ingested.events);
  }
  save_noise_model((out / "noise_model.txt").string(), model);
  std::cout << (out / "noise_model.txt").string() << '\n';
  return 0;
}

int cmd_simulate(const RunConfig& cfg, std::size_t n) {
  const fs::path out = prepare_out(cfg);
  const NoiseModel noise = resolve_noise(cfg);
  Rng rng(derive_seed(cfg.seed, "sim"));
  const auto events = generate_synthetic(noise, n, rng);
  write_events_csv((out / "events.csv").string(), events);
  std::size_t high = 0;
  LabelOptions lo;
  lo.sigma_floor = cfg.episode.sigma_floor;
  lo.hbr_override = cfg.episode.hbr_fixed;
  for (const auto& e : events) high += label_true_risk(e, cfg.episode.poc_threshold, lo) == RiskLabel::High;
  std::cout << "events=" << events.size() << " high_risk=" << high << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const fs::path out = prepare_out(cfg);
  const NoiseModel noise = resolve_noise(cfg);
  const auto result = train(noise, cfg.episode, cfg.train,
                            [](const BatchRecord& b) { progress("", b); });
  save_params(result.params, (out / "policy.ckpt").string());
  write_reward_csv((out / "reward.csv").string(), result.history);
  ConvergenceOptions co{cfg.ablation.window, cfg.ablation.tolerance};
  const auto conv = detect_convergence(result.history, co);
  std::ofstream s(out / "train_summary.txt");
  s << "batches = " << result.history.size() << '\n'
    << "aborted_episodes = " << result.aborted << '\n'
    << "converged_at = " << (conv ? std::to_string(*conv) : std::string("none")) << '\n'
    << "final_mean_reward = " << detail::fmt17(result.history.back().mean_reward) << '\n';
  std::cout << (out / "policy.ckpt").string() << " converged_at="
            << (conv ? std::to_string(*conv) : std::string("none")) << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& policy, const std::string& historical) {
  const fs::path out = prepare_out(cfg);
  std::vector<EventSeries> events;
  if (!historical.empty()) {
    events = ingest_csv(historical, ingest_options(cfg)).events;
  } else {
    events = resolve_events(cfg, cfg.data.events.empty() ? resolve_noise(cfg) : NoiseModel{});
  }
  const EvalOptions eo{derive_seed(cfg.seed, "eval"), cfg.threads};
  EvalReport rep;
  if (policy == "cutoff") {
    rep = evaluate(cutoff_decider(), events, cfg.episode, eo);
  } else {
    const PolicyParams params = load_params(policy, cfg.train.shape);
    rep = evaluate(greedy_decider(params), events, cfg.episode, eo);
  }
  const std::string name = policy == "cutoff" ? "cutoff" : "trained";
  write_eval_report(rep, name, out);
  std::ofstream s(out / "summary.txt");
  const std::string summary =
      "policy = " + name + "\nevents = " + std::to_string(events.size()) +
      "\ntp = " + std::to_string(rep.actions.tp) + "\nfp = " + std::to_string(rep.actions.fp) +
      "\ntn = " + std::to_string(rep.actions.tn) + "\nfn = " + std::to_string(rep.actions.fn) +
      "\ntotal_kg = " + detail::fmt17(rep.fuel.total_kg()) +
      "\nmaneuvers = " + std::to_string(rep.fuel.maneuvers) +
      "\navg_per_cam_g = " + detail::fmt17(rep.fuel.avg_per_cam_g()) +
      "\naborted = " + std::to_string(rep.aborted) + "\nconfig_hash = " +
      detail::hex64(fnv1a64(to_json(cfg).dump())) + "\nseed = " + std::to_string(cfg.seed) + '\n';
  s << summary;
  std::cout << summary;
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  const fs::path out = prepare_out(cfg);
  const NoiseModel noise = resolve_noise(cfg);
  const auto events = resolve_events(cfg, noise);
  const auto spec =
      AblationSpec::standard(cfg.episode, cfg.ablation.iterations, cfg.ablation.eta_one_iterations);
  AblationOptions opt;
  opt.train = cfg.train;
  opt.seed = cfg.seed;
  opt.threads = cfg.threads;
  opt.convergence = {cfg.ablation.window, cfg.ablation.tolerance};
  opt.on_batch = progress;
  auto bundle = run_ablation(spec, noise, events, opt);
  bundle.resolved_config = to_json(cfg).dump();
  emit_plots_data(bundle, events, cfg.episode, out);
  for (const auto& r : bundle.reports) {
    std::cout << r.run.name << ' '
              << (r.error.empty() ? "converged_at=" + (r.converged_at ? std::to_string(*r.converged_at)
                                                                      : std::string("none"))
                                  : "error=" + r.error)
              << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early collision-avoidance maneuver decisions as a finite-horizon MDP"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "root seed");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--threads", common.threads, "worker threads (default: available cores)");
    sub->add_option("--set", common.sets, "override a config key, e.g. --set episode.eta=0.5");
  };

  std::string csv, time_unit, length_unit, noise_model, events_path, historical;
  bool reference = false;
  std::size_t n_events = 0;
  std::string policy;

  auto* fit = app.add_subcommand("fit", "ingest a Kelvins CSV and fit the per-step noise model");
  add_common(fit);
  fit->add_option("--csv", csv, "CDM table");
  fit->add_option("--time-unit", time_unit, "days|hours");
  fit->add_option("--length-unit", length_unit, "m|km");
  fit->add_flag("--reference", reference, "write the built-in reference model instead");

  auto* sim = app.add_subcommand("simulate", "generate unmaneuvered synthetic event series");
  add_common(sim);
  sim->add_option("--noise-model", noise_model, "fitted noise model (default: reference)");
  sim->add_option("-n,--events", n_events, "number of events (default eval.events)");

  auto* tr = app.add_subcommand("train", "REINFORCE training on synthetic episodes");
  add_common(tr);
  tr->add_option("--noise-model", noise_model, "fitted noise model (default: reference)");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint or the cut-off baseline");
  add_common(ev);
  ev->add_option("policy", policy, "checkpoint path or 'cutoff'")->required();
  ev->add_option("--events", events_path, "canonical events CSV (from simulate)");
  ev->add_option("--historical-csv", historical, "Kelvins CSV replayed as historical events");
  ev->add_option("--noise-model", noise_model, "noise model for the synthetic set");

  auto* ab = app.add_subcommand("ablate", "Variation 1 grid and eta sweep");
  add_common(ab);
  ab->add_option("--noise-model", noise_model, "fitted noise model (default: reference)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc != 0) std::cerr << "error kind=ConfigError exit=2 message=\"" << e.what() << "\"\n";
    return rc == 0 ? 0 : 2;
  }

  try {
    std::vector<std::pair<std::string, std::string>> extra;
    if (!csv.empty()) extra.emplace_back("data.csv", csv);
    if (!time_unit.empty()) extra.emplace_back("data.time_unit", time_unit);
    if (!length_unit.empty()) extra.emplace_back("data.length_unit", length_unit);
    if (!noise_model.empty()) extra.emplace_back("data.noise_model", noise_model);
    if (!events_path.empty()) extra.emplace_back("data.events", events_path);
    const RunConfig cfg = resolve(common, extra);

    if (*fit) return cmd_fit(cfg, reference);
    if (*sim) return cmd_simulate(cfg, n_events ? n_events : cfg.eval.events);
    if (*tr) return cmd_train(cfg);
    if (*ev) return cmd_eval(cfg, policy, historical);
    if (*ab) return cmd_ablate(cfg);
  } catch (const Error& e) {
    const int rc = exit_code_for(e.kind());
    std::cerr << "error kind=" << to_string(e.kind()) << " exit=" << rc << " message=\"" << e.what()
              << "\"\n";
    return rc;
  } catch (const std::exception& e) {
    std::cerr << "error kind=Internal exit=1 message=\"" << e.what() << "\"\n";
    return 1;
  }
  return 1;
}

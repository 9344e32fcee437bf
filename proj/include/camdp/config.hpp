#pragma once

// Run configuration: JSON document with a fixed schema. Sources are merged
// as defaults < CAMDP_* environment < config file < command-line flags, and
// any key not in the schema is rejected.

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <json.hpp>

#include "camdp/cdm.hpp"
#include "camdp/errors.hpp"
#include "camdp/policy.hpp"
#include "camdp/simenv.hpp"

namespace camdp {

using Json = nlohmann::ordered_json;

struct DataConfig {
  std::string csv;          // historical CDM table; empty = reference model
  std::string noise_model;  // fitted model file; empty = fit csv or reference
  std::string events;       // evaluation events (canonical CSV); empty = synthetic
  TimeUnit time_unit = TimeUnit::Days;
  LengthUnit length_unit = LengthUnit::Meters;
};

struct EvalConfig {
  std::size_t events = 1000;
};

struct AblationConfig {
  int iterations = 4000;
  int eta_one_iterations = 20000;
  int window = 200;
  double tolerance = 0.01;
};

inline int default_threads() {
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = default_threads();
  std::string out = "out";
  DataConfig data;
  ReferenceModelOptions reference;
  EpisodeConfig episode;
  TrainConfig train;
  EvalConfig eval;
  AblationConfig ablation;
};

namespace detail {

template <typename E>
struct EnumNames;

template <>
struct EnumNames<HbrMode> {
  static constexpr std::pair<HbrMode, const char*> map[] = {{HbrMode::Fixed, "fixed"},
                                                            {HbrMode::Sampled, "sampled"}};
};
template <>
struct EnumNames<PhaseMode> {
  static constexpr std::pair<PhaseMode, const char*> map[] = {{PhaseMode::Fixed, "fixed"},
                                                              {PhaseMode::Analytic, "analytic"}};
};
template <>
struct EnumNames<NRevMode> {
  static constexpr std::pair<NRevMode, const char*> map[] = {{NRevMode::Schedule, "schedule"},
                                                             {NRevMode::Optimal, "optimal"}};
};
template <>
struct EnumNames<FeatureScaling> {
  static constexpr std::pair<FeatureScaling, const char*> map[] = {
      {FeatureScaling::Linear, "linear"}, {FeatureScaling::Log, "log"}};
};
template <>
struct EnumNames<TimeUnit> {
  static constexpr std::pair<TimeUnit, const char*> map[] = {{TimeUnit::Days, "days"},
                                                             {TimeUnit::Hours, "hours"}};
};
template <>
struct EnumNames<LengthUnit> {
  static constexpr std::pair<LengthUnit, const char*> map[] = {{LengthUnit::Meters, "m"},
                                                               {LengthUnit::Kilometers, "km"}};
};

template <typename E>
std::string enum_name(E v) {
  for (const auto& [e, n] : EnumNames<E>::map) {
    if (e == v) return n;
  }
  return "?";
}

template <typename E>
E enum_value(const std::string& key, const std::string& s) {
  std::string options;
  for (const auto& [e, n] : EnumNames<E>::map) {
    if (s == n) return e;
    options += options.empty() ? n : std::string("|") + n;
  }
  fail(ErrorKind::ConfigError, key + ": expected one of " + options + ", got '" + s + "'");
}

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace detail

inline Json to_json(const RunConfig& c) {
  using detail::enum_name;
  const auto& e = c.episode;
  const auto& t = c.train;
  const auto& r = c.reference;
  Json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out"] = c.out;
  j["data"] = {{"csv", c.data.csv},
               {"noise_model", c.data.noise_model},
               {"events", c.data.events},
               {"time_unit", enum_name(c.data.time_unit)},
               {"length_unit", enum_name(c.data.length_unit)}};
  j["reference"] = {{"pool_size", r.pool_size},
                    {"log10_miss_mean", r.log10_miss_mean},
                    {"log10_miss_sd", r.log10_miss_sd},
                    {"log10_sigma_mean", r.log10_sigma_mean},
                    {"log10_sigma_sd", r.log10_sigma_sd},
                    {"hbr_km", r.hbr}};
  j["episode"] = {{"eta", e.eta},
                  {"hbr_mode", enum_name(e.hbr_mode)},
                  {"hbr_fixed_km", e.hbr_fixed},
                  {"hbr_min_km", e.hbr_min},
                  {"hbr_max_km", e.hbr_max},
                  {"phase_mode", enum_name(e.phase_mode)},
                  {"fixed_delta_theta_rad", e.fixed_delta_theta},
                  {"n_rev_mode", enum_name(e.n_rev_mode)},
                  {"altitude_min_km", e.altitude_min},
                  {"altitude_max_km", e.altitude_max},
                  {"m_o_kg", e.m_o},
                  {"isp_s", e.isp},
                  {"delta_r_cap_km", e.delta_r_cap},
                  {"poc_threshold", e.poc_threshold},
                  {"lambda", detail::optional_json(e.lambda)},
                  {"sigma_floor_km", e.sigma_floor},
                  {"rho_t_fraction", e.rho_t_fraction}};
  j["train"] = {{"iterations", t.iterations},
                {"episodes_per_batch", t.episodes_per_batch},
                {"eps_max", t.eps_max},
                {"eps_min", t.eps_min},
                {"eps_decay", t.eps_decay},
                {"learning_rate", t.learning_rate},
                {"baseline", t.baseline},
                {"snapshot_per_batch", t.snapshot_per_batch},
                {"hidden1", t.shape.hidden1},
                {"hidden2", t.shape.hidden2},
                {"features", enum_name(t.features)},
                {"initial_maneuver_prob", detail::optional_json(t.initial_maneuver_prob)}};
  j["eval"] = {{"events", c.eval.events}};
  j["ablation"] = {{"iterations", c.ablation.iterations},
                   {"eta_one_iterations", c.ablation.eta_one_iterations},
                   {"window", c.ablation.window},
                   {"tolerance", c.ablation.tolerance}};
  return j;
}

namespace detail {

// Recursively merges `patch` into `base`, rejecting keys absent from `base`
// and values whose JSON type differs (integers may fill float slots, null
// may fill optional slots that are currently null or numeric).
inline void merge_strict(Json& base, const Json& patch, const std::string& where) {
  if (!patch.is_object()) fail(ErrorKind::ConfigError, where + ": expected an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) fail(ErrorKind::ConfigError, "unknown key '" + key + "'");
    Json& slot = base[it.key()];
    const Json& v = it.value();
    if (slot.is_object()) {
      merge_strict(slot, v, key);
      continue;
    }
    const bool optional_slot = key == "episode.lambda" || key == "train.initial_maneuver_prob";
    const bool ok =
        (slot.is_boolean() && v.is_boolean()) || (slot.is_string() && v.is_string()) ||
        (slot.is_number_unsigned() && v.is_number_unsigned()) ||
        (slot.is_number_integer() && !slot.is_number_unsigned() && v.is_number_integer()) ||
        (slot.is_number_float() && v.is_number()) ||
        (optional_slot && (v.is_null() || v.is_number()));
    if (!ok) {
      fail(ErrorKind::ConfigError, key + ": expected " + std::string(slot.type_name()) +
                                       ", got " + std::string(v.type_name()));
    }
    slot = slot.is_number_float() && v.is_number() ? Json(v.get<double>()) : v;
  }
}

// "CAMDP_TRAIN_LEARNING_RATE" style name for a dotted key.
inline std::string env_name(const std::string& dotted) {
  std::string n = "CAMDP_";
  for (char ch : dotted) n += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return n;
}

inline void collect_leaves(const Json& j, const std::string& prefix,
                           std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object()) {
      collect_leaves(it.value(), key, out);
    } else {
      out.push_back(key);
    }
  }
}

inline Json patch_for(const std::string& dotted, Json value) {
  Json patch = std::move(value);
  std::string rest = dotted;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, std::move(patch)}};
  return patch;
}

/// Parses a command-line or environment string against the type of `slot`.
inline Json parse_scalar(const std::string& key, const Json& slot, const std::string& text) {
  if (slot.is_string()) return text;
  try {
    Json v = Json::parse(text);
    if (v.is_number_integer() && slot.is_number_unsigned() && v.get<std::int64_t>() >= 0) {
      v = v.get<std::uint64_t>();
    }
    return v;
  } catch (const Json::parse_error&) {
    fail(ErrorKind::ConfigError, key + ": cannot parse '" + text + "'");
  }
}

}  // namespace detail

inline RunConfig from_json(const Json& j) {
  RunConfig c;
  Json full = to_json(c);
  detail::merge_strict(full, j, "");
  using detail::enum_value;
  try {
    c.seed = full["seed"].get<std::uint64_t>();
    c.threads = full["threads"].get<int>();
    c.out = full["out"].get<std::string>();
    const auto& d = full["data"];
    c.data.csv = d["csv"].get<std::string>();
    c.data.noise_model = d["noise_model"].get<std::string>();
    c.data.events = d["events"].get<std::string>();
    c.data.time_unit = enum_value<TimeUnit>("data.time_unit", d["time_unit"].get<std::string>());
    c.data.length_unit =
        enum_value<LengthUnit>("data.length_unit", d["length_unit"].get<std::string>());
    const auto& r = full["reference"];
    c.reference.pool_size = r["pool_size"].get<std::size_t>();
    c.reference.log10_miss_mean = r["log10_miss_mean"].get<double>();
    c.reference.log10_miss_sd = r["log10_miss_sd"].get<double>();
    c.reference.log10_sigma_mean = r["log10_sigma_mean"].get<double>();
    c.reference.log10_sigma_sd = r["log10_sigma_sd"].get<double>();
    c.reference.hbr = r["hbr_km"].get<double>();
    const auto& e = full["episode"];
    auto& ep = c.episode;
    ep.eta = e["eta"].get<double>();
    ep.hbr_mode = enum_value<HbrMode>("episode.hbr_mode", e["hbr_mode"].get<std::string>());
    ep.hbr_fixed = e["hbr_fixed_km"].get<double>();
    ep.hbr_min = e["hbr_min_km"].get<double>();
    ep.hbr_max = e["hbr_max_km"].get<double>();
    ep.phase_mode = enum_value<PhaseMode>("episode.phase_mode", e["phase_mode"].get<std::string>());
    ep.fixed_delta_theta = e["fixed_delta_theta_rad"].get<double>();
    ep.n_rev_mode = enum_value<NRevMode>("episode.n_rev_mode", e["n_rev_mode"].get<std::string>());
    ep.altitude_min = e["altitude_min_km"].get<double>();
    ep.altitude_max = e["altitude_max_km"].get<double>();
    ep.m_o = e["m_o_kg"].get<double>();
    ep.isp = e["isp_s"].get<double>();
    ep.delta_r_cap = e["delta_r_cap_km"].get<double>();
    ep.poc_threshold = e["poc_threshold"].get<double>();
    if (e["lambda"].is_null()) {
      ep.lambda.reset();
    } else {
      ep.lambda = e["lambda"].get<double>();
    }
    ep.sigma_floor = e["sigma_floor_km"].get<double>();
    ep.rho_t_fraction = e["rho_t_fraction"].get<double>();
    const auto& t = full["train"];
    auto& tc = c.train;
    tc.iterations = t["iterations"].get<int>();
    tc.episodes_per_batch = t["episodes_per_batch"].get<int>();
    tc.eps_max = t["eps_max"].get<double>();
    tc.eps_min = t["eps_min"].get<double>();
    tc.eps_decay = t["eps_decay"].get<double>();
    tc.learning_rate = t["learning_rate"].get<double>();
    tc.baseline = t["baseline"].get<bool>();
    tc.snapshot_per_batch = t["snapshot_per_batch"].get<bool>();
    tc.shape.hidden1 = t["hidden1"].get<int>();
    tc.shape.hidden2 = t["hidden2"].get<int>();
    tc.features = enum_value<FeatureScaling>("train.features", t["features"].get<std::string>());
    if (t["initial_maneuver_prob"].is_null()) {
      tc.initial_maneuver_prob.reset();
    } else {
      tc.initial_maneuver_prob = t["initial_maneuver_prob"].get<double>();
    }
    c.eval.events = full["eval"]["events"].get<std::size_t>();
    const auto& a = full["ablation"];
    c.ablation.iterations = a["iterations"].get<int>();
    c.ablation.eta_one_iterations = a["eta_one_iterations"].get<int>();
    c.ablation.window = a["window"].get<int>();
    c.ablation.tolerance = a["tolerance"].get<double>();
  } catch (const Json::exception& ex) {
    fail(ErrorKind::ConfigError, ex.what());
  }
  c.train.seed = c.seed;
  c.train.threads = c.threads;
  if (c.threads < 1) fail(ErrorKind::ConfigError, "threads must be >= 1");
  if (c.ablation.iterations < 1 || c.ablation.eta_one_iterations < 1 || c.ablation.window < 1 ||
      !(c.ablation.tolerance > 0.0)) {
    fail(ErrorKind::ConfigError, "ablation settings must be positive");
  }
  c.episode.validate();
  c.train.validate();
  return c;
}

/// Layered resolution. `overrides` holds dotted-key assignments from flags.
class ConfigBuilder {
 public:
  ConfigBuilder() : doc_(to_json(RunConfig{})) {}

  /// Applies every CAMDP_<SECTION>_<KEY> variable that names a schema key.
  ConfigBuilder& apply_environment() {
    std::vector<std::string> leaves;
    detail::collect_leaves(doc_, "", leaves);
    for (const auto& key : leaves) {
      if (const char* v = std::getenv(detail::env_name(key).c_str())) set(key, v);
    }
    return *this;
  }

  ConfigBuilder& apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoError, "cannot open config " + path);
    Json j;
    try {
      j = Json::parse(in, nullptr, true, true);
    } catch (const Json::parse_error& e) {
      fail(ErrorKind::ConfigError, path + ": " + e.what());
    }
    detail::merge_strict(doc_, j, "");
    return *this;
  }

  ConfigBuilder& apply_json(const Json& j) {
    detail::merge_strict(doc_, j, "");
    return *this;
  }

  /// Sets one dotted key from text, parsed against the key's type.
  ConfigBuilder& set(const std::string& dotted, const std::string& text) {
    const Json* slot = &doc_;
    std::string rest = dotted;
    while (true) {
      const auto pos = rest.find('.');
      const std::string head = rest.substr(0, pos);
      if (!slot->is_object() || !slot->contains(head)) {
        fail(ErrorKind::ConfigError, "unknown key '" + dotted + "'");
      }
      slot = &(*slot)[head];
      if (pos == std::string::npos) break;
      rest = rest.substr(pos + 1);
    }
    if (slot->is_object()) fail(ErrorKind::ConfigError, "'" + dotted + "' is a section");
    detail::merge_strict(doc_, detail::patch_for(dotted, detail::parse_scalar(dotted, *slot, text)),
                         "");
    return *this;
  }

  RunConfig build() const { return from_json(doc_); }
  const Json& document() const { return doc_; }

 private:
  Json doc_;
};

inline void write_resolved_config(const RunConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << to_json(c).dump(2) << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed for " + path);
}

}  // namespace camdp

#pragma once

// Conjunction data messages: CSV ingestion onto the 8-hour grid, per-step
// noise fitting, noise-model serialization and ground-truth risk labels.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "camdp/distributions.hpp"
#include "camdp/errors.hpp"
#include "camdp/geom.hpp"
#include "camdp/risk.hpp"
#include "camdp/rng.hpp"

namespace camdp {

inline constexpr int kHorizonSteps = 21;  // k = 0..20
inline constexpr int kLastStep = kHorizonSteps - 1;
inline constexpr double kGridStartHours = 168.0;
inline constexpr double kGridSpacingHours = 8.0;
inline constexpr double kStateUpperBound = 100.0;  // km, for d_m and sigma_T

inline constexpr double grid_time(int k) { return kGridStartHours - kGridSpacingHours * k; }

struct CdmRecord {
  std::string event_id;
  double time_to_tca = 0.0;    // hours
  double miss_distance = 0.0;  // km
  double sigma_t = 0.0;        // km, debris along-track std
  Covariance3 covariance_target;
  Covariance3 covariance_chaser;
  RtnVector rel_position;  // km
  RtnVector rel_velocity;  // km/s
  double r_t = 0.005;      // km
  double r_c = 0.005;      // km

  double hbr() const { return r_t + r_c; }
  bool within_state_bounds() const {
    return miss_distance >= 0.0 && miss_distance <= kStateUpperBound && sigma_t >= 0.0 &&
           sigma_t <= kStateUpperBound && time_to_tca >= 0.0;
  }
  friend bool operator==(const CdmRecord&, const CdmRecord&) = default;
};

/// One conjunction event on the grid: records[i] belongs to step first_step + i
/// and the series always runs through step 20.
struct EventSeries {
  std::string event_id;
  int first_step = 0;
  std::vector<CdmRecord> records;

  bool empty() const { return records.empty(); }
  int last_step() const { return first_step + static_cast<int>(records.size()) - 1; }
  bool has_step(int k) const { return k >= first_step && k <= last_step(); }
  const CdmRecord& at_step(int k) const { return records.at(static_cast<std::size_t>(k - first_step)); }
  const CdmRecord& first() const { return records.front(); }
  const CdmRecord& last() const { return records.back(); }
  friend bool operator==(const EventSeries&, const EventSeries&) = default;
};

/// Nearest-preceding hold of a time-sorted (descending time_to_tca) raw series
/// onto t_k = 168 - 8k. Grid points before the first CDM are left out.
inline EventSeries resample_to_grid(std::string event_id, const std::vector<CdmRecord>& raw) {
  EventSeries out;
  out.event_id = std::move(event_id);
  std::size_t next = 0;  // first raw record not yet issued
  std::optional<std::size_t> current;
  for (int k = 0; k < kHorizonSteps; ++k) {
    const double t = grid_time(k);
    while (next < raw.size() && raw[next].time_to_tca >= t) current = next++;
    if (!current) continue;
    if (out.records.empty()) out.first_step = k;
    CdmRecord rec = raw[*current];
    rec.time_to_tca = t;
    out.records.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion

enum class TimeUnit { Days, Hours };
enum class LengthUnit { Meters, Kilometers };

/// Canonical field -> accepted header names (case-insensitive). The first
/// alias present in the header wins.
using ColumnAliases = std::map<std::string, std::vector<std::string>>;

inline ColumnAliases default_column_aliases() {
  ColumnAliases a;
  a["event_id"] = {"event_id"};
  a["time_to_tca"] = {"time_to_tca"};
  a["miss_distance"] = {"miss_distance"};
  a["sigma_t"] = {"c_sigma_t", "sigma_t"};
  const std::array<std::string, 3> axes{"r", "t", "n"};
  for (const auto& ax : axes) {
    a["rel_pos_" + ax] = {"relative_position_" + ax, "rel_pos_" + ax};
    a["rel_vel_" + ax] = {"relative_velocity_" + ax, "rel_vel_" + ax};
  }
  for (const std::string obj : {"t", "c"}) {
    for (const std::string e : {"rr", "rt", "rn", "tt", "tn", "nn"}) {
      a[obj + "_cov_" + e] = {obj + "_cov_" + e};
    }
    for (const auto& ax : axes) a[obj + "_sigma_" + ax] = {obj + "_sigma_" + ax};
    a[obj + "_ct_r"] = {obj + "_ct_r"};
    a[obj + "_cn_r"] = {obj + "_cn_r"};
    a[obj + "_cn_t"] = {obj + "_cn_t"};
    a[obj + "_radius"] = {obj + "_radius"};
    a[obj + "_span"] = {obj + "_span"};  // object size; radius = span / 2
  }
  return a;
}

struct IngestOptions {
  TimeUnit time_unit = TimeUnit::Days;        // Kelvins time_to_tca is in days
  LengthUnit length_unit = LengthUnit::Meters;  // and distances in m, m/s, m^2
  ColumnAliases aliases = default_column_aliases();
};

/// Options that read back what write_events_csv produces.
inline IngestOptions canonical_ingest_options() {
  IngestOptions o;
  o.time_unit = TimeUnit::Hours;
  o.length_unit = LengthUnit::Kilometers;
  return o;
}

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::size_t dropped_missing_value = 0;
  std::size_t dropped_out_of_bounds = 0;
  std::size_t dropped_non_psd = 0;
  std::size_t dropped_duplicate_time = 0;
  std::size_t unique_events = 0;          // distinct ids among kept rows
  std::size_t events_without_grid = 0;    // every CDM later than the last grid point
  double cdms_per_event = 0.0;            // kept rows / unique events

  std::string summary() const {
    std::ostringstream os;
    os << "rows_read=" << rows_read << " rows_kept=" << rows_kept
       << " dropped_missing_value=" << dropped_missing_value
       << " dropped_out_of_bounds=" << dropped_out_of_bounds
       << " dropped_non_psd=" << dropped_non_psd
       << " dropped_duplicate_time=" << dropped_duplicate_time
       << " unique_events=" << unique_events << " events_without_grid=" << events_without_grid
       << " cdms_per_event=" << cdms_per_event;
    return os.str();
  }
};

struct IngestResult {
  std::vector<EventSeries> events;
  IngestReport report;
};

namespace detail {

inline std::string lower_trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
    s.remove_suffix(1);
  }
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

enum class Parsed { Ok, Missing, Bad };

inline Parsed parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  if (s.empty()) return Parsed::Missing;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    const std::string low = lower_trim(s);
    if (low == "nan" || low == "na" || low == "null") return Parsed::Missing;
    return Parsed::Bad;
  }
  return std::isfinite(out) ? Parsed::Ok : Parsed::Missing;
}

struct ColumnMap {
  std::unordered_map<std::string, std::size_t> index;  // canonical -> column

  std::optional<std::size_t> find(const std::string& field) const {
    auto it = index.find(field);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }
};

}  // namespace detail

inline IngestResult ingest_csv(const std::string& path, const IngestOptions& options = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);

  std::string line;
  std::size_t line_no = 0;
  // Skip a UTF-8 BOM and blank leading lines.
  while (std::getline(in, line)) {
    ++line_no;
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
    if (!detail::lower_trim(line).empty()) break;
    line.clear();
  }
  if (detail::lower_trim(line).empty()) fail(ErrorKind::EmptyDataset, path + " has no header");

  const auto header_fields = detail::split_csv(line);
  std::unordered_map<std::string, std::size_t> header;
  for (std::size_t i = 0; i < header_fields.size(); ++i) {
    header.emplace(detail::lower_trim(header_fields[i]), i);
  }
  detail::ColumnMap cols;
  for (const auto& [field, names] : options.aliases) {
    for (const auto& name : names) {
      auto it = header.find(detail::lower_trim(name));
      if (it != header.end()) {
        cols.index[field] = it->second;
        break;
      }
    }
  }
  auto require = [&](const std::string& field) {
    auto c = cols.find(field);
    if (!c) {
      const auto& names = options.aliases.at(field);
      fail(ErrorKind::MissingColumn, names.empty() ? field : names.front());
    }
    return *c;
  };

  const std::size_t c_id = require("event_id");
  const std::size_t c_time = require("time_to_tca");
  const std::size_t c_miss = require("miss_distance");
  const std::size_t c_sigma = require("sigma_t");
  std::array<std::size_t, 3> c_pos{}, c_vel{};
  const std::array<std::string, 3> axes{"r", "t", "n"};
  for (int i = 0; i < 3; ++i) {
    c_pos[i] = require("rel_pos_" + axes[i]);
    c_vel[i] = require("rel_vel_" + axes[i]);
  }

  // Covariance layout per object: full entries, or sigmas plus correlations.
  struct CovColumns {
    bool full = false;
    std::array<std::size_t, 6> idx{};
  };
  auto covariance_columns = [&](const std::string& obj) {
    CovColumns cc;
    const std::array<std::string, 6> full{"rr", "rt", "rn", "tt", "tn", "nn"};
    bool have_full = true;
    for (const auto& e : full) have_full = have_full && cols.find(obj + "_cov_" + e).has_value();
    if (have_full) {
      cc.full = true;
      for (int i = 0; i < 6; ++i) cc.idx[i] = *cols.find(obj + "_cov_" + full[i]);
      return cc;
    }
    const std::array<std::string, 6> sig{obj + "_sigma_r", obj + "_sigma_t", obj + "_sigma_n",
                                         obj + "_ct_r",    obj + "_cn_r",    obj + "_cn_t"};
    for (int i = 0; i < 6; ++i) cc.idx[i] = require(sig[i]);
    return cc;
  };
  const CovColumns cov_t = covariance_columns("t");
  const CovColumns cov_c = covariance_columns("c");

  struct RadiusColumn {
    std::size_t idx = 0;
    double factor = 1.0;
  };
  auto radius_column = [&](const std::string& obj) {
    if (auto c = cols.find(obj + "_radius")) return RadiusColumn{*c, 1.0};
    if (auto c = cols.find(obj + "_span")) return RadiusColumn{*c, 0.5};
    return RadiusColumn{require(obj + "_radius"), 1.0};
  };
  const RadiusColumn rad_t = radius_column("t");
  const RadiusColumn rad_c = radius_column("c");

  const double time_factor = options.time_unit == TimeUnit::Days ? 24.0 : 1.0;
  const double len = options.length_unit == LengthUnit::Meters ? 1e-3 : 1.0;

  IngestResult result;
  IngestReport& rep = result.report;
  std::vector<std::string> order;  // event ids in first-seen order
  std::unordered_map<std::string, std::vector<CdmRecord>> grouped;

  const std::size_t n_cols = header_fields.size();
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::lower_trim(line).empty()) continue;
    ++rep.rows_read;
    const auto f = detail::split_csv(line);
    if (f.size() != n_cols) {
      fail(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(n_cols) + " fields, got " +
                                        std::to_string(f.size()));
    }
    bool missing = false;
    auto num = [&](std::size_t col) {
      double v = 0.0;
      switch (detail::parse_double(f[col], v)) {
        case detail::Parsed::Ok: return v;
        case detail::Parsed::Missing: missing = true; return 0.0;
        case detail::Parsed::Bad: break;
      }
      fail(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": column " +
                                        std::to_string(col + 1) + " is not numeric");
    };

    CdmRecord r;
    r.event_id = detail::lower_trim(f[c_id]);
    if (r.event_id.empty()) missing = true;
    r.time_to_tca = num(c_time) * time_factor;
    r.miss_distance = num(c_miss) * len;
    r.sigma_t = num(c_sigma) * len;
    r.rel_position = {num(c_pos[0]) * len, num(c_pos[1]) * len, num(c_pos[2]) * len};
    r.rel_velocity = {num(c_vel[0]) * len, num(c_vel[1]) * len, num(c_vel[2]) * len};
    std::array<double, 6> vt{}, vc{};
    for (int i = 0; i < 6; ++i) {
      vt[i] = num(cov_t.idx[i]);
      vc[i] = num(cov_c.idx[i]);
    }
    r.r_t = num(rad_t.idx) * rad_t.factor * len;
    r.r_c = num(rad_c.idx) * rad_c.factor * len;
    if (missing) {
      ++rep.dropped_missing_value;
      continue;
    }
    if (!r.within_state_bounds()) {
      ++rep.dropped_out_of_bounds;
      continue;
    }
    auto to_cov = [&](const CovColumns& cc, const std::array<double, 6>& v) {
      if (cc.full) {
        const double l2 = len * len;
        Eigen::Matrix3d m;
        m << v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5];
        return Covariance3::from_matrix(m * l2);
      }
      return Covariance3::from_sigmas(v[0] * len, v[1] * len, v[2] * len, v[3], v[4], v[5]);
    };
    try {
      r.covariance_target = to_cov(cov_t, vt);
      r.covariance_chaser = to_cov(cov_c, vc);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonPsdCovariance) throw;
      ++rep.dropped_non_psd;
      continue;
    }
    auto [it, inserted] = grouped.try_emplace(r.event_id);
    if (inserted) order.push_back(r.event_id);
    it->second.push_back(std::move(r));
    ++rep.rows_kept;
  }
  if (rep.rows_read == 0) fail(ErrorKind::EmptyDataset, path + " has no data rows");
  if (rep.rows_kept == 0) fail(ErrorKind::EmptyDataset, path + " has no rows within bounds");

  rep.unique_events = order.size();
  rep.cdms_per_event = static_cast<double>(rep.rows_kept) / static_cast<double>(order.size());
  for (const auto& id : order) {
    auto& raw = grouped[id];
    // Descending time-to-TCA; for equal times the later row in the file wins.
    std::stable_sort(raw.begin(), raw.end(), [](const CdmRecord& a, const CdmRecord& b) {
      return a.time_to_tca > b.time_to_tca;
    });
    std::vector<CdmRecord> unique;
    for (auto& rec : raw) {
      if (!unique.empty() && unique.back().time_to_tca == rec.time_to_tca) {
        unique.back() = std::move(rec);
        ++rep.dropped_duplicate_time;
      } else {
        unique.push_back(std::move(rec));
      }
    }
    EventSeries series = resample_to_grid(id, unique);
    if (series.empty()) {
      ++rep.events_without_grid;
      continue;
    }
    result.events.push_back(std::move(series));
  }
  return result;
}

namespace detail {

inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Writes grid series in the canonical schema (hours, km, km/s, km^2); read
/// back with canonical_ingest_options().
inline void write_events_csv(const std::string& path, const std::vector<EventSeries>& events) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << "event_id,time_to_tca,miss_distance,c_sigma_t,"
         "relative_position_r,relative_position_t,relative_position_n,"
         "relative_velocity_r,relative_velocity_t,relative_velocity_n,"
         "t_cov_rr,t_cov_rt,t_cov_rn,t_cov_tt,t_cov_tn,t_cov_nn,"
         "c_cov_rr,c_cov_rt,c_cov_rn,c_cov_tt,c_cov_tn,c_cov_nn,t_radius,c_radius\n";
  using detail::fmt17;
  auto cov = [&](const Covariance3& c) {
    return fmt17(c(0, 0)) + "," + fmt17(c(0, 1)) + "," + fmt17(c(0, 2)) + "," + fmt17(c(1, 1)) +
           "," + fmt17(c(1, 2)) + "," + fmt17(c(2, 2));
  };
  for (const auto& ev : events) {
    for (const auto& r : ev.records) {
      out << ev.event_id << ',' << fmt17(r.time_to_tca) << ',' << fmt17(r.miss_distance) << ','
          << fmt17(r.sigma_t) << ',' << fmt17(r.rel_position.r) << ',' << fmt17(r.rel_position.t)
          << ',' << fmt17(r.rel_position.n) << ',' << fmt17(r.rel_velocity.r) << ','
          << fmt17(r.rel_velocity.t) << ',' << fmt17(r.rel_velocity.n) << ','
          << cov(r.covariance_target) << ',' << cov(r.covariance_chaser) << ',' << fmt17(r.r_t)
          << ',' << fmt17(r.r_c) << '\n';
    }
  }
  if (!out) fail(ErrorKind::IoError, "write failed for " + path);
}

// ---------------------------------------------------------------------------
// Noise model

struct StepNoise {
  GndParams miss;    // w^d for d_k = d_{k-1} (1 + w^d)
  NctParams sigma;   // w^sigma for sigma_k = sigma_{k-1} (1 + w^sigma)
  std::size_t samples = 0;
  friend bool operator==(const StepNoise&, const StepNoise&) = default;
};

struct InitialState {
  double miss_distance = 0.0;
  double sigma_t = 0.0;
  double hbr = 0.01;
  friend bool operator==(const InitialState&, const InitialState&) = default;
};

/// Transition noise for steps 1..20 (entry k drives the move from k-1 to k),
/// plus the pool of first-CDM states used to seed synthetic episodes.
struct NoiseModel {
  std::array<StepNoise, kHorizonSteps> steps{};  // index 0 unused
  std::vector<InitialState> initial_states;

  const StepNoise& into(int k) const { return steps.at(static_cast<std::size_t>(k)); }
  StepNoise& into(int k) { return steps.at(static_cast<std::size_t>(k)); }

  bool valid() const {
    for (int k = 1; k < kHorizonSteps; ++k) {
      if (!into(k).miss.valid() || !into(k).sigma.valid()) return false;
    }
    return !initial_states.empty();
  }
  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

struct FitOptions {
  std::size_t min_samples = 30;
  bool nct_location_scale = true;
};

namespace detail {

struct StepSamples {
  std::vector<double> miss;
  std::vector<double> sigma;
};

inline std::array<StepSamples, kHorizonSteps> collect_ratio_residuals(
    const std::vector<EventSeries>& series) {
  std::array<StepSamples, kHorizonSteps> out;
  for (const auto& ev : series) {
    for (int k = ev.first_step + 1; k <= ev.last_step(); ++k) {
      const auto& prev = ev.at_step(k - 1);
      const auto& cur = ev.at_step(k);
      if (prev.miss_distance > 0.0) {
        out[k].miss.push_back(cur.miss_distance / prev.miss_distance - 1.0);
      }
      if (prev.sigma_t > 0.0) out[k].sigma.push_back(cur.sigma_t / prev.sigma_t - 1.0);
    }
  }
  return out;
}

// Grows a window around k until it holds min_samples residuals.
inline std::vector<double> pooled(const std::array<StepSamples, kHorizonSteps>& s, int k,
                                  std::size_t min_samples, bool miss) {
  auto pick = [&](int j) -> const std::vector<double>& { return miss ? s[j].miss : s[j].sigma; };
  std::vector<double> out = pick(k);
  for (int radius = 1; out.size() < min_samples && radius < kHorizonSteps; ++radius) {
    for (int j : {k - radius, k + radius}) {
      if (j >= 1 && j < kHorizonSteps) out.insert(out.end(), pick(j).begin(), pick(j).end());
    }
  }
  if (out.size() < min_samples) {
    fail(ErrorKind::InsufficientData, "step " + std::to_string(k) + ": only " +
                                          std::to_string(out.size()) + " residuals");
  }
  return out;
}

}  // namespace detail

inline NoiseModel fit_noise_model(const std::vector<EventSeries>& series,
                                  const FitOptions& options = {}) {
  if (series.empty()) fail(ErrorKind::EmptyDataset, "no series to fit");
  const auto residuals = detail::collect_ratio_residuals(series);
  NoiseModel model;
  for (int k = 1; k < kHorizonSteps; ++k) {
    const auto miss = detail::pooled(residuals, k, options.min_samples, true);
    const auto sigma = detail::pooled(residuals, k, options.min_samples, false);
    try {
      model.into(k).miss = fit_gnd(miss);
    } catch (const Error& e) {
      fail(ErrorKind::FitDiverged, "step " + std::to_string(k) + " GND: " + e.what());
    }
    try {
      model.into(k).sigma = fit_nct(sigma, options.nct_location_scale);
    } catch (const Error& e) {
      fail(ErrorKind::FitDiverged, "step " + std::to_string(k) + " NCT: " + e.what());
    }
    model.into(k).samples = residuals[k].miss.size();
  }
  model.steps[0] = model.steps[1];
  for (const auto& ev : series) {
    const auto& r = ev.first();
    model.initial_states.push_back({r.miss_distance, r.sigma_t, r.hbr()});
  }
  return model;
}

inline void save_noise_model(const std::string& path, const NoiseModel& m) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  using detail::fmt17;
  out << "format = camdp-noise-model/1\n";
  out << "# gnd.k = mu alpha beta ; nct.k = nu delta loc scale ; entry k drives step k-1 -> k\n";
  for (int k = 1; k < kHorizonSteps; ++k) {
    const auto& s = m.into(k);
    out << "gnd." << k << " = " << fmt17(s.miss.mu) << ' ' << fmt17(s.miss.alpha) << ' '
        << fmt17(s.miss.beta) << '\n';
    out << "nct." << k << " = " << fmt17(s.sigma.nu) << ' ' << fmt17(s.sigma.delta) << ' '
        << fmt17(s.sigma.loc) << ' ' << fmt17(s.sigma.scale) << '\n';
    out << "samples." << k << " = " << s.samples << '\n';
  }
  out << "initial.count = " << m.initial_states.size() << '\n';
  for (const auto& s : m.initial_states) {
    out << "initial = " << fmt17(s.miss_distance) << ' ' << fmt17(s.sigma_t) << ' '
        << fmt17(s.hbr) << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed for " + path);
}

inline NoiseModel load_noise_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  NoiseModel m;
  std::string line;
  std::size_t line_no = 0, expected_initial = 0;
  bool saw_format = false;
  std::array<bool, kHorizonSteps> have_gnd{}, have_nct{};
  auto bad = [&](const std::string& why) {
    fail(ErrorKind::MalformedRow, path + " line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad("expected key = value");
    const std::string key = detail::lower_trim(std::string_view(line).substr(0, eq));
    std::istringstream vals(line.substr(eq + 1));
    if (key == "format") {
      std::string v;
      vals >> v;
      if (v != "camdp-noise-model/1") bad("unsupported format " + v);
      saw_format = true;
      continue;
    }
    if (key == "initial.count") {
      vals >> expected_initial;
      continue;
    }
    if (key == "initial") {
      InitialState s;
      if (!(vals >> s.miss_distance >> s.sigma_t >> s.hbr)) bad("initial needs 3 numbers");
      m.initial_states.push_back(s);
      continue;
    }
    const auto dot = key.find('.');
    if (dot == std::string::npos) bad("unknown key " + key);
    const std::string family = key.substr(0, dot);
    int k = -1;
    try {
      k = std::stoi(key.substr(dot + 1));
    } catch (...) {
      bad("bad step index in " + key);
    }
    if (k < 1 || k >= kHorizonSteps) bad("step index out of range");
    auto& s = m.into(k);
    if (family == "gnd") {
      if (!(vals >> s.miss.mu >> s.miss.alpha >> s.miss.beta)) bad("gnd needs 3 numbers");
      have_gnd[k] = true;
    } else if (family == "nct") {
      if (!(vals >> s.sigma.nu >> s.sigma.delta >> s.sigma.loc >> s.sigma.scale)) {
        bad("nct needs 4 numbers");
      }
      have_nct[k] = true;
    } else if (family == "samples") {
      vals >> s.samples;
    } else {
      bad("unknown key " + key);
    }
  }
  if (!saw_format) fail(ErrorKind::MalformedRow, path + ": missing format line");
  for (int k = 1; k < kHorizonSteps; ++k) {
    if (!have_gnd[k] || !have_nct[k]) {
      fail(ErrorKind::MalformedRow, path + ": step " + std::to_string(k) + " incomplete");
    }
  }
  if (m.initial_states.size() != expected_initial) {
    fail(ErrorKind::MalformedRow, path + ": initial.count does not match entries");
  }
  m.steps[0] = m.steps[1];
  if (!m.valid()) fail(ErrorKind::MalformedRow, path + ": parameters violate positivity");
  return m;
}

// ---------------------------------------------------------------------------
// Reference model used when no historical dataset is supplied.

struct ReferenceModelOptions {
  std::size_t pool_size = 11155;
  double log10_miss_mean = 1.05;  // log10(km); gives ~3% high-risk events
  double log10_miss_sd = 0.8;
  double log10_sigma_mean = -0.3;
  double log10_sigma_sd = 0.5;
  double hbr = 0.01;  // km
};

/// Every transition uses GND(0, 0.02, 0.59) for the miss distance and
/// NCT(1.05, -0.89) with scale 0.02 for sigma_T. Initial states are
/// log-normal in both coordinates and clipped to the state bounds.
inline NoiseModel reference_noise_model(std::uint64_t seed,
                                        const ReferenceModelOptions& opt = {}) {
  NoiseModel m;
  for (auto& s : m.steps) {
    s.miss = {0.0, 0.02, 0.59};
    s.sigma = {1.05, -0.89, 0.0, 0.02};
  }
  Rng rng(seed);
  std::normal_distribution<double> ld(opt.log10_miss_mean, opt.log10_miss_sd);
  std::normal_distribution<double> ls(opt.log10_sigma_mean, opt.log10_sigma_sd);
  m.initial_states.reserve(opt.pool_size);
  for (std::size_t i = 0; i < opt.pool_size; ++i) {
    const double d = std::clamp(std::pow(10.0, ld(rng)), 1e-3, kStateUpperBound);
    const double s = std::clamp(std::pow(10.0, ls(rng)), 1e-3, kStateUpperBound);
    m.initial_states.push_back({d, s, opt.hbr});
  }
  return m;
}

// ---------------------------------------------------------------------------
// Ground truth

enum class RiskLabel { Low, High };

enum class RiskGeometry {
  State,  // the MDP mapping from (d_m, sigma_T); matches the terminal cost
  Full,   // B-plane projection of the CDM's relative state and covariances
};

struct LabelOptions {
  RiskGeometry geometry = RiskGeometry::State;
  double sigma_floor = kDefaultSigmaFloor;
  std::optional<double> hbr_override;  // km; otherwise the record's r_t + r_c
};

inline double record_poc(const CdmRecord& r, const LabelOptions& opt = {}) {
  const double hbr = opt.hbr_override.value_or(r.hbr());
  if (opt.geometry == RiskGeometry::State) {
    return state_poc(r.miss_distance, r.sigma_t, hbr, opt.sigma_floor);
  }
  auto g = build_bplane(r.rel_position, r.rel_velocity, r.covariance_target + r.covariance_chaser,
                        r.r_t, r.r_c);
  g.hbr = hbr;
  return poc_approx(g);
}

/// High iff the unmaneuvered final CDM has PoC >= threshold.
inline RiskLabel label_true_risk(const EventSeries& series, double threshold,
                                 const LabelOptions& opt = {}) {
  if (series.empty()) fail(ErrorKind::InvalidArgument, "empty series");
  return record_poc(series.last(), opt) >= threshold ? RiskLabel::High : RiskLabel::Low;
}

}  // namespace camdp

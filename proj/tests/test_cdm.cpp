#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "camdp/cdm.hpp"
#include "camdp/simenv.hpp"

using namespace camdp;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("camdp_cdm_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

const char* kKelvinsHeader =
    "event_id,time_to_tca,miss_distance,"
    "relative_position_r,relative_position_t,relative_position_n,"
    "relative_velocity_r,relative_velocity_t,relative_velocity_n,"
    "t_sigma_r,t_sigma_t,t_sigma_n,t_ct_r,t_cn_r,t_cn_t,"
    "c_sigma_r,c_sigma_t,c_sigma_n,c_ct_r,c_cn_r,c_cn_t,t_span,c_span\n";
constexpr int kKelvinsColumns = 23;

// Kelvins-style row in days and metres. c_sigma_t is both the state's
// along-track sigma and part of the chaser covariance block.
std::string row(const std::string& id, double days, double miss_m, double sigma_m) {
  std::ostringstream s;
  s << id << ',' << days << ',' << miss_m << ",10," << miss_m << ",5,"
    << "1,-14000,2,50,300,20,0.1,0,0,80," << sigma_m << ",30,0,0,0,6,4\n";
  return s.str();
}

std::string kelvins_header() { return kKelvinsHeader; }

IngestOptions kelvins_options() { return {}; }

void write(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::IoError;
}

}  // namespace

TEST(Grid, TimesAndCutoff) {
  EXPECT_EQ(grid_time(0), 168.0);
  EXPECT_EQ(grid_time(18), 24.0);
  EXPECT_EQ(grid_time(20), 8.0);
}

TEST(Resample, NearestPrecedingHold) {
  std::vector<CdmRecord> raw(3);
  raw[0].time_to_tca = 150.0;
  raw[0].miss_distance = 1.0;
  raw[1].time_to_tca = 100.0;
  raw[1].miss_distance = 2.0;
  raw[2].time_to_tca = 99.0;
  raw[2].miss_distance = 3.0;
  const auto s = resample_to_grid("e", raw);
  // 150 h lands after the k=2 grid point (152 h), so the series starts at k=3.
  EXPECT_EQ(s.first_step, 3);
  EXPECT_EQ(s.last_step(), 20);
  EXPECT_EQ(s.at_step(3).miss_distance, 1.0);   // t=144
  EXPECT_EQ(s.at_step(8).miss_distance, 1.0);   // t=104
  EXPECT_EQ(s.at_step(9).miss_distance, 3.0);   // t=96: both 100 and 99 passed
  EXPECT_EQ(s.at_step(20).miss_distance, 3.0);
  EXPECT_EQ(s.at_step(9).time_to_tca, 96.0);
  EXPECT_LE(s.records.size(), 21u);
}

TEST(Ingest, KelvinsUnitsAndCovariance) {
  TempDir dir;
  const auto path = dir.file("k.csv");
  write(path, kelvins_header() + row("7", 6.5, 2500, 400) + row("7", 2.0, 1200, 120) +
                  row("8", 0.9, 30000, 90));
  const auto res = ingest_csv(path, kelvins_options());
  ASSERT_EQ(res.events.size(), 2u);
  EXPECT_EQ(res.report.rows_kept, 3u);
  EXPECT_EQ(res.report.unique_events, 2u);
  EXPECT_DOUBLE_EQ(res.report.cdms_per_event, 1.5);

  const auto& e7 = res.events[0];
  EXPECT_EQ(e7.event_id, "7");
  EXPECT_EQ(e7.first_step, 2);  // 156 h is first on the grid at 152 h
  EXPECT_NEAR(e7.first().miss_distance, 2.5, 1e-15);
  EXPECT_NEAR(e7.first().sigma_t, 0.4, 1e-15);
  EXPECT_NEAR(e7.first().rel_velocity.t, -14.0, 1e-12);
  EXPECT_NEAR(e7.first().covariance_target(0, 0), 0.05 * 0.05, 1e-15);
  EXPECT_NEAR(e7.first().covariance_target(0, 1), 0.1 * 0.05 * 0.3, 1e-15);
  EXPECT_NEAR(e7.first().covariance_chaser(1, 1), 0.4 * 0.4, 1e-15);
  EXPECT_NEAR(e7.first().hbr(), 0.005, 1e-15);
  EXPECT_NEAR(e7.last().miss_distance, 1.2, 1e-15);  // 48 h CDM held to k=20

  // 0.9 days = 21.6 h, later than the k=18 grid point.
  EXPECT_EQ(res.events[1].first_step, 19);
}

TEST(Ingest, SingleCdmSeries) {
  TempDir dir;
  const auto path = dir.file("one.csv");
  write(path, kelvins_header() + row("a", 0.34, 900, 50));  // 8.16 h: only k = 20
  const auto res = ingest_csv(path, kelvins_options());
  ASSERT_EQ(res.events.size(), 1u);
  EXPECT_EQ(res.events[0].records.size(), 1u);
  EXPECT_EQ(res.events[0].first_step, 20);
}

TEST(Ingest, Errors) {
  TempDir dir;
  const auto empty = dir.file("empty.csv");
  write(empty, "");
  EXPECT_EQ(kind_of([&] { ingest_csv(empty); }), ErrorKind::EmptyDataset);

  const auto header_only = dir.file("header.csv");
  write(header_only, kelvins_header());
  EXPECT_EQ(kind_of([&] { ingest_csv(header_only, kelvins_options()); }), ErrorKind::EmptyDataset);

  const auto missing = dir.file("missing.csv");
  write(missing, "event_id,time_to_tca,c_sigma_t\n1,2,3\n");
  try {
    ingest_csv(missing);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingColumn);
    EXPECT_NE(std::string(e.what()).find("miss_distance"), std::string::npos);
  }

  const auto bad = dir.file("bad.csv");
  write(bad, kelvins_header() + row("1", 2.0, 100, 10) + "1,2.0,abc" + std::string(kKelvinsColumns - 3, ',') + "\n");
  try {
    ingest_csv(bad, kelvins_options());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedRow);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }

  EXPECT_EQ(kind_of([&] { ingest_csv(dir.file("nope.csv")); }), ErrorKind::IoError);
}

TEST(Ingest, DropsAndCounts) {
  TempDir dir;
  const auto path = dir.file("drops.csv");
  std::string text = kelvins_header();
  text += row("1", 3.0, 500, 20);
  text += row("1", 2.0, 400, 20);
  text += row("1", 2.0, 300, 20);                 // duplicate time, replaces the previous
  text += row("2", 3.0, 200000, 20);              // 200 km: out of bounds
  text += "3,1.0,,1" + std::string(kKelvinsColumns - 4, ',') + "\n";  // missing values
  write(path, text);
  const auto res = ingest_csv(path, kelvins_options());
  EXPECT_EQ(res.report.rows_read, 5u);
  EXPECT_EQ(res.report.dropped_out_of_bounds, 1u);
  EXPECT_EQ(res.report.dropped_missing_value, 1u);
  EXPECT_EQ(res.report.dropped_duplicate_time, 1u);
  ASSERT_EQ(res.events.size(), 1u);
  EXPECT_NEAR(res.events[0].last().miss_distance, 0.3, 1e-15);
  EXPECT_FALSE(res.report.summary().empty());
}

TEST(Ingest, IdempotentRoundTrip) {
  TempDir dir;
  const auto noise = reference_noise_model(3);
  Rng rng(4);
  const auto events = generate_synthetic(noise, 50, rng);
  const auto a = dir.file("a.csv");
  write_events_csv(a, events);
  const auto first = ingest_csv(a, canonical_ingest_options());
  EXPECT_EQ(first.events, events);
  const auto b = dir.file("b.csv");
  write_events_csv(b, first.events);
  const auto second = ingest_csv(b, canonical_ingest_options());
  EXPECT_EQ(second.events, first.events);
}

TEST(NoiseModel, SaveLoadRoundTrip) {
  TempDir dir;
  auto m = reference_noise_model(5);
  m.initial_states.resize(100);
  m.into(7).miss = {1e-3, 0.0213, 0.611};
  m.into(7).sigma = {0.99, -0.73, 0.012, 0.031};
  const auto path = dir.file("model.txt");
  save_noise_model(path, m);
  const auto back = load_noise_model(path);
  for (int k = 1; k < kHorizonSteps; ++k) EXPECT_EQ(back.into(k), m.into(k)) << k;
  EXPECT_EQ(back.initial_states, m.initial_states);
}

TEST(NoiseModel, LoadRejectsGarbage) {
  TempDir dir;
  const auto path = dir.file("bad.txt");
  write(path, "format = camdp-noise-model/1\ngnd.1 = 0 0.02\n");
  EXPECT_EQ(kind_of([&] { load_noise_model(path); }), ErrorKind::MalformedRow);
}

TEST(NoiseModel, FitRecoversSimulatorDynamics) {
  auto truth = reference_noise_model(9);
  for (auto& s : truth.steps) s.sigma = {3.0, -0.5, 0.0, 0.05};
  // Keep clear of the state bounds, where clipping produces exact-zero residuals.
  std::erase_if(truth.initial_states,
                [](const InitialState& s) { return s.miss_distance > 30.0 || s.sigma_t > 30.0 ||
                                                   s.miss_distance < 1e-2 || s.sigma_t < 1e-2; });
  Rng rng(10);
  const auto events = generate_synthetic(truth, 6000, rng);
  FitOptions opt;
  const auto fit = fit_noise_model(events, opt);
  ASSERT_TRUE(fit.valid());
  EXPECT_EQ(fit.initial_states.size(), events.size());
  for (int k : {1, 10, 20}) {
    const auto& g = fit.into(k).miss;
    EXPECT_NEAR(g.alpha, 0.02, 0.2 * 0.02) << k;
    EXPECT_NEAR(g.beta, 0.59, 0.2 * 0.59) << k;
    EXPECT_GT(fit.into(k).sigma.nu, 0.0);
    EXPECT_GT(fit.into(k).sigma.scale, 0.0);
  }
}

TEST(NoiseModel, TooFewSamples) {
  const auto noise = reference_noise_model(1);
  Rng rng(2);
  const auto events = generate_synthetic(noise, 1, rng);
  EXPECT_EQ(kind_of([&] { fit_noise_model(events); }), ErrorKind::InsufficientData);
}

TEST(Labels, Boundaries) {
  EventSeries s;
  s.event_id = "x";
  s.first_step = 20;
  CdmRecord r;
  r.miss_distance = 100.0;
  r.sigma_t = 0.2;
  s.records.push_back(r);
  EXPECT_EQ(label_true_risk(s, 1e-4), RiskLabel::Low);
  EXPECT_EQ(label_true_risk(s, 0.0), RiskLabel::High);

  s.records[0].miss_distance = 0.0;
  s.records[0].sigma_t = 0.2;  // PoC = 1e-4 / (2 * 0.1 * 0.2) = 2.5e-3
  EXPECT_EQ(label_true_risk(s, 1e-4), RiskLabel::High);
  EXPECT_NEAR(record_poc(s.last()), 2.5e-3, 1e-15);
  EXPECT_EQ(label_true_risk(s, 1e-4), label_true_risk(s, 1e-4));
}

TEST(Labels, ReferenceModelHighRiskShare) {
  const auto noise = reference_noise_model(1);
  Rng rng(derive_seed(1, "sim"));
  const auto events = generate_synthetic(noise, 5000, rng);
  int high = 0;
  for (const auto& e : events) high += label_true_risk(e, 1e-4) == RiskLabel::High;
  const double share = 100.0 * high / static_cast<double>(events.size());
  EXPECT_NEAR(share, 3.0, 2.0);
}

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "camdp/config.hpp"

using namespace camdp;
namespace fs = std::filesystem;

namespace {

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

TEST(Config, DefaultsRoundTrip) {
  const RunConfig c;
  const RunConfig back = from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(c.train.iterations, 4000);
  EXPECT_EQ(c.train.episodes_per_batch, 200);
  EXPECT_EQ(c.episode.eta, 0.25);
  EXPECT_EQ(c.episode.m_o, 300.0);
  EXPECT_EQ(c.episode.isp, 300.0);
  EXPECT_EQ(c.episode.delta_r_cap, 70.0);
  EXPECT_EQ(c.episode.hbr_fixed, 0.010);
}

TEST(Config, RejectsUnknownKeysAndTypes) {
  EXPECT_EQ(kind_of([] { ConfigBuilder().apply_json({{"episode", {{"etaa", 0.5}}}}); }),
            ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([] { ConfigBuilder().apply_json({{"bogus", 1}}); }), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([] { ConfigBuilder().apply_json({{"episode", {{"eta", "high"}}}}); }),
            ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([] { ConfigBuilder().set("train.nope", "1"); }), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([] { ConfigBuilder().set("episode.hbr_mode", "sometimes").build(); }),
            ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([] { ConfigBuilder().set("episode.eta", "1.5").build(); }),
            ErrorKind::ConfigError);
}

TEST(Config, IntegerFillsFloatSlot) {
  const auto c = ConfigBuilder().apply_json({{"episode", {{"eta", 1}}}}).set("episode.eta", "0.5").build();
  EXPECT_EQ(c.episode.eta, 0.5);
}

TEST(Config, OptionalSlots) {
  auto c = ConfigBuilder().set("episode.lambda", "20").build();
  ASSERT_TRUE(c.episode.lambda);
  EXPECT_EQ(*c.episode.lambda, 20.0);
  c = ConfigBuilder().set("episode.lambda", "20").set("episode.lambda", "null").build();
  EXPECT_FALSE(c.episode.lambda);
}

TEST(Config, Precedence) {
  const fs::path file = fs::temp_directory_path() / "camdp_config_precedence.json";
  std::ofstream(file) << R"({
    // comments are allowed
    "train": {"iterations": 30, "learning_rate": 0.001},
    "episode": {"eta": 0.4}
  })";
  ::setenv("CAMDP_TRAIN_ITERATIONS", "10", 1);
  ::setenv("CAMDP_TRAIN_EPISODES_PER_BATCH", "12", 1);
  ::setenv("CAMDP_EPISODE_HBR_MODE", "sampled", 1);
  const auto c = ConfigBuilder()
                     .apply_environment()
                     .apply_file(file.string())
                     .set("episode.eta", "0.6")
                     .build();
  ::unsetenv("CAMDP_TRAIN_ITERATIONS");
  ::unsetenv("CAMDP_TRAIN_EPISODES_PER_BATCH");
  ::unsetenv("CAMDP_EPISODE_HBR_MODE");
  EXPECT_EQ(c.train.iterations, 30);          // file beats env
  EXPECT_EQ(c.train.episodes_per_batch, 12);  // env beats defaults
  EXPECT_EQ(c.episode.hbr_mode, HbrMode::Sampled);
  EXPECT_EQ(c.train.learning_rate, 0.001);
  EXPECT_EQ(c.episode.eta, 0.6);              // --set beats file
  fs::remove(file);
}

TEST(Config, BadEnvironmentValueIsConfigError) {
  ::setenv("CAMDP_TRAIN_ITERATIONS", "many", 1);
  EXPECT_EQ(kind_of([] { ConfigBuilder().apply_environment(); }), ErrorKind::ConfigError);
  ::unsetenv("CAMDP_TRAIN_ITERATIONS");
}

TEST(Config, ResolvedSnapshotReloads) {
  RunConfig c;
  c.seed = 77;
  c.episode.phase_mode = PhaseMode::Analytic;
  c.train.initial_maneuver_prob = 0.02;
  const fs::path file = fs::temp_directory_path() / "camdp_config_resolved.json";
  write_resolved_config(c, file.string());
  const auto back = ConfigBuilder().apply_file(file.string()).build();
  EXPECT_EQ(to_json(back), to_json(c));
  fs::remove(file);
}

TEST(ErrorKinds, ExitCodes) {
  EXPECT_EQ(exit_code_for(ErrorKind::ConfigError), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::IoError), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::MissingColumn), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::MalformedParams), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::SingularCovariance), 4);
  EXPECT_EQ(exit_code_for(ErrorKind::DivergedTraining), 4);
  EXPECT_EQ(exit_code_for(ErrorKind::InvalidArgument), 1);
}

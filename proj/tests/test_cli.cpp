// Runs the camdp binary end to end on small configurations.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("camdp_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) const {
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = std::string(CAMDP_CLI_PATH) + " " + args + " > " +
                            (dir_ / "stdout.txt").string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = read(err);
    return r;
  }

  static std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const char* kSmallTrain =
    " --set train.iterations=3 --set train.episodes_per_batch=10 --set eval.events=40"
    " --set reference.pool_size=200";

}  // namespace

TEST_F(Cli, EvalCutoffNeedsNoCheckpoint) {
  const auto r = run("eval cutoff --seed 3 --threads 2 --out " + path("eval") + kSmallTrain);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("eval/summary.txt")));
  EXPECT_TRUE(fs::exists(path("eval/action_distribution.csv")));
  EXPECT_TRUE(fs::exists(path("eval/resolved_config.json")));
}

TEST_F(Cli, TrainTwiceGivesIdenticalRewards) {
  ASSERT_EQ(run("train --seed 9 --out " + path("a") + kSmallTrain).code, 0);
  ASSERT_EQ(run("train --seed 9 --out " + path("b") + kSmallTrain).code, 0);
  const auto a = read(path("a/reward.csv"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, read(path("b/reward.csv")));
  EXPECT_EQ(read(path("a/policy.ckpt")), read(path("b/policy.ckpt")));

  // The trained checkpoint evaluates.
  const auto r = run("eval " + path("a/policy.ckpt") + " --seed 9 --out " + path("e") + kSmallTrain);
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(Cli, ResolvedConfigReproducesRun) {
  ASSERT_EQ(run("train --seed 4 --out " + path("a") + kSmallTrain).code, 0);
  ASSERT_EQ(run("train --config " + path("a/resolved_config.json") + " --out " + path("b")).code, 0);
  EXPECT_EQ(read(path("a/reward.csv")), read(path("b/reward.csv")));
}

TEST_F(Cli, SimulateThenEvalOnFile) {
  ASSERT_EQ(run("simulate -n 30 --seed 2 --out " + path("sim") + kSmallTrain).code, 0);
  const auto r = run("eval cutoff --events " + path("sim/events.csv") + " --out " + path("ev"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(read(path("ev/summary.txt")).find("events = 30"), std::string::npos);
}

TEST_F(Cli, FitReference) {
  ASSERT_EQ(run("fit --reference --out " + path("fit")).code, 0);
  EXPECT_TRUE(fs::exists(path("fit/noise_model.txt")));
  const auto r = run("simulate -n 5 --noise-model " + path("fit/noise_model.txt") + " --out " +
                     path("sim"));
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(Cli, AblateRunsFifteenConfigurations) {
  const auto r = run("ablate --seed 1 --out " + path("ab") +
                     " --set ablation.iterations=1 --set ablation.eta_one_iterations=1"
                     " --set train.episodes_per_batch=4 --set eval.events=10"
                     " --set reference.pool_size=100");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream out(read(path("stdout.txt")));
  int lines = 0;
  for (std::string line; std::getline(out, line);) lines += line.rfind("var", 0) == 0;
  EXPECT_EQ(lines, 15);
  EXPECT_NE(read(path("ab/summary.txt")).find("runs = 15"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  auto r = run("train --set episode.bogus=1 --out " + path("x"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error kind=ConfigError exit=2"), std::string::npos);

  r = run("train --frobnicate");
  EXPECT_EQ(r.code, 2);

  r = run("eval " + path("missing.ckpt") + " --out " + path("x") + kSmallTrain);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("kind=IoError"), std::string::npos);

  std::ofstream(path("bad.csv")) << "event_id,time_to_tca\n1,2\n";
  r = run("fit --csv " + path("bad.csv") + " --out " + path("x"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("kind=MissingColumn"), std::string::npos);

  std::ofstream(path("bad_model.txt")) << "format = camdp-noise-model/1\n";
  r = run("simulate --noise-model " + path("bad_model.txt") + " --out " + path("x"));
  EXPECT_EQ(r.code, 3);
}

// Runs the mskteach binary as a user would and checks exit codes, files and
// standard output.

#include <gtest/gtest.h>

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>

#include <json.hpp>

#include "mskteach/scenario.hpp"

extern char** environ;

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("mskteach_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args, const std::string& env = "") {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" + MSKTEACH_BIN + "' " + args + " > '" +
                            out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  std::vector<json> json_lines(const std::string& text) {
    std::vector<json> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) lines.push_back(json::parse(line));
    return lines;
  }

  fs::path dir_;
};

TEST_F(Cli, TrainRejectsZeroSamples) {
  const Result r = run("train --samples 0 --out m.json");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--samples"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "m.json"));
}

TEST_F(Cli, TrainIsDeterministic) {
  ASSERT_EQ(run("train --samples 400 --epochs 4 --seed 3 --out a.json").code, 0);
  const Result r = run("train --samples 400 --epochs 4 --seed 3 --out b.json --json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir_ / "a.json"), slurp(dir_ / "b.json"));
  const json report = json::parse(r.out);
  EXPECT_EQ(report["held_out"], 40);
  EXPECT_GT(report["roundtrip_mean_rad"].get<double>(), 0.0);
  EXPECT_EQ(msk::load_model((dir_ / "a.json").string()).kind(), msk::ModelKind::learned);
}

TEST_F(Cli, UnknownVariantListsTheNames) {
  const Result r = run("reproduce --variant BOGUS");
  EXPECT_EQ(r.code, 2);
  for (msk::MethodVariant v : msk::kAllVariants) EXPECT_NE(r.err.find(msk::variant_name(v)), std::string::npos);
}

TEST_F(Cli, MissingConfigNamesThePath) {
  const Result r = run("compare --config no/such/config.json");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("no/such/config.json"), std::string::npos);
  EXPECT_EQ(run("compare --scenario nowhere").code, 2);
  EXPECT_EQ(run("compare --limiter -5").code, 2);
  EXPECT_EQ(run("compare --frobnicate").code, 2);
}

TEST_F(Cli, CompareTableHasAllAtTheMinimum) {
  const Result r = run("compare --out cmp --json");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::vector<json> lines = json_lines(r.out);
  ASSERT_EQ(lines.size(), 10u);
  double all = 0.0, least = 1e9;
  for (std::size_t k = 0; k < 9; ++k) {
    EXPECT_EQ(lines[k]["type"], "variant");
    EXPECT_EQ(lines[k]["variant"], msk::variant_name(msk::kAllVariants[k]));
    const double E = lines[k]["E_rad"].get<double>();
    EXPECT_NEAR(lines[k]["E_deg"].get<double>(), E * 180.0 / M_PI, 1e-12);
    least = std::min(least, E);
    if (lines[k]["variant"] == "ALL") all = E;
  }
  EXPECT_LE(all, least + 1e-12);
  const json& summary = lines.back();
  EXPECT_EQ(summary["limiter"], false);
  EXPECT_NE(std::find(summary["min"].begin(), summary["min"].end(), "ALL"), summary["min"].end());
  EXPECT_TRUE(fs::exists(dir_ / "cmp/report.json"));
  EXPECT_TRUE(fs::exists(dir_ / "cmp/report.csv"));

  const Result table = run("compare --out cmp");
  EXPECT_NE(table.out.find("E [deg]"), std::string::npos);
}

TEST_F(Cli, LimiterFlagIsRecorded) {
  const Result r = run("compare --limiter 100 --out lim --json");
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = json::parse(std::ifstream(dir_ / "lim/report.json"));
  EXPECT_EQ(report["limiter"], true);
  EXPECT_EQ(report["f_max"], 100.0);
  EXPECT_EQ(json_lines(r.out).back()["f_max"], 100.0);
}

TEST_F(Cli, ConfigDirectoryAndOverrides) {
  fs::create_directories(dir_ / "configs");
  msk::ScenarioConfig c = msk::builtin_scenario("arm-sweep-limiter");
  c.name = "from-config-dir";
  msk::save_scenario(c, (dir_ / "configs/lim.json").string());

  EXPECT_EQ(run("simulate --config lim.json").code, 2);
  const std::string env = "MSKTEACH_CONFIG_DIR='" + (dir_ / "configs").string() + "'";
  Result r = run("compare --config lim.json --out a --json", env);
  ASSERT_EQ(r.code, 0) << r.err;
  json summary = json_lines(r.out).back();
  EXPECT_EQ(summary["scenario"], "from-config-dir");
  EXPECT_EQ(summary["f_max"], c.session.limiter->f_max);

  r = run("compare --config lim.json --no-limiter --out b --json", env);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json_lines(r.out).back()["limiter"], false);
}

TEST_F(Cli, NullTeachingReproducesTheOriginal) {
  std::ofstream(dir_ / "none.json") << R"({"knots": []})";
  ASSERT_EQ(run("simulate --out run").code, 0);
  ASSERT_EQ(run("teach --wrench none.json --out run").code, 0);
  const Result r = run("reproduce --variant NONE --out run --json");
  ASSERT_EQ(r.code, 0) << r.err;
  const msk::Trajectory original = msk::load_trajectory((dir_ / "run/original.csv").string());
  const msk::Trajectory rep = msk::load_trajectory((dir_ / "run/reproduction_NONE.csv").string());
  ASSERT_EQ(original.size(), rep.size());
  for (std::size_t k = 0; k < rep.size(); ++k)
    EXPECT_LE((original.frames[k].theta_true - rep.frames[k].theta_true).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE(json::parse(r.out)["E_rad"].get<double>(), 1e-9);
}

TEST_F(Cli, TeachThenReproduceAll) {
  std::ofstream(dir_ / "push.json")
      << R"({"wrench": {"pulse": {"force": [0, 40, 0], "t0": 2, "t1": 9, "ramp": 0.5}}})";
  ASSERT_EQ(run("teach --wrench push.json --out run").code, 0);
  const msk::Trajectory taught = msk::load_trajectory((dir_ / "run/teaching.csv").string());
  double moved = 0.0;
  for (const msk::TimedFrame& f : taught.frames) moved = std::max(moved, (f.theta_true - f.theta_ref).cwiseAbs().maxCoeff());
  EXPECT_GT(moved, 0.05);

  const Result r = run("reproduce --variant ALL --taught run/teaching.csv --out run --json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LE(json::parse(r.out)["E_rad"].get<double>(), 0.02);

  std::ofstream(dir_ / "bad.json") << R"({"knots": [{"t": 1}]})";
  EXPECT_EQ(run("teach --wrench bad.json --out run").code, 2);
  EXPECT_EQ(run("reproduce --taught nothing.csv --out run").code, 2);
}

TEST_F(Cli, ServeHelpShowsProtocolVersion) {
  const Result r = run("serve --help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("protocol version 1"), std::string::npos);
}

// Starts `serve` in the background and waits for its ready line.
class Served {
 public:
  Served(const fs::path& dir, const std::string& port) : log_(dir / ("serve_" + port + ".log")) {
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, 1, log_.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&actions, 1, 2);
    const std::string bin = MSKTEACH_BIN;
    std::vector<std::string> args{bin, "serve", "--port", port};
    std::vector<char*> argv;
    for (std::string& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    posix_spawn(&pid_, bin.c_str(), &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
  }
  ~Served() {
    if (pid_ > 0) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
  }
  // The log once it has a line or the process has exited.
  std::string wait_output() {
    for (int k = 0; k < 200; ++k) {
      const std::string text = slurp(log_);
      if (text.find('\n') != std::string::npos) return text;
      int status = 0;
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        pid_ = 0;
        return slurp(log_);
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    return slurp(log_);
  }
  int stop_and_wait(int signal) {
    if (pid_ > 0) {
      kill(pid_, signal);
      int status = 0;
      waitpid(pid_, &status, 0);
      pid_ = 0;
      exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    return exit_code_;
  }
  int exit_code() {
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
      pid_ = 0;
      exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    return exit_code_;
  }

 private:
  fs::path log_;
  pid_t pid_ = 0;
  int exit_code_ = -1;
};

TEST_F(Cli, ServeReportsReadyAndStopsOnSignal) {
  Served first(dir_, "0");
  const std::string ready = first.wait_output();
  ASSERT_EQ(ready.rfind("ready ws://127.0.0.1:", 0), 0u) << ready;
  EXPECT_NE(ready.find("protocol_version 1"), std::string::npos);
  const std::string port = ready.substr(21, ready.find(' ', 21) - 21);

  Served second(dir_, port);
  const std::string refused = second.wait_output();
  EXPECT_EQ(second.exit_code(), 1);
  EXPECT_NE(refused.find("in use"), std::string::npos) << refused;

  EXPECT_EQ(first.stop_and_wait(SIGTERM), 0);
}

}  // namespace

// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include <dsg/serialization.hpp>

#include "dsg_lab/commands.hpp"

namespace fs = std::filesystem;

namespace dsg::lab {
namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("dsg_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const Json& j) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  CommonOptions options(const fs::path& config, const std::string& sub) const {
    CommonOptions o;
    o.config = config;
    o.out = dir_ / sub;
    return o;
  }

  static Json read_json(const fs::path& p) {
    std::ifstream in(p);
    return Json::parse(in);
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static Json mixture(const Json& methods) {
    Json j = Json::parse(R"({
      "name": "mix",
      "prior": {"type": "gmm", "weights": [0.5, 0.5], "means": [[-2, 0], [2, 1]], "stds": [0.5, 0.5]},
      "schedule": {"T": 200, "ddim_steps": 40},
      "operator": {"type": "dense", "rows": 1, "matrix": [1, 0], "noise_std": 0.05},
      "truth_seed": 3, "measurement_seed": 4, "trajectories": 64, "seed": 7})");
    j["methods"] = methods;
    return j;
  }

  fs::path dir_;
};

TEST_F(CliTest, VerifySpherePasses) {
  CommonOptions o;
  o.seed = 7;
  o.out = dir_ / "verify";
  o.mc = 2000;
  std::ostringstream out, err;
  EXPECT_EQ(cmd_verify(o, "sphere", out, err), kExitOk) << err.str();
  const Json j = read_json(dir_ / "verify" / "verify_sphere.json");
  EXPECT_TRUE(j.at("passed").get<bool>());
  EXPECT_TRUE(fs::exists(dir_ / "verify" / "verify_summary.json"));
}

TEST_F(CliTest, VerifyRejectsUnknownSelector) {
  CommonOptions o;
  o.out = dir_ / "verify";
  std::ostringstream out, err;
  EXPECT_EQ(cmd_verify(o, "bogus", out, err), kExitUsage);
  EXPECT_NE(err.str().find("bogus"), std::string::npos);
}

TEST_F(CliTest, UncondRunWritesSvgAndMatchesPriorMean) {
  const auto cfg = write_config("u.json", mixture(Json::parse(R"([{"method": "UNCOND"}])")));
  auto o = options(cfg, "run");
  o.mc = 2000;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_run(o, out, err), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(dir_ / "run" / "UNCOND_samples.svg"));
  const Json summary = read_json(dir_ / "run" / "summary.json");
  const Json& row = summary.at("results").at(0);
  EXPECT_EQ(row.at("trajectories").get<int>(), 2000);
  // Prior mean (0, 0.5); per-coordinate std at most sqrt(4 + 0.25).
  const auto mean = row.at("sample_mean");
  const double se = std::sqrt(4.25 / 2000.0);
  EXPECT_NEAR(mean.at(0).get<double>(), 0.0, 4.0 * se);
  EXPECT_NEAR(mean.at(1).get<double>(), 0.5, 4.0 * se);
  const std::string csv = slurp(dir_ / "run" / "UNCOND.csv");
  EXPECT_EQ(csv.rfind("traj,t,loss,grad_norm,step_norm,manifold_dev,residual\n", 0), 0u);
}

TEST_F(CliTest, GuidedMethodWithoutOperatorIsConfigError) {
  Json j = mixture(Json::parse(R"([{"method": "DSG"}])"));
  j.erase("operator");
  const auto cfg = write_config("bad.json", j);
  std::ostringstream out, err;
  EXPECT_EQ(cmd_run(options(cfg, "run"), out, err), kExitUsage);
  EXPECT_NE(err.str().find("methods[0].method"), std::string::npos) << err.str();
}

TEST_F(CliTest, InvalidFieldIsNamed) {
  const auto cfg =
      write_config("bad.json", mixture(Json::parse(R"([{"method": "DSG", "guidance_rate": 1.5}])")));
  std::ostringstream out, err;
  EXPECT_EQ(cmd_run(options(cfg, "run"), out, err), kExitUsage);
  EXPECT_NE(err.str().find("methods[0]"), std::string::npos) << err.str();
}

TEST_F(CliTest, AblateStepsTable) {
  const auto cfg = write_config(
      "a.json", mixture(Json::parse(R"([{"method": "DSG"}, {"method": "DPS", "dps_step_size": 0.3}])")));
  auto o = options(cfg, "ablate");
  o.mc = 16;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_ablate_steps(o, {40, 20, 10}, out, err), kExitOk) << err.str();
  const Json j = read_json(dir_ / "ablate" / "ablate_steps.json");
  EXPECT_EQ(j.at("rows").size(), 6u);
  EXPECT_TRUE(j.at("inflation_fewest_over_most_steps").contains("DSG"));
  EXPECT_TRUE(fs::exists(dir_ / "ablate" / "DPS_steps10.csv"));
  std::ifstream csv(dir_ / "ablate" / "ablate_steps.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  EXPECT_EQ(lines, 7u);
  EXPECT_EQ(cmd_ablate_steps(o, {0}, out, err), kExitUsage);
}

TEST_F(CliTest, SweepDeduplicatesRates) {
  const auto cfg = write_config("s.json", mixture(Json::parse(R"([{"method": "DSG"}])")));
  auto o = options(cfg, "sweep");
  o.mc = 16;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_sweep_gr(o, {1.0, 0.0, 0.5, 0.0}, out, err), kExitOk) << err.str();
  EXPECT_NE(err.str().find("duplicate"), std::string::npos);
  const Json j = read_json(dir_ / "sweep" / "sweep_gr.json");
  ASSERT_EQ(j.at("rows").size(), 3u);
  EXPECT_EQ(j.at("rows").at(0).at("g_r").get<double>(), 0.0);
  EXPECT_EQ(j.at("rows").at(2).at("g_r").get<double>(), 1.0);
  EXPECT_TRUE(j.at("trends").contains("residual_nonincreasing_with_gr"));
  EXPECT_TRUE(fs::exists(dir_ / "sweep" / "UNCOND.csv"));
  EXPECT_EQ(cmd_sweep_gr(o, {1.5}, out, err), kExitUsage);
}

TEST_F(CliTest, OutputsAreByteIdenticalAcrossRunsAndJobs) {
  const auto cfg = write_config(
      "d.json",
      mixture(Json::parse(R"([{"method": "DSG"}, {"method": "PDSG", "dps_step_size": 0.5}, {"method": "LGD", "dps_step_size": 0.3}])")));
  auto a = options(cfg, "a");
  auto b = options(cfg, "b");
  auto c = options(cfg, "c");
  c.jobs = 4;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_run(a, out, err), kExitOk) << err.str();
  ASSERT_EQ(cmd_run(b, out, err), kExitOk);
  ASSERT_EQ(cmd_run(c, out, err), kExitOk);
  for (const auto& entry : fs::directory_iterator(dir_ / "a")) {
    const auto name = entry.path().filename();
    EXPECT_EQ(slurp(entry.path()), slurp(dir_ / "b" / name)) << name;
    EXPECT_EQ(slurp(entry.path()), slurp(dir_ / "c" / name)) << name;
  }
}

#ifdef DSG_LAB_BINARY
int run_binary(const std::string& args) {
  const std::string cmd = std::string(DSG_LAB_BINARY) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(CliTest, BinaryExitCodes) {
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary(""), kExitUsage);
  EXPECT_EQ(run_binary("frobnicate"), kExitUsage);
  EXPECT_EQ(run_binary("run"), kExitUsage);
  EXPECT_EQ(run_binary("run --config /nonexistent.json"), kExitUsage);
  EXPECT_EQ(run_binary("verify --which bogus --out " + (dir_ / "v").string()), kExitUsage);
  EXPECT_EQ(run_binary("verify --mc abc"), kExitUsage);
  EXPECT_EQ(run_binary("verify --which sphere --mc 1e3 --seed 3 --out " + (dir_ / "v").string()), kExitOk);
}
#endif

}  // namespace
}  // namespace dsg::lab

// Copyright 2026 The scenenmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "scenenmpc/cli.hpp"

using namespace scenenmpc;
namespace fs = std::filesystem;

namespace {

const std::string kFixture = SCENENMPC_SOURCE_DIR "/fixtures/straight.cfg";

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args)
{
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string & path)
{
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string & name)
{
  const auto d = fs::temp_directory_path() / "scenenmpc_cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Config, FixtureIsAFullDump)
{
  const auto r = cli({"config", "dump", "--config", kFixture});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out, slurp(kFixture));
  EXPECT_EQ(r.out, dump_config(AppConfig{}));
}

TEST(Config, OverridesApplyAndUnknownKeysAreUsageErrors)
{
  auto r = cli({"config", "dump", "--set", "nmpc.S=[0.0,2.0]", "--set", "scenario.base=straight_empty"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["nmpc"]["S"][1], 2.0);
  EXPECT_EQ(j["scenario"]["base"], "straight_empty");
  EXPECT_TRUE(j["scenario"]["static_obstacles"].empty());

  r = cli({"config", "dump", "--set", "train.bogus=1"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_EQ(r.err, "error: code=usage msg=\"train.bogus: unknown key\"\n");

  r = cli({"config", "dump", "--set", "nmpc.tau_o=5"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("tau_o"), std::string::npos);

  r = cli({"config", "dump", "--set", "sim.dt=\"fast\""});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("sim.dt: expected a number"), std::string::npos);
}

TEST(Cli, UnknownFlagAndRuntimeErrorsHaveDistinctCodes)
{
  auto r = cli({"eval", "--frobnicate"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_EQ(r.err.rfind("error: code=usage msg=", 0), 0u);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);

  r = cli({"eval", "--method", "nope"});
  EXPECT_EQ(r.code, kExitUsage);

  const auto d = scratch("runtime");
  r = cli({"eval", "--method", "dl_nmpc_sd", "--set", "paths.dynamics=" + (d / "missing.ckpt").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_EQ(r.err.rfind("error: code=runtime msg=", 0), 0u);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Cli, RecordListsRequestedEpisodes)
{
  const auto d = scratch("record");
  const auto r = cli({"record", "--expert", "scripted", "--episodes", "3", "--out", (d / "ds").string(), "--config",
                      kFixture});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto idx = nlohmann::json::parse(slurp((d / "ds" / "index.json").string()));
  EXPECT_EQ(idx["episodes"].size(), 3u);
}

TEST(Cli, EvalTwiceGivesByteIdenticalReports)
{
  const auto d = scratch("eval");
  std::string reports[2];
  for (int i = 0; i < 2; ++i) {
    const std::string path = (d / ("report" + std::to_string(i) + ".json")).string();
    const auto r = cli({"eval", "--config", kFixture, "--method", "dwa", "--trials", "2", "--seed", "7", "--out", path});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    reports[i] = slurp(path);
  }
  EXPECT_FALSE(reports[0].empty());
  EXPECT_EQ(reports[0], reports[1]);
  const std::string cmd = "python3 " SCENENMPC_SOURCE_DIR "/tests/recompute_report.py " +
                          (d / "report0.json").string() + " > /dev/null";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
}

TEST(Cli, ScenarioGenWritesWorld)
{
  const auto r = cli({"scenario", "gen", "--seed", "4"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["kind"], "scenario");
  EXPECT_GE(j["route"].size(), 2u);
}

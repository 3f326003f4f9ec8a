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
#include <random>

#include "scenenmpc/evaluation.hpp"
#include "scenenmpc/fixtures.hpp"

using namespace scenenmpc;

namespace {

class BrakeController final : public Controller {
public:
  std::string name() const override { return "brake"; }
  void reset(const Scenario &, std::uint64_t) override {}
  ControlResult act(const Observation &) override { return {}; }
};

std::string tmp_path(const std::string & name)
{
  const auto dir = std::filesystem::temp_directory_path() / "scenenmpc_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

int recompute(const BenchmarkReport & rep, const std::string & name)
{
  const std::string path = tmp_path(name);
  std::ofstream(path) << rep.to_json().dump(2);
  const std::string cmd = "python3 " SCENENMPC_SOURCE_DIR "/tests/recompute_report.py " + path + " > /dev/null";
  return std::system(cmd.c_str());
}

}  // namespace

TEST(Metrics, LateralErrorHandExample)
{
  std::vector<Vec2> est, gt;
  for (int k = 0; k < 10; ++k) {
    gt.push_back({1.0 * k, 2.0});
    est.push_back({1.0 * k, 2.5});
  }
  const std::vector<double> v(10, 2.0);
  EXPECT_EQ(lateral_error(est, gt, v), 1.0);
  const std::vector<double> v2(10, 4.0);
  EXPECT_EQ(lateral_error(est, gt, v2), 2.0);
  EXPECT_EQ(lateral_error(gt, gt, v), 0.0);
  EXPECT_THROW(lateral_error(est, gt, std::vector<double>(9, 2.0)), std::invalid_argument);
  EXPECT_THROW(lateral_error({}, {}, {}), std::invalid_argument);
}

TEST(Metrics, HeadingErrorHandExamples)
{
  for (int m : {1, 3, 17}) {
    const std::vector<double> gt(m, 0.0), est(m, 5.0 * M_PI / 180.0), v(m, 1.0);
    EXPECT_EQ(heading_error(est, gt, v), 5.0);
    EXPECT_EQ(heading_error(gt, gt, v), 0.0);
  }
  // shortest arc: +179 against -179 is 2 degrees, not 358
  const std::vector<double> a{179.0 * M_PI / 180.0}, b{-179.0 * M_PI / 180.0}, v{1.0};
  EXPECT_NEAR(heading_error(a, b, v), 2.0, 1e-12);
  EXPECT_THROW(heading_error(a, {}, v), std::invalid_argument);
}

TEST(Metrics, TraceOnGroundTruthScoresZero)
{
  const Polyline gt({{0.0, 0.0}, {50.0, 0.0}});
  EpisodeTrace tr;
  tr.method = "oracle";
  tr.reached_goal = true;
  for (int k = 0; k < 20; ++k) {
    StepRecord s;
    s.step = k;
    s.t = 0.1 * k;
    s.ego = {0.5 * k, 0.0, 0.0};
    s.speed = 5.0;
    tr.steps.push_back(s);
  }
  const auto r = score_episode(tr, gt);
  // projection onto the path leaves rounding residue only
  EXPECT_NEAR(r.e_L, 0.0, 1e-12);
  EXPECT_NEAR(r.e_H, 0.0, 1e-12);
  EXPECT_NEAR(r.avg_speed, 5.0, 1e-12);
  EXPECT_TRUE(r.reached_goal);
}

TEST(Benchmark, FullBrakeAlwaysCrashes)
{
  BenchmarkConfig cfg;
  cfg.trials = 3;
  cfg.gt_demos = 2;
  const auto rep = run_benchmark({{"brake", [] { return std::make_unique<BrakeController>(); }}},
                                 {{"empty", straight_empty_fixture()}}, cfg);
  ASSERT_EQ(rep.cells.size(), 1u);
  EXPECT_EQ(rep.cells[0].crash_pct, 100.0);
  EXPECT_EQ(rep.cells[0].reached_pct, 0.0);
  for (const auto & e : rep.episodes) {
    EXPECT_TRUE(e.crashed);
    EXPECT_TRUE(e.error.empty());
  }
  EXPECT_EQ(recompute(rep, "brake_report.json"), 0);
}

TEST(Benchmark, ControllerFailureIsRecordedNotFatal)
{
  struct Throwing final : Controller {
    std::string name() const override { return "throws"; }
    void reset(const Scenario &, std::uint64_t) override {}
    ControlResult act(const Observation &) override { throw std::runtime_error("boom"); }
  };
  BenchmarkConfig cfg;
  cfg.trials = 2;
  cfg.gt_demos = 1;
  const auto rep = run_benchmark({{"throws", [] { return std::make_unique<Throwing>(); }},
                                  {"expert", [] { return std::make_unique<ScriptedExpert>(); }}},
                                 {{"empty", straight_empty_fixture()}}, cfg);
  ASSERT_EQ(rep.episodes.size(), 4u);
  EXPECT_EQ(rep.episodes[0].error, "boom");
  EXPECT_TRUE(rep.episodes[2].reached_goal);
}

TEST(Aggregation, MatchesRecomputeScriptOnSyntheticEpisodes)
{
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<EpisodeResult> eps;
  const char * scen[] = {"a", "b"};
  const char * meth[] = {"m1", "m2", "m3"};
  for (int i = 0; i < 1000; ++i) {
    EpisodeResult e;
    e.scenario = scen[rng() % 2];
    e.method = meth[rng() % 3];
    e.seed = static_cast<std::uint64_t>(i);
    e.crashed = u(rng) < 0.2;
    e.reached_goal = !e.crashed && u(rng) < 0.8;
    e.avg_speed = 10.0 * u(rng);
    e.e_L = 3.0 * u(rng);
    e.e_H = 20.0 * u(rng);
    eps.push_back(e);
  }
  const auto rep = aggregate(eps);
  EXPECT_EQ(rep.cells.size(), 6u);
  for (const auto & c : rep.cells) EXPECT_EQ(c.reached_pct + c.not_reached_pct, 100.0);
  EXPECT_EQ(recompute(rep, "synthetic_report.json"), 0);

  // a tampered cell is caught
  auto bad = rep;
  bad.cells[0].e_L_mean = std::nextafter(bad.cells[0].e_L_mean, 1e9);
  EXPECT_NE(recompute(bad, "tampered_report.json"), 0);
}

TEST(Aggregation, CombinedRmseZeroStdGuard)
{
  std::vector<EpisodeResult> eps(3);
  for (auto & e : eps) {
    e.scenario = "s";
    e.method = "m";
    e.e_L = 1.0;
    e.e_H = 2.0;
  }
  for (double r : combined_rmse(eps)) EXPECT_EQ(r, 0.0);
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_EQ(sample_std({1.0}), 0.0);
}

TEST(WaypointAccuracy, ThresholdIsInclusive)
{
  SetPointTrajectory a{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}};
  SetPointTrajectory b{{0.25, 0.0, 0.0}, {1.0, 0.3, 0.0}};
  EXPECT_EQ(waypoint_accuracy({a}, {b}, 0.25), 0.5);
  EXPECT_EQ(waypoint_accuracy({a}, {a}, 0.25), 1.0);
}

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

#include <cmath>
#include <random>

#include "scenenmpc/fixtures.hpp"
#include "scenenmpc/nmpc.hpp"

using namespace scenenmpc;

namespace {

NmpcProblem random_problem(std::mt19937_64 & rng, int n, NmpcConfig & cfg)
{
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  cfg.tau_o = n;
  cfg.dt = 0.1;
  cfg.u_min = {-2.0, -0.5};
  cfg.u_max = {8.0, 0.5};
  NmpcProblem p;
  p.vehicle.v_min = -2.0;
  p.vehicle.v_max = 8.0;
  p.z0 = {5.0 * u(rng), 5.0 * u(rng), 3.0 * u(rng)};
  p.u_prev = {3.0 + 3.0 * u(rng), 0.3 * u(rng)};
  VehicleState z = p.z0;
  for (int k = 0; k < n; ++k) {
    ControlInput c{3.0 + 4.0 * u(rng), 0.45 * u(rng)};
    z = step_nominal(z, c, p.vehicle, cfg.dt);
    p.z_d.push_back({z.x + 0.2 * u(rng), z.y + 0.2 * u(rng), wrap_angle(z.rho + 0.1 * u(rng))});
    p.comps.push_back({0.3 * u(rng), 0.3 * u(rng)});
  }
  return p;
}

}  // namespace

TEST(NmpcCost, HandExamples)
{
  NmpcConfig cfg;
  cfg.Q = {1.0, 1.0, 0.0};
  cfg.R = {1e-300, 1e-300};
  std::vector<VehicleState> z{{3.0, 4.0, 1.0}};
  SetPointTrajectory zd{{0.0, 0.0, 0.0}};
  EXPECT_DOUBLE_EQ(cost(z, zd, {{0.0, 0.0}}, cfg), 25.0);
  NmpcConfig c2;
  EXPECT_DOUBLE_EQ(cost(zd, zd, {{0.0, 0.0}}, c2), 0.0);
  NmpcConfig c3 = c2;
  c3.R = {0.2, 0.2};
  EXPECT_GT(cost(zd, zd, {{1.0, 0.1}}, c3), cost(zd, zd, {{1.0, 0.1}}, c2));
  EXPECT_THROW(cost(z, {}, {{0.0, 0.0}}, c2), std::invalid_argument);
}

TEST(NmpcObjective, AdjointMatchesFiniteDifferences)
{
  std::mt19937_64 rng(5);
  for (bool comp : {false, true}) {
    for (int trial = 0; trial < 20; ++trial) {
      NmpcConfig cfg;
      cfg.predict_with_compensation = comp;
      cfg.penalty_mu = 10.0;
      NmpcProblem p = random_problem(rng, 4, cfg);
      p.u_ref.assign(4, {2.0, 0.1});
      std::vector<ControlInput> u;
      std::uniform_real_distribution<double> d(-1.0, 1.0);
      for (int k = 0; k < 4; ++k) u.push_back({3.0 + 3.0 * d(rng), 0.4 * d(rng)});
      std::vector<std::array<double, 2>> g;
      objective(p, u, cfg, &g);
      for (int k = 0; k < 4; ++k) {
        for (int j = 0; j < 2; ++j) {
          const double h = 1e-6;
          auto up = u, um = u;
          (j == 0 ? up[k].v_cmd : up[k].delta_cmd) += h;
          (j == 0 ? um[k].v_cmd : um[k].delta_cmd) -= h;
          const double num = (objective(p, up, cfg) - objective(p, um, cfg)) / (2 * h);
          EXPECT_NEAR(g[k][j], num, 1e-5 * std::max(1.0, std::abs(num))) << trial << " " << k << " " << j;
        }
      }
    }
  }
}

TEST(NmpcSolve, HoldPoseGivesZeroControl)
{
  NmpcConfig cfg;
  cfg.u_min = {-2.0, -0.5};
  cfg.u_max = {8.0, 0.5};
  NmpcProblem p;
  p.vehicle.v_min = -2.0;
  p.vehicle.v_max = 8.0;
  p.z0 = {1.0, 2.0, 0.3};
  p.z_d.assign(4, p.z0);
  auto sol = solve(p, cfg);
  for (const auto & u : sol.u_sequence) EXPECT_LT(std::hypot(u.v_cmd, u.delta_cmd), 1e-3);
}

TEST(NmpcSolve, StraightLineTracksSpeed)
{
  NmpcConfig cfg;
  NmpcProblem p;
  p.z0 = {0.0, 0.0, 0.0};
  const double v = 4.0;
  for (int k = 1; k <= 4; ++k) p.z_d.push_back({v * cfg.dt * k, 0.0, 0.0});
  p.u_ref.assign(4, {v, 0.0});
  p.u_prev = {v, 0.0};
  auto sol = solve(p, cfg);
  EXPECT_NEAR(sol.u_sequence[0].v_cmd, v, 0.01 * v);
  EXPECT_NEAR(sol.u_sequence[0].delta_cmd, 0.0, 1e-6);
  // literal control penalty shrinks the speed toward zero
  p.u_ref.clear();
  auto lit = solve(p, cfg);
  EXPECT_LT(lit.u_sequence[0].v_cmd, sol.u_sequence[0].v_cmd - 0.05);
}

TEST(NmpcSolve, DominatesGridOracleOneStep)
{
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    NmpcConfig cfg;
    cfg.predict_with_compensation = trial % 2 == 1;
    NmpcProblem p = random_problem(rng, 1, cfg);
    auto sol = solve(p, cfg);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 100; ++i) {
      for (int j = 0; j <= 100; ++j) {
        ControlInput u{cfg.u_min.v_cmd + (cfg.u_max.v_cmd - cfg.u_min.v_cmd) * i / 100.0,
                       cfg.u_min.delta_cmd + (cfg.u_max.delta_cmd - cfg.u_min.delta_cmd) * j / 100.0};
        best = std::min(best, objective(p, {u}, cfg));
      }
    }
    EXPECT_LE(sol.cost, best + 1e-6) << trial;
    EXPECT_GE(sol.u_sequence[0].v_cmd, cfg.u_min.v_cmd);
    EXPECT_LE(sol.u_sequence[0].v_cmd, cfg.u_max.v_cmd);
  }
}

TEST(NmpcSolve, NeverWorseThanWarmStart)
{
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    NmpcConfig cfg;
    NmpcProblem p = random_problem(rng, 4, cfg);
    std::vector<ControlInput> warm(4, {20.0, -3.0});  // outside the box, gets sanitized
    auto sol = solve(p, cfg, warm);
    std::vector<ControlInput> clamped(4, {cfg.u_max.v_cmd, cfg.u_min.delta_cmd});
    EXPECT_LE(sol.cost, objective(p, clamped, cfg) + 1e-9);
  }
}

TEST(NmpcController, TracksEmptyRoad)
{
  auto sc = make_scenario(straight_empty_fixture());
  NetConfig nc;
  nc.vehicle = sc->config.vehicle;
  NetworkParams zero = make_network(nc);  // all-zero weights: zero compensation
  NmpcController ctl(zero, NmpcConfig::for_vehicle(sc->config.vehicle));
  SimSettings sim;
  auto tr = run_episode(sc, ctl, sim, 4);
  EXPECT_TRUE(tr.reached_goal);
  double worst = 0.0;
  for (const auto & s : tr.steps) worst = std::max(worst, std::abs(s.ego.y - 1.75));
  EXPECT_LT(worst, 0.1);
  int warm = 0;
  for (const auto & s : tr.steps) warm += s.flag == "warmup";
  EXPECT_EQ(warm, 4);
}

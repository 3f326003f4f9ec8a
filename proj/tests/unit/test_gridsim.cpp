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

#include "scenenmpc/geometry.hpp"
#include "scenenmpc/gridsim.hpp"

using namespace scenenmpc;

namespace {

ScenarioConfig empty_straight()
{
  ScenarioConfig c = scenario_preset(ScenarioKind::highway);
  c.n_traffic = 0;
  c.v_min = 0.0;
  c.v_max = 10.0;
  c.road_length = 60.0;
  c.initial_speed = 2.0;
  return c;
}

}  // namespace

TEST(Geometry, RaySegment)
{
  const auto d = ray_segment_distance({0, 0}, {1, 0}, {{5, -1}, {5, 1}});
  ASSERT_TRUE(d);
  EXPECT_DOUBLE_EQ(*d, 5.0);
  EXPECT_FALSE(ray_segment_distance({0, 0}, {-1, 0}, {{5, -1}, {5, 1}}));
  EXPECT_FALSE(ray_segment_distance({0, 0}, {1, 0}, {{1, 0}, {3, 0}}));  // parallel overlap
}

TEST(Geometry, PolygonTests)
{
  const Polygon sq{{0, 0}, {2, 0}, {2, 2}, {0, 2}};
  EXPECT_TRUE(point_in_polygon({1, 1}, sq));
  EXPECT_FALSE(point_in_polygon({3, 1}, sq));
  EXPECT_TRUE(polygons_intersect(sq, Polygon{{0.5, 0.5}, {1.0, 0.5}, {1.0, 1.0}}));  // containment
  EXPECT_TRUE(polygons_intersect(sq, Polygon{{1, 1}, {5, 1}}));  // segment crossing
  EXPECT_FALSE(polygons_intersect(sq, Polygon{{3, 3}, {4, 3}, {4, 4}}));
  const auto fp = footprint({0, 0, M_PI / 2}, 4.0, 2.0);
  ASSERT_EQ(fp.size(), 4u);
  for (const auto & v : fp) {
    EXPECT_NEAR(std::abs(v.x), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(v.y), 2.0, 1e-12);
  }
}

TEST(Geometry, PolylineProjectionSign)
{
  Polyline l({{0, 0}, {10, 0}});
  auto p = l.project({3, 2});
  EXPECT_DOUBLE_EQ(p.s, 3.0);
  EXPECT_DOUBLE_EQ(p.lateral, 2.0);  // +y is the right-hand side
  p = l.project({3, -1});
  EXPECT_DOUBLE_EQ(p.lateral, -1.0);
  EXPECT_DOUBLE_EQ(l.point_at(12.0).x, 12.0);
  EXPECT_DOUBLE_EQ(l.heading_at(5.0), 0.0);
}

TEST(GridSim, PresetsMatchScenarioTable)
{
  const auto s = scenario_preset(ScenarioKind::seamless);
  EXPECT_EQ(s.n_traffic, 10);
  EXPECT_DOUBLE_EQ(s.v_max, 13.88);
  EXPECT_DOUBLE_EQ(s.v_min, 4.16);
  EXPECT_DOUBLE_EQ(s.accel_max, 2.0);
  EXPECT_DOUBLE_EQ(s.straight_road_fraction, 0.60);
  EXPECT_DOUBLE_EQ(s.mean_curve_radius_deg, 55.0);
  const auto c = scenario_preset(ScenarioKind::inner_city);
  EXPECT_EQ(c.n_traffic, 20);
  EXPECT_DOUBLE_EQ(c.v_max, 8.33);
  EXPECT_DOUBLE_EQ(c.straight_road_fraction, 0.45);
  EXPECT_DOUBLE_EQ(c.mean_curve_radius_deg, 81.0);
  const auto h = scenario_preset(ScenarioKind::highway);
  EXPECT_EQ(h.n_traffic, 7);
  EXPECT_DOUBLE_EQ(h.v_max, 27.77);
  EXPECT_DOUBLE_EQ(h.accel_max, 4.0);
  EXPECT_DOUBLE_EQ(h.straight_road_fraction, 1.0);
  EXPECT_EQ(scenario_kind_from_string("inner_city"), ScenarioKind::inner_city);
  EXPECT_THROW(scenario_kind_from_string("moon"), std::invalid_argument);
}

TEST(GridSim, BuildIsDeterministic)
{
  auto cfg = scenario_preset(ScenarioKind::inner_city);
  cfg.rng_seed = 42;
  cfg.road_length = 200.0;
  const auto a = build_scenario(cfg);
  const auto b = build_scenario(cfg);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(static_cast<int>(a.participants.size()), cfg.n_traffic);
  cfg.rng_seed = 43;
  EXPECT_NE(build_scenario(cfg).to_json().dump(), a.to_json().dump());
}

TEST(GridSim, StepIsPureAndReproducible)
{
  auto cfg = scenario_preset(ScenarioKind::seamless);
  cfg.rng_seed = 9;
  cfg.road_length = 200.0;
  const auto w0 = build_scenario(cfg);
  WorldState a = w0, b = w0;
  for (int k = 0; k < 200; ++k) {
    a = step_world(a, {6.0, 0.0}, 0.05);
    b = step_world(b, {6.0, 0.0}, 0.05);
  }
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  // the input world is untouched
  EXPECT_EQ(w0.to_json().dump(), build_scenario(cfg).to_json().dump());
}

TEST(GridSim, StallCrashAfterTwoSeconds)
{
  auto cfg = empty_straight();
  auto w = build_scenario(cfg);
  w = step_world(w, {0.0, 0.0}, 0.05);  // slows from 2 to 1.85 m/s, still above 0.5
  int steps = 1;
  while (!w.crashed && steps < 400) {
    w = step_world(w, {0.0, 0.0}, 0.05);
    ++steps;
  }
  ASSERT_TRUE(w.crashed);
  EXPECT_EQ(w.crash_cause, CrashCause::stall);
  ASSERT_TRUE(w.low_speed_since);
  EXPECT_NEAR(w.crash_time, *w.low_speed_since + 2.0, 1e-9);
  EXPECT_NEAR(w.time - *w.low_speed_since, 2.0, 1e-9);
}

TEST(GridSim, CollisionWithStaticObstacleIsSticky)
{
  auto cfg = empty_straight();
  const double y = -cfg.lane_width / 2 + cfg.lane_width;  // rightmost lane centre
  cfg.static_obstacles.push_back({{8, y - 1}, {9, y - 1}, {9, y + 1}, {8, y + 1}});
  auto w = build_scenario(cfg);
  for (int k = 0; k < 100 && !w.crashed; ++k) w = step_world(w, {4.0, 0.0}, 0.05);
  ASSERT_TRUE(w.crashed);
  EXPECT_EQ(w.crash_cause, CrashCause::collision);
  const double t = w.crash_time;
  w = step_world(w, {4.0, 0.0}, 0.05);
  EXPECT_TRUE(w.crashed);
  EXPECT_EQ(w.crash_time, t);
}

TEST(GridSim, CurbContactCrashes)
{
  auto cfg = empty_straight();
  auto w = build_scenario(cfg);
  for (int k = 0; k < 200 && !w.crashed; ++k) w = step_world(w, {4.0, 0.3}, 0.05);
  ASSERT_TRUE(w.crashed);
  EXPECT_EQ(w.crash_cause, CrashCause::collision);
}

TEST(GridSim, EgoSpeedRateLimited)
{
  auto cfg = empty_straight();
  auto w = build_scenario(cfg);
  w = step_world(w, {10.0, 0.0}, 0.1);
  EXPECT_NEAR(w.ego_speed, 2.0 + cfg.vehicle.accel_max * 0.1, 1e-12);
}

TEST(GridSim, RaysSeeWall)
{
  auto cfg = empty_straight();
  cfg.curbs = false;
  const double y = cfg.lane_width / 2;
  cfg.static_obstacles.push_back({{10, y - 5}, {10, y + 5}});
  const auto w = build_scenario(cfg);
  const auto rays = cast_rays(w, 120.0, 65, 20.0);
  ASSERT_EQ(rays.size(), 65u);
  EXPECT_NEAR(rays[32].angle, 0.0, 1e-12);
  EXPECT_NEAR(rays[32].distance, 10.0 - w.ego.x, 1e-9);
  EXPECT_DOUBLE_EQ(rays.front().distance, 20.0);
  EXPECT_NEAR(rays.front().angle, -M_PI / 3, 1e-12);
}

TEST(GridSim, GoalReachedAtRouteEnd)
{
  auto cfg = empty_straight();
  auto w = build_scenario(cfg);
  EXPECT_FALSE(reached_goal(w));
  int k = 0;
  while (!reached_goal(w) && k++ < 2000) w = step_world(w, {8.0, 0.0}, 0.05);
  EXPECT_TRUE(reached_goal(w));
  EXPECT_FALSE(w.crashed);
  EXPECT_GE(route_progress(w), w.scenario->route.length() - cfg.goal_tolerance);
}

TEST(GridSim, CurvedRoadsStayConnected)
{
  auto cfg = scenario_preset(ScenarioKind::inner_city);
  cfg.n_traffic = 0;
  cfg.road_length = 300.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    cfg.rng_seed = seed;
    const auto sc = make_scenario(cfg);
    EXPECT_NEAR(sc->road.centerline.length(), 300.0, 1.0);
    EXPECT_EQ(sc->road.segment_kinds.size(), 15u);
    for (double sw : sc->road.segment_sweeps) EXPECT_LE(std::abs(sw), 150.0 * M_PI / 180.0 + 1e-12);
  }
}

TEST(GridSim, RouteOffRoadRejected)
{
  auto cfg = empty_straight();
  cfg.route = {{0, 0}, {30, 10}};
  EXPECT_THROW(make_scenario(cfg), std::invalid_argument);
}

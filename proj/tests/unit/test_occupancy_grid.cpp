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
#include <set>

#include "scenenmpc/occupancy_grid.hpp"

using namespace scenenmpc;

namespace {

GridConfig small_cfg()
{
  GridConfig c;
  c.size_m = 4.0;
  c.resolution = 0.1;
  c.recenter_threshold = 1.0;
  return c;
}

}  // namespace

TEST(OccupancyGrid, MakeGridIsCentredOnLattice)
{
  const auto g = make_grid(small_cfg(), {1.03, -2.07, 0.0}, 0.5);
  EXPECT_EQ(g.rows, 40);
  EXPECT_EQ(g.anchor_col, 10 - 20);
  EXPECT_EQ(g.anchor_row, -21 - 20);
  EXPECT_DOUBLE_EQ(g.timestamp, 0.5);
  for (float c : g.cells) EXPECT_EQ(c, 0.0f);
  int i, j;
  ASSERT_TRUE(g.cell_of({1.03, -2.07}, i, j));
  EXPECT_EQ(i, 20);  // floor(-20.7) - (-41)
  EXPECT_EQ(j, 20);
}

TEST(OccupancyGrid, SingleRayFreeThenOccupied)
{
  const auto cfg = small_cfg();
  const VehicleState ego{0.05, 0.05, 0.0};
  const auto g0 = make_grid(cfg, ego);
  const auto g = update_grid(g0, {{0.0, 1.0}}, ego, cfg, 5.0);
  int i, j;
  ASSERT_TRUE(g.cell_of({0.05, 0.05}, i, j));
  for (int k = 0; k < 10; ++k) EXPECT_FLOAT_EQ(g.at(i, j + k), static_cast<float>(-cfg.eta)) << k;
  EXPECT_FLOAT_EQ(g.at(i, j + 10), static_cast<float>(cfg.eta));
  EXPECT_FLOAT_EQ(g.at(i, j + 11), 0.0f);
  EXPECT_FLOAT_EQ(g.at(i + 1, j + 5), 0.0f);
}

TEST(OccupancyGrid, MaxRangeRayMarksOnlyFree)
{
  const auto cfg = small_cfg();
  const VehicleState ego{0.05, 0.05, 0.0};
  const auto g = update_grid(make_grid(cfg, ego), {{0.0, 1.0}}, ego, cfg, 1.0);
  for (float c : g.cells) EXPECT_LE(c, 0.0f);
}

TEST(OccupancyGrid, TraversalMatchesDenseSamplingOracle)
{
  const auto cfg = small_cfg();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const VehicleState ego{U(rng) - 0.5, U(rng) - 0.5, 2 * M_PI * U(rng)};
    const double dist = 0.3 + 1.4 * U(rng);
    const auto g = update_grid(make_grid(cfg, ego), {{0.0, dist}}, ego, cfg, 5.0);
    // oracle: clip the segment against every cell box (Liang-Barsky)
    const Vec2 dir{std::cos(ego.rho), std::sin(ego.rho)};
    std::set<std::pair<int, int>> freec, grazed;
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) {
        const Vec2 lo{(g.anchor_col + j) * g.resolution, (g.anchor_row + i) * g.resolution};
        double t0 = 0.0, t1 = dist;
        const double o[2] = {ego.x, ego.y}, d[2] = {dir.x, dir.y}, a[2] = {lo.x, lo.y};
        for (int ax = 0; ax < 2 && t0 <= t1; ++ax) {
          const double b = a[ax] + g.resolution;
          if (std::abs(d[ax]) < 1e-15) {
            if (o[ax] < a[ax] || o[ax] >= b) t1 = -1.0;
            continue;
          }
          double ta = (a[ax] - o[ax]) / d[ax], tb = (b - o[ax]) / d[ax];
          if (ta > tb) std::swap(ta, tb);
          t0 = std::max(t0, ta);
          t1 = std::min(t1, tb);
        }
        if (t1 - t0 > 1e-9) freec.insert({i, j});
        else if (t1 >= t0 - 1e-9) grazed.insert({i, j});
      }
    }
    int ei, ej;
    ASSERT_TRUE(g.cell_of({ego.x + dist * std::cos(ego.rho), ego.y + dist * std::sin(ego.rho)}, ei, ej));
    freec.erase({ei, ej});
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) {
        const float c = g.at(i, j);
        if (i == ei && j == ej) {
          EXPECT_GT(c, 0.0f);
        } else if (grazed.count({i, j})) {
          continue;
        } else if (freec.count({i, j})) {
          EXPECT_LT(c, 0.0f) << trial << " " << i << " " << j;
        } else {
          EXPECT_EQ(c, 0.0f) << trial << " " << i << " " << j;
        }
      }
    }
  }
}

TEST(OccupancyGrid, OccupiedEvidenceWinsAndDecay)
{
  const auto cfg = small_cfg();
  const VehicleState ego{0.05, 0.05, 0.0};
  auto g = make_grid(cfg, ego);
  int i, j;
  g.cell_of({0.05, 0.05}, i, j);
  g.at(i + 5, j + 5) = 0.5f;
  // second ray passes through the endpoint cell of the first
  g = update_grid(g, {{0.0, 1.0}, {0.0, 1.5}}, ego, cfg, 5.0);
  EXPECT_FLOAT_EQ(g.at(i, j + 10), static_cast<float>(cfg.eta));
  EXPECT_FLOAT_EQ(g.at(i + 5, j + 5), static_cast<float>(0.5 * cfg.decay_factor));
}

TEST(OccupancyGrid, UpdateConvergesAndStaysBounded)
{
  const auto cfg = small_cfg();
  const VehicleState ego{0.05, 0.05, 0.0};
  auto g = make_grid(cfg, ego);
  for (int k = 0; k < 200; ++k) g = update_grid(g, {{0.0, 1.0}}, ego, cfg, 5.0);
  int i, j;
  g.cell_of({0.05, 0.05}, i, j);
  EXPECT_NEAR(g.at(i, j + 10), 1.0f, 1e-6);
  EXPECT_NEAR(g.at(i, j + 3), -1.0f, 1e-6);
  for (float c : g.cells) EXPECT_TRUE(c >= -1.0f && c <= 1.0f);
}

TEST(OccupancyGrid, ShiftPreservesWorldContent)
{
  const auto cfg = small_cfg();
  auto g = make_grid(cfg, {0, 0, 0});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> U(-1.0f, 1.0f);
  for (auto & c : g.cells) c = U(rng);
  const auto s = shift_grid(g, 3, -7);
  for (int i = 0; i < s.rows; ++i) {
    for (int j = 0; j < s.cols; ++j) {
      const Vec2 p = s.cell_center(i, j);
      int a, b;
      if (g.cell_of(p, a, b)) {
        EXPECT_EQ(s.at(i, j), g.at(a, b));
      } else {
        EXPECT_EQ(s.at(i, j), 0.0f);
      }
    }
  }
}

TEST(OccupancyGrid, RecenterThreshold)
{
  const auto cfg = small_cfg();
  const auto g = make_grid(cfg, {0, 0, 0});
  const auto same = recenter_if_needed(g, {0.9, 0.0, 0.0}, cfg);
  EXPECT_EQ(same.anchor_col, g.anchor_col);
  const auto moved = recenter_if_needed(g, {1.5, 0.2, 0.0}, cfg);
  EXPECT_EQ(moved.anchor_col, g.anchor_col + 15);
  EXPECT_EQ(moved.anchor_row, g.anchor_row + 2);
}

TEST(OccupancyGrid, SynchronizeStatesAndGrids)
{
  std::vector<Timestamped<VehicleState>> st{{0.0, {0, 0, M_PI - 0.1}}, {1.0, {2, 4, -M_PI + 0.1}}};
  SyncResult info;
  const auto m = synchronize(st, 0.5, &info);
  EXPECT_DOUBLE_EQ(m.x, 1.0);
  EXPECT_DOUBLE_EQ(m.y, 2.0);
  EXPECT_NEAR(std::abs(m.rho), M_PI, 1e-12);  // shortest arc goes through pi
  EXPECT_FALSE(info.extrapolated);
  synchronize(st, 2.0, &info);
  EXPECT_TRUE(info.extrapolated);

  auto a = std::make_shared<const OccupancyGrid>();
  auto b = std::make_shared<const OccupancyGrid>();
  std::vector<Timestamped<std::shared_ptr<const OccupancyGrid>>> gs{{0.0, a}, {1.0, b}};
  EXPECT_EQ(synchronize(gs, 0.5), a);  // tie goes to the earlier sample
  EXPECT_EQ(synchronize(gs, 0.51), b);
  EXPECT_EQ(synchronize(gs, -1.0, &info), a);
  EXPECT_TRUE(info.extrapolated);
}

TEST(OccupancyGrid, ObservationPooling)
{
  OccupancyGrid g;
  g.rows = g.cols = 4;
  g.cells.resize(16);
  for (int k = 0; k < 16; ++k) g.cells[k] = static_cast<float>(k) / 16.0f;
  const auto o = to_observation(g, 2);
  ASSERT_EQ(o.rows, 2);
  EXPECT_DOUBLE_EQ(o.data[0], (0 + 1 + 4 + 5) / 64.0);
  EXPECT_THROW(to_observation(g, 3), std::invalid_argument);
  const auto r = resample_observation(g, 2);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(r.data[k], o.data[k], 1e-12);
  EXPECT_EQ(checksum(o), checksum(to_observation(g, 2)));
}

TEST(OccupancyGrid, SerializeRoundTrip)
{
  auto g = make_grid(small_cfg(), {3.3, -1.2, 0}, 7.25);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> U(-1.0f, 1.0f);
  for (auto & c : g.cells) c = U(rng);
  const auto bytes = serialize_grid(g);
  EXPECT_EQ(bytes.size(), 48u + g.cells.size());
  const auto back = deserialize_grid(bytes);
  const auto q = quantize_grid(g);
  EXPECT_EQ(back.anchor_col, g.anchor_col);
  EXPECT_EQ(back.anchor_row, g.anchor_row);
  EXPECT_EQ(back.timestamp, 7.25);
  EXPECT_EQ(back.cells, q.cells);
  EXPECT_EQ(serialize_grid(back), bytes);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_grid(bad), std::runtime_error);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(deserialize_grid(bad), std::runtime_error);
}

TEST(OccupancyGrid, PgmHeader)
{
  auto g = make_grid(small_cfg(), {0, 0, 0});
  const auto pgm = to_pgm(g);
  EXPECT_EQ(pgm.rfind("P5\n40 40\n255\n", 0), 0u);
  EXPECT_EQ(pgm.size(), std::string("P5\n40 40\n255\n").size() + 1600);
}

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

#include "scenenmpc/fixtures.hpp"

namespace scenenmpc {

ScenarioConfig straight_empty_fixture(std::uint64_t seed)
{
  ScenarioConfig c;
  c.kind = ScenarioKind::highway;
  c.n_traffic = 0;
  c.v_max = 8.0;
  c.v_min = 2.0;
  c.accel_max = 3.0;
  c.straight_road_fraction = 1.0;
  c.mean_curve_radius_deg = 0.0;
  c.rng_seed = seed;
  c.road_length = 70.0;
  c.segment_length = 10.0;
  c.n_lanes = 2;
  c.lane_width = 3.5;
  c.fov_deg = 120.0;
  c.n_rays = 64;
  c.max_range = 20.0;
  c.initial_speed = 4.0;
  c.episode_time_limit = 40.0;
  c.vehicle.state_noise_sigma = 0.02;
  c.vehicle.v_max = 8.0;
  c.route = {{0.0, 1.75}, {70.0, 1.75}};
  return c;
}

ScenarioConfig straight_obstacle_fixture(std::uint64_t seed)
{
  ScenarioConfig c = straight_empty_fixture(seed);
  c.route = {{0.0, 1.75}, {12.0, 1.75}, {22.0, -1.75}, {40.0, -1.75}, {50.0, 1.75}, {70.0, 1.75}};
  c.static_obstacles = {{{30.0, 0.8}, {32.0, 0.8}, {32.0, 2.7}, {30.0, 2.7}}};
  return c;
}

}  // namespace scenenmpc

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

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenenmpc/geometry.hpp"
#include "scenenmpc/vehicle_model.hpp"

namespace scenenmpc {

enum class ScenarioKind { seamless, inner_city, highway };
std::string to_string(ScenarioKind k);
ScenarioKind scenario_kind_from_string(const std::string & s);

enum class Behavior { follow, overtake, lane_change, brake };
std::string to_string(Behavior b);

struct TrafficConfig {
  double length = 4.0;
  double width = 1.8;
  double follow_gap = 12.0;      // leader distance that triggers following/overtaking
  double min_gap = 6.0;          // bumper gap below which speed matches the leader
  double lateral_speed = 1.0;    // m/s during lane changes
  double lane_change_rate = 0.02;  // events per second
  double brake_rate = 0.02;        // events per second
  double brake_duration = 2.0;
  double spawn_clearance = 20.0;   // no participant placed closer to the ego start
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::highway;
  double fov_deg = 120.0;
  int n_traffic = 7;
  double v_max = 27.77;
  double v_min = 8.33;
  double accel_max = 4.0;
  double straight_road_fraction = 1.0;
  double mean_curve_radius_deg = 0.0;
  std::vector<Vec2> route;  // empty: centre of the rightmost lane
  std::uint64_t rng_seed = 1;

  // road layout
  double road_length = 120.0;
  double segment_length = 20.0;
  int n_lanes = 2;
  double lane_width = 3.5;
  bool curbs = true;

  // sensing
  int n_rays = 64;
  double max_range = 20.0;

  // ego start
  double initial_speed = 5.0;
  double initial_lateral_offset = 0.0;
  double initial_heading_offset = 0.0;

  // crash and goal rules
  double stall_fraction = 0.05;
  double stall_duration = 2.0;
  double goal_tolerance = 2.0;
  double episode_time_limit = 60.0;

  std::vector<Polygon> static_obstacles;
  TrafficConfig traffic;
  VehicleParams vehicle;

  void validate() const;
};

// Scenario presets.
ScenarioConfig scenario_preset(ScenarioKind kind);

enum class SegmentKind { straight, arc };

struct Road {
  Polyline centerline;
  std::vector<SegmentKind> segment_kinds;
  std::vector<double> segment_sweeps;  // radians, 0 for straights
  double half_width = 3.5;
  std::vector<double> lane_offsets;    // signed lateral offsets of lane centres
  std::vector<Polyline> curbs;         // left and right boundaries (empty if disabled)
};

// Immutable scenario geometry shared by every WorldState of an episode.
struct Scenario {
  ScenarioConfig config;
  Road road;
  Polyline route;
};

struct TrafficParticipant {
  int id = 0;
  VehicleState state;
  double speed = 0.0;
  Behavior behavior = Behavior::follow;
  double length = 4.0;
  double width = 1.8;
  // lane coordinates
  double s = 0.0;
  double d = 0.0;
  double target_d = 0.0;
  double cruise_speed = 0.0;
  double behavior_until = 0.0;
};

enum class CrashCause { none, collision, stall };
std::string to_string(CrashCause c);

struct WorldState {
  std::shared_ptr<const Scenario> scenario;
  std::uint64_t step = 0;
  double time = 0.0;
  VehicleState ego;
  double ego_speed = 0.0;
  double ego_delta = 0.0;
  std::vector<TrafficParticipant> participants;
  std::vector<Polygon> static_obstacles;
  bool crashed = false;
  double crash_time = 0.0;
  CrashCause crash_cause = CrashCause::none;
  std::optional<double> low_speed_since;

  nlohmann::json to_json() const;
};

struct RayHit {
  double angle = 0.0;  // relative to ego heading
  double distance = 0.0;
};

std::shared_ptr<const Scenario> make_scenario(const ScenarioConfig & config);
WorldState build_scenario(const ScenarioConfig & config);
WorldState build_scenario(std::shared_ptr<const Scenario> scenario);

WorldState step_world(const WorldState & world, const ControlInput & ego_u, double dt);

std::vector<RayHit> cast_rays(const WorldState & world, double fov_deg, int n_rays, double max_range);
// Rays from an arbitrary pose, used by the sensor and by tests.
std::vector<RayHit> cast_rays_from(
  const WorldState & world, const VehicleState & pose, double fov_deg, int n_rays, double max_range);

// All obstacle edges visible to the sensor (static polygons, participants, curbs).
std::vector<Segment> obstacle_segments(const WorldState & world);

// Route progress and goal test.
double route_progress(const WorldState & world);
bool reached_goal(const WorldState & world);

}  // namespace scenenmpc

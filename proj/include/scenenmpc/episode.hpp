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

#include "scenenmpc/augmented_memory.hpp"
#include "scenenmpc/gridsim.hpp"
#include "scenenmpc/occupancy_grid.hpp"

namespace scenenmpc {

struct SimSettings {
  double dt = 0.071;
  GridConfig grid;
  double time_limit = 0.0;  // 0 uses the scenario's episode_time_limit
  size_t memory_capacity = 4096;
};

// Route samples at arc lengths s0 + k * max(speed, min_speed) * dt, k = first..first+n-1,
// where s0 is the projection of z. Headings follow the route.
std::vector<VehicleState> reference_trajectory(
  const Polyline & route, const VehicleState & z, double speed, double dt, int n, int first = 1,
  double min_speed = 0.5);

struct PursuitConfig {
  double v_ref = 4.0;
  double lookahead = 4.0;
  double steer_gain = 1.0;
};

// Pure pursuit toward the route point one lookahead past the projection.
ControlInput pure_pursuit(const Polyline & route, const VehicleState & ego, const PursuitConfig & cfg,
                          const VehicleParams & vehicle);

// What a controller sees at one step. `world` is ground truth; learning
// controllers read only memory/grids/rays, the scripted expert and DWA read
// the route from the scenario.
struct Observation {
  const WorldState & world;
  const std::vector<RayHit> & rays;
  GridPtr grid;
  const AugmentedMemory & memory;
  VehicleState observed;
  double speed = 0.0;
  double t = 0.0;
  ControlInput last_u;
  double dt = 0.071;
};

struct ControlResult {
  ControlInput u;
  bool flagged = false;
  std::string flag;
  nlohmann::json log;
};

class Controller {
public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual void reset(const Scenario & scenario, std::uint64_t seed) = 0;
  virtual ControlResult act(const Observation & obs) = 0;
};

class TrackerController final : public Controller {
public:
  explicit TrackerController(PursuitConfig cfg = {}) : cfg_(cfg) {}
  std::string name() const override { return "tracker"; }
  void reset(const Scenario & scenario, std::uint64_t seed) override;
  ControlResult act(const Observation & obs) override;

private:
  PursuitConfig cfg_;
  const Scenario * sc_ = nullptr;
};

struct ExpertConfig {
  double v_ref = 4.0;
  double speed_jitter = 0.1;      // relative, uniform per episode
  double lookahead = 4.0;
  double lookahead_jitter = 0.15; // relative, uniform per episode
  double steer_gain = 0.6;
  double slow_distance = 8.0;     // front clearance below which the expert slows
  double min_speed_factor = 0.4;
  double front_cone_deg = 15.0;
};

// Demonstrator: conservative pure pursuit with clearance-based slowdown and
// per-seed variation of speed and lookahead.
class ScriptedExpert final : public Controller {
public:
  explicit ScriptedExpert(ExpertConfig cfg = {}) : cfg_(cfg) {}
  std::string name() const override { return "expert"; }
  void reset(const Scenario & scenario, std::uint64_t seed) override;
  ControlResult act(const Observation & obs) override;

private:
  ExpertConfig cfg_;
  const Scenario * sc_ = nullptr;
  double v_pref_ = 0.0;
  double lookahead_ = 0.0;
};

// Replays a fixed control sequence (teleop replay, constant-input tests).
class ReplayController final : public Controller {
public:
  explicit ReplayController(std::vector<ControlInput> seq, std::string name = "replay")
  : seq_(std::move(seq)), name_(std::move(name))
  {
  }
  std::string name() const override { return name_; }
  void reset(const Scenario &, std::uint64_t) override { k_ = 0; }
  ControlResult act(const Observation & obs) override;

private:
  std::vector<ControlInput> seq_;
  std::string name_;
  size_t k_ = 0;
};

struct StepRecord {
  std::uint64_t step = 0;
  double t = 0.0;
  VehicleState ego;
  double speed = 0.0;
  double delta = 0.0;  // applied steering at this state
  ControlInput u;      // requested control
  bool flagged = false;
  std::string flag;
  nlohmann::json log;
};

struct EpisodeTrace {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  bool reached_goal = false;
  bool crashed = false;
  CrashCause crash_cause = CrashCause::none;
  double crash_time = 0.0;
  double end_time = 0.0;
  bool timed_out = false;
  std::string error;  // non-empty when the controller threw

  nlohmann::json header_json() const;
  // One JSON object per line: header, then steps.
  std::string to_jsonl() const;
};

// Step-wise simulation with the same sensing pipeline as run_episode:
// rays, re-centred and updated grid, quantized snapshot, memory record.
class SimSession {
public:
  SimSession(std::shared_ptr<const Scenario> scenario, const SimSettings & sim, std::uint64_t seed,
             AugmentedMemory * record = nullptr);
  // Senses the current world and returns this step's observation. Valid until advance().
  Observation sense();
  // Applies u for one step; true when the episode has ended.
  bool advance(const ControlInput & u);

  const WorldState & world() const { return world_; }
  const AugmentedMemory & memory() const { return memory_; }
  bool crashed() const { return world_.crashed; }
  bool reached() const { return reached_; }
  bool timed_out() const { return timed_out_; }
  bool ended() const { return world_.crashed || reached_ || timed_out_; }
  // Stop copying records into the external memory passed at construction.
  void detach_record() { record_ = nullptr; }

private:
  std::shared_ptr<const Scenario> scenario_;
  SimSettings sim_;
  std::uint64_t seed_;
  AugmentedMemory * record_;
  WorldState world_;
  OccupancyGrid grid_;
  AugmentedMemory memory_;
  std::vector<RayHit> rays_;
  GridPtr q_;
  VehicleState observed_;
  ControlInput last_u_;
  double limit_ = 0.0;
  bool reached_ = false;
  bool timed_out_ = false;
};

// Runs one closed-loop episode. When `record` is given it receives every
// memory record (state stream and quantized grids).
EpisodeTrace run_episode(
  std::shared_ptr<const Scenario> scenario, Controller & controller, const SimSettings & sim, std::uint64_t seed,
  AugmentedMemory * record = nullptr);

// Ground-truth path as the mean of demonstration paths, resampled every
// `spacing` metres of route arc length. Falls back to the route if empty.
Polyline mean_path(const Polyline & route, const std::vector<EpisodeTrace> & demos, double spacing = 0.5);

}  // namespace scenenmpc

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
#include <deque>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "scenenmpc/geometry.hpp"
#include "scenenmpc/occupancy_grid.hpp"
#include "scenenmpc/vehicle_model.hpp"

namespace scenenmpc {

using GridPtr = std::shared_ptr<const OccupancyGrid>;

struct MemoryRecord {
  double timestamp = 0.0;
  VehicleState ego_state;
  ControlInput control;
  GridPtr grid;  // may be null when the grid stream runs at its own cadence
  std::vector<Vec2> reference_slice;
  double speed = 0.0;
};

struct WindowQuery {
  double t = 0.0;
  double tau_i = 0.284;
  double stride = 0.071;
};

// Past window s = (z^{t - tau_i .. t}, I^{t - tau_i .. t}), newest last.
struct JointState {
  std::vector<double> times;
  std::vector<VehicleState> states;
  std::vector<ControlInput> controls;
  std::vector<GridPtr> grids;
  bool extrapolated = false;

  size_t size() const { return states.size(); }
  const VehicleState & latest() const { return states.back(); }
};

// Expert output window z_d^{t+1 .. t+tau_o}.
using SetPointTrajectory = std::vector<VehicleState>;

class OutOfOrderInsert : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InsufficientHistory : public std::runtime_error {
public:
  InsufficientHistory(const std::string & what, double missing_from, double missing_to)
  : std::runtime_error(what), missing_from(missing_from), missing_to(missing_to)
  {
  }
  double missing_from;
  double missing_to;
};

// Timestamp-addressable store with a state stream and a grid stream. One
// writer, many readers: inserts take an exclusive lock, queries a shared one.
class AugmentedMemory {
public:
  explicit AugmentedMemory(size_t capacity = 4096);
  AugmentedMemory(const AugmentedMemory & o);
  AugmentedMemory & operator=(const AugmentedMemory & o);

  // Appends to the state stream and, when record.grid is set, the grid stream.
  void insert(const MemoryRecord & record);
  void insert_state(const MemoryRecord & record);
  void insert_grid(double timestamp, GridPtr grid);

  size_t capacity() const { return capacity_; }
  size_t size() const;
  size_t grid_count() const;
  bool empty() const { return size() == 0; }
  double first_time() const;
  double last_time() const;

  // Record with exactly this timestamp.
  std::optional<MemoryRecord> find(double timestamp) const;
  MemoryRecord at(size_t index) const;
  std::vector<MemoryRecord> records() const;

  JointState window(const WindowQuery & q) const;
  // Synchronized state at any covered time.
  VehicleState state_at(double t) const;

private:
  mutable std::shared_mutex mu_;
  size_t capacity_;
  std::deque<MemoryRecord> states_;
  std::deque<Timestamped<GridPtr>> grids_;
};

// Number of slots of a window query; throws if tau_i / stride is not integral.
int window_slots(const WindowQuery & q);

// Offline store: every episode is a memory holding the whole recording.
struct Dataset {
  std::vector<std::shared_ptr<const AugmentedMemory>> episodes;
  std::vector<std::string> names;
  std::vector<Polyline> routes;  // global reference per episode, parallel to episodes
};

struct Sample {
  JointState s;
  SetPointTrajectory z_d;
  JointState s_next;
  size_t episode = 0;
  double t = 0.0;
};

struct BatchSpec {
  double tau_i = 0.284;
  double stride = 0.071;
  int tau_o = 4;
  double output_dt = 0.071;  // spacing of the z_d waypoints
};

// Anchor times with enough history and future in one episode.
std::vector<double> valid_anchors(const AugmentedMemory & ep, const BatchSpec & spec);

// (episode, anchor time) pairs over the whole dataset.
using AnchorIndex = std::vector<std::pair<size_t, double>>;
AnchorIndex build_anchor_index(const Dataset & data, const BatchSpec & spec);

// Uniform over all valid anchors of all episodes; deterministic in the seed.
std::vector<Sample> sample_batch(const Dataset & data, size_t batch_size, const BatchSpec & spec, std::uint64_t rng_seed);
std::vector<Sample> sample_batch(
  const Dataset & data, const AnchorIndex & anchors, size_t batch_size, const BatchSpec & spec,
  std::uint64_t rng_seed);
Sample make_sample(const Dataset & data, size_t episode, double t, const BatchSpec & spec);

}  // namespace scenenmpc

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
#include <string>
#include <vector>

#include "scenenmpc/geometry.hpp"
#include "scenenmpc/gridsim.hpp"
#include "scenenmpc/vehicle_model.hpp"

namespace scenenmpc {

struct GridConfig {
  double size_m = 12.0;
  double resolution = 0.1;
  double decay_factor = 0.95;
  double recenter_threshold = 3.0;
  double eta = 0.3;  // evidence gain of the additive update

  int cells() const;
  void validate() const;
};

// Road-scale preset (125 m at 0.25 m).
GridConfig grid_preset_car();
// Small-robot preset (12 m at 0.1 m), the desk default.
GridConfig grid_preset_amtu();

// Row i grows along +y, column j along +x; cell (i, j) covers
// [anchor.x + j*res, anchor.x + (j+1)*res) x [anchor.y + i*res, anchor.y + (i+1)*res).
// The anchor lives on the resolution lattice (integer cell indices) so that
// shifting never changes which world point maps to which cell.
struct OccupancyGrid {
  int rows = 0;
  int cols = 0;
  double resolution = 0.1;
  long long anchor_col = 0;
  long long anchor_row = 0;
  double timestamp = 0.0;
  std::vector<float> cells;

  Vec2 anchor() const { return {anchor_col * resolution, anchor_row * resolution}; }

  float at(int i, int j) const { return cells[static_cast<size_t>(i) * cols + j]; }
  float & at(int i, int j) { return cells[static_cast<size_t>(i) * cols + j]; }
  bool contains_cell(int i, int j) const { return i >= 0 && j >= 0 && i < rows && j < cols; }
  // Cell indices of a world point; false if outside.
  bool cell_of(Vec2 p, int & i, int & j) const;
  Vec2 cell_center(int i, int j) const;
  Vec2 center() const;
  // Belief at a world point, 0 outside the grid.
  float query(Vec2 p) const;
};

// Unknown grid centred on the pose, anchor snapped to the resolution lattice.
OccupancyGrid make_grid(const GridConfig & cfg, const VehicleState & ego, double timestamp = 0.0);

OccupancyGrid update_grid(
  const OccupancyGrid & grid, const std::vector<RayHit> & rays, const VehicleState & ego, const GridConfig & cfg,
  double max_range);

OccupancyGrid recenter_if_needed(const OccupancyGrid & grid, const VehicleState & ego, const GridConfig & cfg);
// Whole-cell shift: output cell (i, j) takes input cell (i + di, j + dj).
OccupancyGrid shift_grid(const OccupancyGrid & grid, int di, int dj);

template <typename T>
struct Timestamped {
  double t;
  T payload;
};

struct SyncResult {
  bool extrapolated = false;
};

// Linear interpolation for states (heading along the shortest arc).
VehicleState synchronize(
  const std::vector<Timestamped<VehicleState>> & samples, double query_t, SyncResult * info = nullptr);
// Nearest neighbour for grids; ties go to the earlier sample.
std::shared_ptr<const OccupancyGrid> synchronize(
  const std::vector<Timestamped<std::shared_ptr<const OccupancyGrid>>> & samples, double query_t,
  SyncResult * info = nullptr);

struct ObservationTensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major
};

// Mean pooling by an integer factor (1 = copy).
ObservationTensor to_observation(const OccupancyGrid & grid, int downsample = 1);
// Area-weighted resampling to an arbitrary square size.
ObservationTensor resample_observation(const OccupancyGrid & grid, int size);

std::uint64_t checksum(const ObservationTensor & t);

// Binary snapshot: "OGRD" magic, u32 version, i32 rows, i32 cols, f64
// resolution, f64 anchor x, f64 anchor y, f64 timestamp, then rows*cols int8
// cells (round(c * 127)), all little-endian.
std::vector<std::uint8_t> serialize_grid(const OccupancyGrid & grid);
OccupancyGrid deserialize_grid(const std::uint8_t * data, size_t size);
inline OccupancyGrid deserialize_grid(const std::vector<std::uint8_t> & bytes)
{
  return deserialize_grid(bytes.data(), bytes.size());
}
// Rounds every cell to the 8-bit lattice used on disk.
OccupancyGrid quantize_grid(const OccupancyGrid & grid);
// Portable graymap, free = white, occupied = black.
std::string to_pgm(const OccupancyGrid & grid);

}  // namespace scenenmpc

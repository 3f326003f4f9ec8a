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

#include "scenenmpc/occupancy_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace scenenmpc {

int GridConfig::cells() const { return static_cast<int>(std::llround(size_m / resolution)); }

void GridConfig::validate() const
{
  if (!(resolution > 0.0)) throw std::invalid_argument("grid: resolution must be > 0");
  const double n = size_m / resolution;
  if (std::abs(n - std::round(n)) > 1e-6 || n < 1.0) {
    throw std::invalid_argument("grid: size_m / resolution must be a positive integer");
  }
  if (!(decay_factor >= 0.0 && decay_factor < 1.0)) throw std::invalid_argument("grid: decay_factor must be in [0, 1)");
  if (!(recenter_threshold >= 0.0 && recenter_threshold < 0.5 * size_m)) {
    throw std::invalid_argument("grid: recenter_threshold must be < size_m / 2");
  }
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("grid: eta must be in (0, 1]");
}

GridConfig grid_preset_car()
{
  GridConfig c;
  c.size_m = 125.0;
  c.resolution = 0.25;
  c.recenter_threshold = 15.0;
  return c;
}

GridConfig grid_preset_amtu() { return GridConfig{}; }

bool OccupancyGrid::cell_of(Vec2 p, int & i, int & j) const
{
  const double fj = std::floor(p.x / resolution) - static_cast<double>(anchor_col);
  const double fi = std::floor(p.y / resolution) - static_cast<double>(anchor_row);
  if (!(fi >= 0.0 && fj >= 0.0 && fi < rows && fj < cols)) return false;
  i = static_cast<int>(fi);
  j = static_cast<int>(fj);
  return true;
}

Vec2 OccupancyGrid::cell_center(int i, int j) const
{
  return {(anchor_col + j + 0.5) * resolution, (anchor_row + i + 0.5) * resolution};
}

Vec2 OccupancyGrid::center() const
{
  return {(anchor_col + 0.5 * cols) * resolution, (anchor_row + 0.5 * rows) * resolution};
}

float OccupancyGrid::query(Vec2 p) const
{
  int i, j;
  return cell_of(p, i, j) ? at(i, j) : 0.0f;
}

OccupancyGrid make_grid(const GridConfig & cfg, const VehicleState & ego, double timestamp)
{
  cfg.validate();
  OccupancyGrid g;
  g.rows = g.cols = cfg.cells();
  g.resolution = cfg.resolution;
  g.anchor_col = static_cast<long long>(std::llround(ego.x / cfg.resolution)) - g.cols / 2;
  g.anchor_row = static_cast<long long>(std::llround(ego.y / cfg.resolution)) - g.rows / 2;
  g.timestamp = timestamp;
  g.cells.assign(static_cast<size_t>(g.rows) * g.cols, 0.0f);
  return g;
}

namespace {

enum : std::uint8_t { kNone = 0, kFree = 1, kOccupied = 2 };

// Walks the cells pierced by the segment origin -> origin + dist * dir
// (Amanatides & Woo). `hit` marks the final cell occupied.
void trace_ray(const OccupancyGrid & g, Vec2 origin, Vec2 dir, double dist, bool hit, std::vector<std::uint8_t> & ev)
{
  const double res = g.resolution;
  // lattice coordinates relative to the anchor
  const double ox = origin.x / res - static_cast<double>(g.anchor_col);
  const double oy = origin.y / res - static_cast<double>(g.anchor_row);
  long long cj = static_cast<long long>(std::floor(ox));
  long long ci = static_cast<long long>(std::floor(oy));
  const int sj = dir.x > 0 ? 1 : (dir.x < 0 ? -1 : 0);
  const int si = dir.y > 0 ? 1 : (dir.y < 0 ? -1 : 0);
  const double inf = std::numeric_limits<double>::infinity();
  const double tdj = sj != 0 ? res / std::abs(dir.x) : inf;
  const double tdi = si != 0 ? res / std::abs(dir.y) : inf;
  double tmj = sj > 0 ? (cj + 1 - ox) * res / dir.x : (sj < 0 ? (ox - cj) * res / -dir.x : inf);
  double tmi = si > 0 ? (ci + 1 - oy) * res / dir.y : (si < 0 ? (oy - ci) * res / -dir.y : inf);
  double t_in = 0.0;
  auto inside = [&](long long i, long long j) { return i >= 0 && j >= 0 && i < g.rows && j < g.cols; };
  bool was_inside = inside(ci, cj);
  while (true) {
    const double t_out = std::min(tmj, tmi);
    const bool is_inside = inside(ci, cj);
    if (!is_inside && was_inside) return;  // left the (convex) grid
    was_inside = was_inside || is_inside;
    const size_t idx = is_inside ? static_cast<size_t>(ci) * g.cols + static_cast<size_t>(cj) : 0;
    if (hit && dist < t_out) {
      if (is_inside) ev[idx] = kOccupied;
      return;
    }
    if (!hit && t_in >= dist) return;
    if (is_inside && ev[idx] == kNone) ev[idx] = kFree;
    if (t_out == inf) return;
    t_in = t_out;
    if (tmj < tmi) {
      cj += sj;
      tmj += tdj;
    } else {
      ci += si;
      tmi += tdi;
    }
  }
}

float move_toward(float c, double target, double eta)
{
  const double v = static_cast<double>(c) + eta * (target - static_cast<double>(c));
  return static_cast<float>(std::clamp(v, -1.0, 1.0));
}

}  // namespace

OccupancyGrid update_grid(
  const OccupancyGrid & grid, const std::vector<RayHit> & rays, const VehicleState & ego, const GridConfig & cfg,
  double max_range)
{
  std::vector<std::uint8_t> ev(grid.cells.size(), kNone);
  const Vec2 o{ego.x, ego.y};
  for (const auto & r : rays) {
    const double a = ego.rho + r.angle;
    const Vec2 dir{std::cos(a), std::sin(a)};
    const bool hit = r.distance < max_range;
    trace_ray(grid, o, dir, std::min(r.distance, max_range), hit, ev);
  }
  OccupancyGrid out = grid;
  for (size_t k = 0; k < out.cells.size(); ++k) {
    switch (ev[k]) {
      case kOccupied: out.cells[k] = move_toward(grid.cells[k], 1.0, cfg.eta); break;
      case kFree: out.cells[k] = move_toward(grid.cells[k], -1.0, cfg.eta); break;
      default: out.cells[k] = static_cast<float>(static_cast<double>(grid.cells[k]) * cfg.decay_factor); break;
    }
  }
  return out;
}

OccupancyGrid shift_grid(const OccupancyGrid & grid, int di, int dj)
{
  OccupancyGrid out = grid;
  out.anchor_col += dj;
  out.anchor_row += di;
  std::fill(out.cells.begin(), out.cells.end(), 0.0f);
  for (int i = 0; i < grid.rows; ++i) {
    const int si = i + di;
    if (si < 0 || si >= grid.rows) continue;
    for (int j = 0; j < grid.cols; ++j) {
      const int sj = j + dj;
      if (sj < 0 || sj >= grid.cols) continue;
      out.at(i, j) = grid.at(si, sj);
    }
  }
  return out;
}

OccupancyGrid recenter_if_needed(const OccupancyGrid & grid, const VehicleState & ego, const GridConfig & cfg)
{
  const Vec2 c = grid.center();
  const Vec2 d{ego.x - c.x, ego.y - c.y};
  if (norm(d) <= cfg.recenter_threshold) return grid;
  const int dj = static_cast<int>(std::lround(d.x / grid.resolution));
  const int di = static_cast<int>(std::lround(d.y / grid.resolution));
  if (di == 0 && dj == 0) return grid;
  return shift_grid(grid, di, dj);
}

VehicleState synchronize(const std::vector<Timestamped<VehicleState>> & samples, double query_t, SyncResult * info)
{
  if (samples.empty()) throw std::invalid_argument("synchronize: no samples");
  if (info) info->extrapolated = false;
  if (query_t <= samples.front().t) {
    if (info) info->extrapolated = query_t < samples.front().t;
    return samples.front().payload;
  }
  if (query_t >= samples.back().t) {
    if (info) info->extrapolated = query_t > samples.back().t;
    return samples.back().payload;
  }
  const auto it = std::lower_bound(
    samples.begin(), samples.end(), query_t, [](const auto & s, double t) { return s.t < t; });
  if (it->t == query_t) return it->payload;
  const auto & b = *it;
  const auto & a = *(it - 1);
  const double f = (query_t - a.t) / (b.t - a.t);
  VehicleState out;
  out.x = a.payload.x + f * (b.payload.x - a.payload.x);
  out.y = a.payload.y + f * (b.payload.y - a.payload.y);
  out.rho = wrap_angle(a.payload.rho + f * angle_diff(b.payload.rho, a.payload.rho));
  return out;
}

std::shared_ptr<const OccupancyGrid> synchronize(
  const std::vector<Timestamped<std::shared_ptr<const OccupancyGrid>>> & samples, double query_t, SyncResult * info)
{
  if (samples.empty()) throw std::invalid_argument("synchronize: no samples");
  if (info) info->extrapolated = false;
  if (query_t <= samples.front().t) {
    if (info) info->extrapolated = query_t < samples.front().t;
    return samples.front().payload;
  }
  if (query_t >= samples.back().t) {
    if (info) info->extrapolated = query_t > samples.back().t;
    return samples.back().payload;
  }
  const auto it = std::lower_bound(
    samples.begin(), samples.end(), query_t, [](const auto & s, double t) { return s.t < t; });
  if (it->t == query_t) return it->payload;
  const auto & b = *it;
  const auto & a = *(it - 1);
  return (query_t - a.t) <= (b.t - query_t) ? a.payload : b.payload;
}

ObservationTensor to_observation(const OccupancyGrid & grid, int downsample)
{
  if (downsample < 1 || grid.rows % downsample != 0 || grid.cols % downsample != 0) {
    throw std::invalid_argument("to_observation: downsample must divide the grid size");
  }
  ObservationTensor t;
  t.rows = grid.rows / downsample;
  t.cols = grid.cols / downsample;
  t.data.assign(static_cast<size_t>(t.rows) * t.cols, 0.0);
  const double inv = 1.0 / (downsample * downsample);
  for (int i = 0; i < t.rows; ++i) {
    for (int j = 0; j < t.cols; ++j) {
      double acc = 0.0;
      for (int a = 0; a < downsample; ++a) {
        for (int b = 0; b < downsample; ++b) acc += grid.at(i * downsample + a, j * downsample + b);
      }
      t.data[static_cast<size_t>(i) * t.cols + j] = acc * inv;
    }
  }
  return t;
}

ObservationTensor resample_observation(const OccupancyGrid & grid, int size)
{
  if (size < 1) throw std::invalid_argument("resample_observation: size must be >= 1");
  ObservationTensor t;
  t.rows = t.cols = size;
  t.data.assign(static_cast<size_t>(size) * size, 0.0);
  const double ri = static_cast<double>(grid.rows) / size;
  const double rj = static_cast<double>(grid.cols) / size;
  for (int oi = 0; oi < size; ++oi) {
    const double i0 = oi * ri, i1 = (oi + 1) * ri;
    for (int oj = 0; oj < size; ++oj) {
      const double j0 = oj * rj, j1 = (oj + 1) * rj;
      double acc = 0.0;
      for (int i = static_cast<int>(i0); i < grid.rows && i < i1; ++i) {
        const double wi = std::min<double>(i + 1, i1) - std::max<double>(i, i0);
        for (int j = static_cast<int>(j0); j < grid.cols && j < j1; ++j) {
          const double wj = std::min<double>(j + 1, j1) - std::max<double>(j, j0);
          acc += wi * wj * grid.at(i, j);
        }
      }
      t.data[static_cast<size_t>(oi) * size + oj] = acc / (ri * rj);
    }
  }
  return t;
}

std::uint64_t checksum(const ObservationTensor & t)
{
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](const void * p, size_t n) {
    const auto * b = static_cast<const unsigned char *>(p);
    for (size_t k = 0; k < n; ++k) {
      h ^= b[k];
      h *= 1099511628211ULL;
    }
  };
  feed(&t.rows, sizeof(t.rows));
  feed(&t.cols, sizeof(t.cols));
  for (double v : t.data) feed(&v, sizeof(v));
  return h;
}

namespace {

constexpr std::uint32_t kGridVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t> & out, T v)
{
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T get(const std::uint8_t * data, size_t size, size_t & off)
{
  if (off + sizeof(T) > size) throw std::runtime_error("grid snapshot: truncated");
  T v;
  std::memcpy(&v, data + off, sizeof(T));
  off += sizeof(T);
  return v;
}

std::int8_t quantize(float c) { return static_cast<std::int8_t>(std::lround(std::clamp(c, -1.0f, 1.0f) * 127.0f)); }

}  // namespace

std::vector<std::uint8_t> serialize_grid(const OccupancyGrid & g)
{
  std::vector<std::uint8_t> out;
  out.reserve(44 + g.cells.size());
  out.insert(out.end(), {'O', 'G', 'R', 'D'});
  put<std::uint32_t>(out, kGridVersion);
  put<std::int32_t>(out, g.rows);
  put<std::int32_t>(out, g.cols);
  put<double>(out, g.resolution);
  const Vec2 a = g.anchor();
  put<double>(out, a.x);
  put<double>(out, a.y);
  put<double>(out, g.timestamp);
  for (float c : g.cells) out.push_back(static_cast<std::uint8_t>(quantize(c)));
  return out;
}

OccupancyGrid deserialize_grid(const std::uint8_t * data, size_t size)
{
  if (size < 4 || std::memcmp(data, "OGRD", 4) != 0) throw std::runtime_error("grid snapshot: bad magic");
  size_t off = 4;
  const auto version = get<std::uint32_t>(data, size, off);
  if (version != kGridVersion) throw std::runtime_error("grid snapshot: unsupported version " + std::to_string(version));
  OccupancyGrid g;
  g.rows = get<std::int32_t>(data, size, off);
  g.cols = get<std::int32_t>(data, size, off);
  g.resolution = get<double>(data, size, off);
  const double ax = get<double>(data, size, off);
  const double ay = get<double>(data, size, off);
  g.timestamp = get<double>(data, size, off);
  if (g.rows <= 0 || g.cols <= 0 || !(g.resolution > 0.0)) throw std::runtime_error("grid snapshot: bad header");
  g.anchor_col = std::llround(ax / g.resolution);
  g.anchor_row = std::llround(ay / g.resolution);
  const size_t n = static_cast<size_t>(g.rows) * g.cols;
  if (off + n != size) throw std::runtime_error("grid snapshot: size mismatch");
  g.cells.resize(n);
  for (size_t k = 0; k < n; ++k) g.cells[k] = static_cast<float>(static_cast<std::int8_t>(data[off + k])) / 127.0f;
  return g;
}

OccupancyGrid quantize_grid(const OccupancyGrid & grid)
{
  OccupancyGrid out = grid;
  for (auto & c : out.cells) c = static_cast<float>(quantize(c)) / 127.0f;
  return out;
}

std::string to_pgm(const OccupancyGrid & g)
{
  std::ostringstream os;
  os << "P5\n" << g.cols << " " << g.rows << "\n255\n";
  std::string body(static_cast<size_t>(g.rows) * g.cols, '\0');
  for (size_t k = 0; k < body.size(); ++k) {
    const double v = (1.0 - static_cast<double>(g.cells[k])) * 127.5;
    body[k] = static_cast<char>(static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L)));
  }
  os << body;
  return os.str();
}

}  // namespace scenenmpc

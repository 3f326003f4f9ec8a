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

#include <optional>
#include <vector>

#include "scenenmpc/vehicle_model.hpp"

namespace scenenmpc {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 a);

struct Segment {
  Vec2 a;
  Vec2 b;
};

using Polygon = std::vector<Vec2>;

// Distance along the ray origin + t * dir (dir unit length) to the segment,
// or nullopt if the ray misses it. Parallel overlap counts as a miss.
std::optional<double> ray_segment_distance(Vec2 origin, Vec2 dir, const Segment & seg);

bool segments_intersect(const Segment & p, const Segment & q);
bool point_in_polygon(Vec2 p, const Polygon & poly);
// True if the polygons overlap or touch (edge crossing or containment).
bool polygons_intersect(const Polygon & a, const Polygon & b);

// Oriented rectangle centred on the pose.
Polygon footprint(const VehicleState & pose, double length, double width);

// Polyline with cumulative arc length and closest-point projection.
class Polyline {
public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> pts);

  const std::vector<Vec2> & points() const { return pts_; }
  double length() const { return s_.empty() ? 0.0 : s_.back(); }
  bool empty() const { return pts_.empty(); }

  Vec2 point_at(double s) const;
  double heading_at(double s) const;

  struct Projection {
    double s = 0.0;         // arc length of the closest point
    double lateral = 0.0;   // signed offset, positive to the right of travel (+y side for heading 0)
    double distance = 0.0;  // unsigned distance
    Vec2 point;
  };
  Projection project(Vec2 p) const;
  // Projection restricted to arcs in [s_lo, s_hi]; used to avoid jumping
  // between distant parts of a curved route.
  Projection project(Vec2 p, double s_lo, double s_hi) const;

private:
  std::vector<Vec2> pts_;
  std::vector<double> s_;
};

}  // namespace scenenmpc

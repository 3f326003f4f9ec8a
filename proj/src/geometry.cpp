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

#include "scenenmpc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace scenenmpc {

double norm(Vec2 a) { return std::hypot(a.x, a.y); }

std::optional<double> ray_segment_distance(Vec2 origin, Vec2 dir, const Segment & seg)
{
  const Vec2 e = seg.b - seg.a;
  const double denom = cross(dir, e);
  if (denom == 0.0) return std::nullopt;
  const Vec2 w = seg.a - origin;
  const double t = cross(w, e) / denom;
  const double u = cross(w, dir) / denom;
  if (t < 0.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

namespace {

int orient(Vec2 a, Vec2 b, Vec2 c)
{
  const double v = cross(b - a, c - a);
  return (v > 0.0) - (v < 0.0);
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p)
{
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

}  // namespace

bool segments_intersect(const Segment & p, const Segment & q)
{
  const int o1 = orient(p.a, p.b, q.a);
  const int o2 = orient(p.a, p.b, q.b);
  const int o3 = orient(q.a, q.b, p.a);
  const int o4 = orient(q.a, q.b, p.b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p.a, p.b, q.a)) return true;
  if (o2 == 0 && on_segment(p.a, p.b, q.b)) return true;
  if (o3 == 0 && on_segment(q.a, q.b, p.a)) return true;
  if (o4 == 0 && on_segment(q.a, q.b, p.b)) return true;
  return false;
}

bool point_in_polygon(Vec2 p, const Polygon & poly)
{
  bool inside = false;
  const size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

bool polygons_intersect(const Polygon & a, const Polygon & b)
{
  if (a.empty() || b.empty()) return false;
  // open polylines (2 points) are treated as single segments
  const size_t na = a.size() == 2 ? 1 : a.size();
  const size_t nb = b.size() == 2 ? 1 : b.size();
  for (size_t i = 0; i < na; ++i) {
    const Segment sa{a[i], a[(i + 1) % a.size()]};
    for (size_t j = 0; j < nb; ++j) {
      if (segments_intersect(sa, {b[j], b[(j + 1) % b.size()]})) return true;
    }
  }
  if (a.size() > 2 && point_in_polygon(b[0], a)) return true;
  if (b.size() > 2 && point_in_polygon(a[0], b)) return true;
  return false;
}

Polygon footprint(const VehicleState & pose, double length, double width)
{
  const double c = std::cos(pose.rho);
  const double s = std::sin(pose.rho);
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  Polygon out;
  const double corners[4][2] = {{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}};
  for (const auto & k : corners) {
    out.push_back({pose.x + c * k[0] - s * k[1], pose.y + s * k[0] + c * k[1]});
  }
  return out;
}

Polyline::Polyline(std::vector<Vec2> pts) : pts_(std::move(pts))
{
  s_.reserve(pts_.size());
  double acc = 0.0;
  for (size_t i = 0; i < pts_.size(); ++i) {
    if (i > 0) acc += norm(pts_[i] - pts_[i - 1]);
    s_.push_back(acc);
  }
}

Vec2 Polyline::point_at(double s) const
{
  if (pts_.empty()) throw std::logic_error("Polyline: empty");
  if (pts_.size() == 1 || s <= 0.0) return pts_.front();
  if (s >= s_.back()) {
    // linear extrapolation beyond the end along the last segment
    const Vec2 d = pts_.back() - pts_[pts_.size() - 2];
    const double l = norm(d);
    return l > 0.0 ? pts_.back() + ((s - s_.back()) / l) * d : pts_.back();
  }
  const auto it = std::upper_bound(s_.begin(), s_.end(), s);
  const size_t i = static_cast<size_t>(it - s_.begin()) - 1;
  const double l = s_[i + 1] - s_[i];
  const double f = l > 0.0 ? (s - s_[i]) / l : 0.0;
  return pts_[i] + f * (pts_[i + 1] - pts_[i]);
}

double Polyline::heading_at(double s) const
{
  if (pts_.size() < 2) return 0.0;
  size_t i;
  if (s <= 0.0) {
    i = 0;
  } else if (s >= s_.back()) {
    i = pts_.size() - 2;
  } else {
    i = static_cast<size_t>(std::upper_bound(s_.begin(), s_.end(), s) - s_.begin()) - 1;
  }
  const Vec2 d = pts_[i + 1] - pts_[i];
  return std::atan2(d.y, d.x);
}

Polyline::Projection Polyline::project(Vec2 p) const
{
  return project(p, 0.0, length());
}

Polyline::Projection Polyline::project(Vec2 p, double s_lo, double s_hi) const
{
  if (pts_.empty()) throw std::logic_error("Polyline: empty");
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  if (pts_.size() == 1) {
    best.point = pts_[0];
    best.distance = norm(p - pts_[0]);
    return best;
  }
  for (size_t i = 0; i + 1 < pts_.size(); ++i) {
    if (s_[i + 1] < s_lo || s_[i] > s_hi) continue;
    const Vec2 a = pts_[i];
    const Vec2 d = pts_[i + 1] - a;
    const double l2 = dot(d, d);
    double f = l2 > 0.0 ? dot(p - a, d) / l2 : 0.0;
    f = std::clamp(f, 0.0, 1.0);
    const double seg_len = s_[i + 1] - s_[i];
    double s = s_[i] + f * seg_len;
    if (s < s_lo || s > s_hi) {
      s = std::clamp(s, s_lo, s_hi);
      f = seg_len > 0.0 ? (s - s_[i]) / seg_len : 0.0;
    }
    const Vec2 q = a + f * d;
    const double dist = norm(p - q);
    if (dist < best.distance) {
      best.distance = dist;
      best.s = s;
      best.point = q;
      best.lateral = l2 > 0.0 ? cross(d, p - a) / std::sqrt(l2) : dist;
    }
  }
  return best;
}

}  // namespace scenenmpc

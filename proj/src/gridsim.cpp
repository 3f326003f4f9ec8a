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

#include "scenenmpc/gridsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "scenenmpc/rng.hpp"

namespace scenenmpc {

std::string to_string(ScenarioKind k)
{
  switch (k) {
    case ScenarioKind::seamless: return "seamless";
    case ScenarioKind::inner_city: return "inner_city";
    case ScenarioKind::highway: return "highway";
  }
  return "?";
}

ScenarioKind scenario_kind_from_string(const std::string & s)
{
  if (s == "seamless") return ScenarioKind::seamless;
  if (s == "inner_city") return ScenarioKind::inner_city;
  if (s == "highway") return ScenarioKind::highway;
  throw std::invalid_argument("unknown scenario kind '" + s + "'");
}

std::string to_string(Behavior b)
{
  switch (b) {
    case Behavior::follow: return "follow";
    case Behavior::overtake: return "overtake";
    case Behavior::lane_change: return "lane_change";
    case Behavior::brake: return "brake";
  }
  return "?";
}

std::string to_string(CrashCause c)
{
  switch (c) {
    case CrashCause::none: return "none";
    case CrashCause::collision: return "collision";
    case CrashCause::stall: return "stall";
  }
  return "?";
}

void ScenarioConfig::validate() const
{
  if (!(fov_deg > 0.0 && fov_deg <= 360.0)) throw std::invalid_argument("scenario: fov_deg must be in (0, 360]");
  if (!(v_max > v_min && v_min >= 0.0)) throw std::invalid_argument("scenario: need v_max > v_min >= 0");
  if (!(accel_max > 0.0)) throw std::invalid_argument("scenario: accel_max must be > 0");
  if (n_traffic < 0) throw std::invalid_argument("scenario: n_traffic < 0");
  if (straight_road_fraction < 0.0 || straight_road_fraction > 1.0) {
    throw std::invalid_argument("scenario: straight_road_fraction must be in [0, 1]");
  }
  if (!route.empty() && route.size() < 2) throw std::invalid_argument("scenario: route needs >= 2 waypoints");
  if (!(road_length > 0.0 && segment_length > 0.0)) throw std::invalid_argument("scenario: bad road lengths");
  if (n_lanes < 1 || !(lane_width > 0.0)) throw std::invalid_argument("scenario: bad lane layout");
  if (n_rays < 2 || !(max_range > 0.0)) throw std::invalid_argument("scenario: bad sensor settings");
  if (!(stall_duration > 0.0)) throw std::invalid_argument("scenario: stall_duration must be > 0");
  vehicle.validate();
}

ScenarioConfig scenario_preset(ScenarioKind kind)
{
  ScenarioConfig c;
  c.kind = kind;
  c.fov_deg = 120.0;
  switch (kind) {
    case ScenarioKind::seamless:
      c.n_traffic = 10;
      c.v_max = 13.88;
      c.v_min = 4.16;
      c.accel_max = 2.0;
      c.straight_road_fraction = 0.60;
      c.mean_curve_radius_deg = 55.0;
      break;
    case ScenarioKind::inner_city:
      c.n_traffic = 20;
      c.v_max = 8.33;
      c.v_min = 2.77;
      c.accel_max = 2.0;
      c.straight_road_fraction = 0.45;
      c.mean_curve_radius_deg = 81.0;
      break;
    case ScenarioKind::highway:
      c.n_traffic = 7;
      c.v_max = 27.77;
      c.v_min = 8.33;
      c.accel_max = 4.0;
      c.straight_road_fraction = 1.0;
      c.mean_curve_radius_deg = 0.0;
      break;
  }
  return c;
}

namespace {

Vec2 right_normal(double heading) { return {-std::sin(heading), std::cos(heading)}; }

std::vector<Vec2> simplify_collinear(const std::vector<Vec2> & pts)
{
  if (pts.size() < 3) return pts;
  std::vector<Vec2> out{pts.front()};
  for (size_t i = 1; i + 1 < pts.size(); ++i) {
    const Vec2 a = out.back() - pts[i];
    const Vec2 b = pts[i + 1] - pts[i];
    if (std::abs(cross(a, b)) > 1e-9 * norm(a) * norm(b)) out.push_back(pts[i]);
  }
  out.push_back(pts.back());
  return out;
}

Road generate_road(const ScenarioConfig & cfg)
{
  std::mt19937_64 rng(cfg.rng_seed ^ 0x5eedf00dULL);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double mean_sweep = cfg.mean_curve_radius_deg * M_PI / 180.0;
  std::normal_distribution<double> sweep_dist(mean_sweep, 0.25 * mean_sweep);

  Road road;
  road.half_width = 0.5 * cfg.n_lanes * cfg.lane_width;
  for (int i = 0; i < cfg.n_lanes; ++i) {
    road.lane_offsets.push_back(-road.half_width + (i + 0.5) * cfg.lane_width);
  }

  const int n_seg = static_cast<int>(std::ceil(cfg.road_length / cfg.segment_length - 1e-9));
  std::vector<Vec2> pts{{0.0, 0.0}};
  double heading = 0.0;
  Vec2 p{0.0, 0.0};
  const double ds = 1.0;
  for (int k = 0; k < n_seg; ++k) {
    const double len = std::min(cfg.segment_length, cfg.road_length - k * cfg.segment_length);
    const bool straight = mean_sweep <= 0.0 || uni(rng) < cfg.straight_road_fraction;
    double sweep = 0.0;
    if (!straight) {
      sweep = std::clamp(std::abs(sweep_dist(rng)), 5.0 * M_PI / 180.0, 150.0 * M_PI / 180.0);
      if (uni(rng) < 0.5) sweep = -sweep;
    }
    road.segment_kinds.push_back(straight ? SegmentKind::straight : SegmentKind::arc);
    road.segment_sweeps.push_back(sweep);
    const int n = std::max(1, static_cast<int>(std::ceil(len / ds)));
    const double step = len / n;
    const double curvature = sweep / len;
    for (int i = 0; i < n; ++i) {
      if (curvature == 0.0) {
        p = p + step * Vec2{std::cos(heading), std::sin(heading)};
      } else {
        const double h1 = heading + curvature * step;
        const double r = 1.0 / curvature;
        p = p + Vec2{r * (std::sin(h1) - std::sin(heading)), -r * (std::cos(h1) - std::cos(heading))};
        heading = h1;
      }
      pts.push_back(p);
    }
  }
  road.centerline = Polyline(simplify_collinear(pts));

  if (cfg.curbs) {
    // offset the densely sampled centreline; the simplified copy would lose arcs
    std::vector<Vec2> left, right;
    for (size_t i = 0; i < pts.size(); ++i) {
      const Vec2 d = i + 1 < pts.size() ? pts[i + 1] - pts[i] : pts[i] - pts[i - 1];
      const double h = std::atan2(d.y, d.x);
      Vec2 nrm = right_normal(h);
      if (i > 0 && i + 1 < pts.size()) {
        const Vec2 d0 = pts[i] - pts[i - 1];
        const double h0 = std::atan2(d0.y, d0.x);
        nrm = right_normal(h0 + 0.5 * angle_diff(h, h0));
      }
      left.push_back(pts[i] - road.half_width * nrm);
      right.push_back(pts[i] + road.half_width * nrm);
    }
    road.curbs.emplace_back(simplify_collinear(left));
    road.curbs.emplace_back(simplify_collinear(right));
  }
  return road;
}

Polyline make_route(const ScenarioConfig & cfg, const Road & road)
{
  if (cfg.route.empty()) {
    const double off = road.lane_offsets.back();
    std::vector<Vec2> pts;
    const double len = road.centerline.length();
    const int n = std::max(2, static_cast<int>(std::ceil(len)) + 1);
    for (int i = 0; i < n; ++i) {
      const double s = len * i / (n - 1);
      pts.push_back(road.centerline.point_at(s) + off * right_normal(road.centerline.heading_at(s)));
    }
    return Polyline(simplify_collinear(pts));
  }
  Polyline route(cfg.route);
  const double step = 0.5;
  const int n = static_cast<int>(std::ceil(route.length() / step));
  for (int i = 0; i <= n; ++i) {
    const Vec2 q = route.point_at(std::min(route.length(), i * step));
    const auto proj = road.centerline.project(q);
    if (proj.distance > road.half_width + 1e-9) {
      throw std::invalid_argument(
        "scenario: route leaves the road surface near (" + std::to_string(q.x) + ", " + std::to_string(q.y) +
        ")");
    }
  }
  return route;
}

VehicleState lane_pose(const Road & road, double s, double d, double d_rate, double speed)
{
  const double h = road.centerline.heading_at(s);
  const Vec2 p = road.centerline.point_at(s) + d * right_normal(h);
  const double slip = speed > 1e-6 ? std::atan2(d_rate, speed) : 0.0;
  return {p.x, p.y, wrap_angle(h + slip)};
}

}  // namespace

std::shared_ptr<const Scenario> make_scenario(const ScenarioConfig & config)
{
  config.validate();
  auto sc = std::make_shared<Scenario>();
  sc->config = config;
  sc->road = generate_road(config);
  sc->route = make_route(config, sc->road);
  return sc;
}

WorldState build_scenario(const ScenarioConfig & config) { return build_scenario(make_scenario(config)); }

WorldState build_scenario(std::shared_ptr<const Scenario> scenario)
{
  const ScenarioConfig & cfg = scenario->config;
  WorldState w;
  w.scenario = scenario;
  w.static_obstacles = cfg.static_obstacles;

  const Polyline & route = scenario->route;
  const double h0 = route.heading_at(0.0);
  const Vec2 p0 = route.point_at(0.0) + cfg.initial_lateral_offset * right_normal(h0);
  w.ego = {p0.x, p0.y, wrap_angle(h0 + cfg.initial_heading_offset)};
  w.ego_speed = std::clamp(cfg.initial_speed, cfg.vehicle.v_min, cfg.vehicle.v_max);

  const Road & road = scenario->road;
  std::mt19937_64 rng(cfg.rng_seed ^ 0x7aff1cULL);
  const double ego_s = road.centerline.project({w.ego.x, w.ego.y}).s;
  const double s_lo = ego_s + cfg.traffic.spawn_clearance;
  const double s_hi = road.centerline.length() - cfg.traffic.length;
  std::uniform_real_distribution<double> us(s_lo, std::max(s_lo, s_hi));
  std::uniform_int_distribution<int> ul(0, cfg.n_lanes - 1);
  std::uniform_real_distribution<double> uv(cfg.v_min, cfg.v_max);
  const Polygon ego_fp = footprint(w.ego, cfg.vehicle.length, cfg.vehicle.width);
  int attempts = 0;
  while (static_cast<int>(w.participants.size()) < cfg.n_traffic) {
    if (++attempts > 10000) throw std::runtime_error("scenario: cannot place traffic participants collision-free");
    if (s_hi <= s_lo) throw std::runtime_error("scenario: road too short for traffic");
    TrafficParticipant p;
    p.id = static_cast<int>(w.participants.size());
    p.s = us(rng);
    p.d = p.target_d = road.lane_offsets[ul(rng)];
    p.length = cfg.traffic.length;
    p.width = cfg.traffic.width;
    p.cruise_speed = uv(rng);
    p.speed = p.cruise_speed;
    p.state = lane_pose(road, p.s, p.d, 0.0, p.speed);
    Polygon fp = footprint(p.state, p.length + 4.0, p.width + 0.4);
    bool ok = !polygons_intersect(fp, ego_fp);
    for (const auto & q : w.participants) {
      ok = ok && !polygons_intersect(fp, footprint(q.state, q.length + 4.0, q.width + 0.4));
    }
    for (const auto & o : w.static_obstacles) ok = ok && !polygons_intersect(fp, o);
    if (ok) w.participants.push_back(p);
  }
  return w;
}

namespace {

struct LaneFrame {
  double s;
  double d;
};

LaneFrame to_lane(const Road & road, Vec2 p)
{
  const auto pr = road.centerline.project(p);
  return {pr.s, pr.lateral};
}

bool lane_clear(
  const WorldState & w, const TrafficParticipant & self, double target_d, const LaneFrame & ego_lf,
  double lane_width)
{
  const double ahead = 15.0;
  const double behind = 10.0;
  auto blocks = [&](double s, double d) {
    return std::abs(d - target_d) < 0.5 * lane_width && s > self.s - behind && s < self.s + ahead;
  };
  if (blocks(ego_lf.s, ego_lf.d)) return false;
  for (const auto & q : w.participants) {
    if (q.id != self.id && blocks(q.s, q.d)) return false;
  }
  return true;
}

void step_participant(
  const WorldState & w, const LaneFrame & ego_lf, TrafficParticipant & p, double dt, std::uint64_t seed)
{
  const ScenarioConfig & cfg = w.scenario->config;
  const Road & road = w.scenario->road;
  const TrafficConfig & tc = cfg.traffic;
  CounterRng rng(seed, w.step, static_cast<std::uint64_t>(p.id));

  // nearest vehicle ahead in this lane, the ego included
  double lead_gap = std::numeric_limits<double>::infinity();
  double lead_speed = 0.0;
  auto consider = [&](double s, double d, double speed, double len) {
    if (std::abs(d - p.d) > 0.6 * cfg.lane_width) return;
    const double gap = s - p.s - 0.5 * (len + p.length);
    if (s > p.s && gap < lead_gap) {
      lead_gap = gap;
      lead_speed = speed;
    }
  };
  consider(ego_lf.s, ego_lf.d, w.ego_speed, cfg.vehicle.length);
  for (const auto & q : w.participants) {
    if (q.id != p.id) consider(q.s, q.d, q.speed, q.length);
  }

  auto other_lane = [&]() {
    double best = p.d;
    double best_dist = std::numeric_limits<double>::infinity();
    for (double off : road.lane_offsets) {
      const double dist = std::abs(off - p.d);
      if (dist > 0.5 * cfg.lane_width && dist < best_dist) {
        best = off;
        best_dist = dist;
      }
    }
    return best;
  };

  switch (p.behavior) {
    case Behavior::follow: {
      const double u = rng.uniform();
      if (lead_gap < tc.follow_gap && lead_speed < p.speed - 0.5) {
        const double t = other_lane();
        if (t != p.d && lane_clear(w, p, t, ego_lf, cfg.lane_width)) {
          p.behavior = Behavior::overtake;
          p.target_d = t;
        }
      } else if (u < tc.lane_change_rate * dt) {
        const double t = other_lane();
        if (t != p.d && lane_clear(w, p, t, ego_lf, cfg.lane_width)) {
          p.behavior = Behavior::lane_change;
          p.target_d = t;
        }
      } else if (u < (tc.lane_change_rate + tc.brake_rate) * dt) {
        p.behavior = Behavior::brake;
        p.behavior_until = w.time + tc.brake_duration;
      }
      break;
    }
    case Behavior::overtake:
    case Behavior::lane_change:
      if (std::abs(p.d - p.target_d) < 1e-6) p.behavior = Behavior::follow;
      break;
    case Behavior::brake:
      if (w.time >= p.behavior_until) p.behavior = Behavior::follow;
      break;
  }

  double target_speed = p.behavior == Behavior::brake ? cfg.v_min : p.cruise_speed;
  if (lead_gap < tc.min_gap) target_speed = std::min(target_speed, lead_speed);
  if (lead_gap < 0.5 * tc.min_gap) target_speed = cfg.v_min;
  const double a_lim = cfg.accel_max;
  const double dv = std::clamp(target_speed - p.speed, -a_lim * dt, a_lim * dt);
  p.speed = std::clamp(p.speed + dv, cfg.v_min, cfg.v_max);

  const double dd = std::clamp(p.target_d - p.d, -tc.lateral_speed * dt, tc.lateral_speed * dt);
  p.d += dd;
  p.s += p.speed * dt;
  p.state = lane_pose(road, p.s, p.d, dd / dt, p.speed);
}

}  // namespace

WorldState step_world(const WorldState & world, const ControlInput & ego_u, double dt)
{
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("step_world: dt must be > 0");
  const ScenarioConfig & cfg = world.scenario->config;
  const VehicleParams & vp = cfg.vehicle;
  WorldState w = world;

  // ego: steering clamped to the box, speed additionally rate limited
  ControlInput u = clamp_control(ego_u, vp);
  u.v_cmd = std::clamp(u.v_cmd, world.ego_speed - vp.accel_max * dt, world.ego_speed + vp.accel_max * dt);
  u = clamp_control(u, vp);
  w.ego = step_nominal(world.ego, u, vp, dt);
  w.ego_speed = u.v_cmd;
  w.ego_delta = u.delta_cmd;

  const LaneFrame ego_lf = to_lane(world.scenario->road, {world.ego.x, world.ego.y});
  for (auto & p : w.participants) step_participant(world, ego_lf, p, dt, cfg.rng_seed);
  const double road_end = world.scenario->road.centerline.length();
  w.participants.erase(
    std::remove_if(w.participants.begin(), w.participants.end(), [&](const auto & p) { return p.s > road_end; }),
    w.participants.end());

  w.time = world.time + dt;
  w.step = world.step + 1;

  if (!w.crashed) {
    const Polygon fp = footprint(w.ego, vp.length, vp.width);
    bool hit = false;
    for (const auto & o : w.static_obstacles) hit = hit || polygons_intersect(fp, o);
    for (const auto & p : w.participants) hit = hit || polygons_intersect(fp, footprint(p.state, p.length, p.width));
    for (const auto & c : world.scenario->road.curbs) {
      const auto & pts = c.points();
      for (size_t i = 0; !hit && i + 1 < pts.size(); ++i) hit = polygons_intersect(fp, {pts[i], pts[i + 1]});
    }
    if (hit) {
      w.crashed = true;
      w.crash_time = w.time;
      w.crash_cause = CrashCause::collision;
    }
  }

  const double thr = cfg.stall_fraction * vp.v_max;
  if (w.ego_speed < thr) {
    if (!w.low_speed_since) w.low_speed_since = world.time;
    if (!w.crashed && w.time - *w.low_speed_since >= cfg.stall_duration - 1e-9) {
      w.crashed = true;
      w.crash_time = *w.low_speed_since + cfg.stall_duration;
      w.crash_cause = CrashCause::stall;
    }
  } else {
    w.low_speed_since.reset();
  }
  return w;
}

std::vector<Segment> obstacle_segments(const WorldState & world)
{
  std::vector<Segment> segs;
  auto add_poly = [&](const Polygon & poly) {
    if (poly.size() == 2) {
      segs.push_back({poly[0], poly[1]});
      return;
    }
    for (size_t i = 0; i < poly.size(); ++i) segs.push_back({poly[i], poly[(i + 1) % poly.size()]});
  };
  for (const auto & o : world.static_obstacles) add_poly(o);
  for (const auto & p : world.participants) add_poly(footprint(p.state, p.length, p.width));
  if (world.scenario) {
    for (const auto & c : world.scenario->road.curbs) {
      const auto & pts = c.points();
      for (size_t i = 0; i + 1 < pts.size(); ++i) segs.push_back({pts[i], pts[i + 1]});
    }
  }
  return segs;
}

std::vector<RayHit> cast_rays(const WorldState & world, double fov_deg, int n_rays, double max_range)
{
  return cast_rays_from(world, world.ego, fov_deg, n_rays, max_range);
}

std::vector<RayHit> cast_rays_from(
  const WorldState & world, const VehicleState & pose, double fov_deg, int n_rays, double max_range)
{
  if (n_rays < 2) throw std::invalid_argument("cast_rays: n_rays must be >= 2");
  const double fov = fov_deg * M_PI / 180.0;
  const double step = fov_deg >= 360.0 ? fov / n_rays : fov / (n_rays - 1);
  const Vec2 o{pose.x, pose.y};

  // keep only edges whose bounding box meets the sensor disc's bounding box
  std::vector<Segment> segs;
  for (const auto & s : obstacle_segments(world)) {
    if (std::max(s.a.x, s.b.x) < o.x - max_range || std::min(s.a.x, s.b.x) > o.x + max_range ||
        std::max(s.a.y, s.b.y) < o.y - max_range || std::min(s.a.y, s.b.y) > o.y + max_range) {
      continue;
    }
    segs.push_back(s);
  }

  std::vector<RayHit> hits;
  hits.reserve(static_cast<size_t>(n_rays));
  for (int i = 0; i < n_rays; ++i) {
    const double a = -0.5 * fov + i * step;
    const Vec2 dir{std::cos(pose.rho + a), std::sin(pose.rho + a)};
    double best = max_range;
    for (const auto & s : segs) {
      const auto t = ray_segment_distance(o, dir, s);
      if (t && *t < best) best = *t;
    }
    hits.push_back({a, best});
  }
  return hits;
}

double route_progress(const WorldState & world)
{
  return world.scenario->route.project({world.ego.x, world.ego.y}).s;
}

bool reached_goal(const WorldState & world)
{
  const Polyline & route = world.scenario->route;
  const auto pr = route.project({world.ego.x, world.ego.y});
  return pr.s >= route.length() - world.scenario->config.goal_tolerance &&
         pr.distance <= world.scenario->road.half_width;
}

nlohmann::json WorldState::to_json() const
{
  using nlohmann::json;
  json j;
  j["step"] = step;
  j["time"] = time;
  j["ego"] = {ego.x, ego.y, ego.rho};
  j["ego_speed"] = ego_speed;
  j["ego_delta"] = ego_delta;
  json ps = json::array();
  for (const auto & p : participants) {
    ps.push_back({{"id", p.id},
                  {"state", {p.state.x, p.state.y, p.state.rho}},
                  {"speed", p.speed},
                  {"behavior", to_string(p.behavior)},
                  {"footprint", {p.length, p.width}},
                  {"s", p.s},
                  {"d", p.d},
                  {"target_d", p.target_d},
                  {"cruise_speed", p.cruise_speed},
                  {"behavior_until", p.behavior_until}});
  }
  j["participants"] = ps;
  json obs = json::array();
  for (const auto & poly : static_obstacles) {
    json pj = json::array();
    for (const auto & v : poly) pj.push_back({v.x, v.y});
    obs.push_back(pj);
  }
  j["static_obstacles"] = obs;
  j["crashed"] = crashed;
  j["crash_time"] = crash_time;
  j["crash_cause"] = to_string(crash_cause);
  j["low_speed_since"] = low_speed_since ? json(*low_speed_since) : json(nullptr);
  return j;
}

}  // namespace scenenmpc

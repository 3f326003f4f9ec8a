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

#include "scenenmpc/episode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "scenenmpc/rng.hpp"

namespace scenenmpc {

std::vector<VehicleState> reference_trajectory(
  const Polyline & route, const VehicleState & z, double speed, double dt, int n, int first, double min_speed)
{
  const double s0 = route.project({z.x, z.y}).s;
  const double v = std::max(speed, min_speed);
  std::vector<VehicleState> out;
  out.reserve(static_cast<size_t>(std::max(n, 0)));
  for (int k = first; k < first + n; ++k) {
    const double s = s0 + k * v * dt;
    const Vec2 p = route.point_at(s);
    out.push_back({p.x, p.y, route.heading_at(s)});
  }
  return out;
}

ControlInput pure_pursuit(
  const Polyline & route, const VehicleState & ego, const PursuitConfig & cfg, const VehicleParams & vehicle)
{
  const auto pr = route.project({ego.x, ego.y});
  const Vec2 target = route.point_at(pr.s + cfg.lookahead);
  const double alpha = angle_diff(std::atan2(target.y - ego.y, target.x - ego.x), ego.rho);
  const double ld = std::max(norm(target - Vec2{ego.x, ego.y}), 1e-3);
  const double delta = cfg.steer_gain * std::atan2(2.0 * vehicle.wheelbase_L * std::sin(alpha), ld);
  return clamp_control({cfg.v_ref, delta}, vehicle);
}

void TrackerController::reset(const Scenario & scenario, std::uint64_t) { sc_ = &scenario; }

ControlResult TrackerController::act(const Observation & obs)
{
  ControlResult r;
  r.u = pure_pursuit(sc_->route, obs.observed, cfg_, sc_->config.vehicle);
  return r;
}

void ScriptedExpert::reset(const Scenario & scenario, std::uint64_t seed)
{
  sc_ = &scenario;
  std::mt19937_64 rng(mix_seed(seed, 0xe7e27ULL));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  v_pref_ = cfg_.v_ref * (1.0 + cfg_.speed_jitter * u(rng));
  lookahead_ = cfg_.lookahead * (1.0 + cfg_.lookahead_jitter * u(rng));
}

ControlResult ScriptedExpert::act(const Observation & obs)
{
  const double cone = cfg_.front_cone_deg * M_PI / 180.0;
  double front = std::numeric_limits<double>::infinity();
  for (const auto & r : obs.rays) {
    if (std::abs(r.angle) <= cone) front = std::min(front, r.distance);
  }
  const double factor = std::clamp(front / cfg_.slow_distance, cfg_.min_speed_factor, 1.0);
  PursuitConfig pc{v_pref_ * factor, lookahead_, cfg_.steer_gain};
  ControlResult res;
  res.u = pure_pursuit(sc_->route, obs.world.ego, pc, sc_->config.vehicle);
  return res;
}

ControlResult ReplayController::act(const Observation &)
{
  ControlResult r;
  if (k_ < seq_.size()) {
    r.u = seq_[k_++];
  } else {
    r.u = {0.0, 0.0};
    r.flagged = true;
    r.flag = "replay exhausted";
  }
  return r;
}

nlohmann::json EpisodeTrace::header_json() const
{
  return {{"kind", "episode"},
          {"method", method},
          {"seed", seed},
          {"steps", steps.size()},
          {"reached_goal", reached_goal},
          {"crashed", crashed},
          {"crash_cause", to_string(crash_cause)},
          {"crash_time", crash_time},
          {"end_time", end_time},
          {"timed_out", timed_out},
          {"error", error}};
}

std::string EpisodeTrace::to_jsonl() const
{
  std::ostringstream os;
  os << header_json().dump() << "\n";
  for (const auto & s : steps) {
    nlohmann::json j{{"step", s.step},
                     {"t", s.t},
                     {"ego", {s.ego.x, s.ego.y, s.ego.rho}},
                     {"speed", s.speed},
                     {"delta", s.delta},
                     {"u", {s.u.v_cmd, s.u.delta_cmd}},
                     {"flagged", s.flagged}};
    if (!s.flag.empty()) j["flag"] = s.flag;
    if (!s.log.is_null()) j["log"] = s.log;
    os << j.dump() << "\n";
  }
  return os.str();
}

SimSession::SimSession(
  std::shared_ptr<const Scenario> scenario, const SimSettings & sim, std::uint64_t seed, AugmentedMemory * record)
: scenario_(std::move(scenario)),
  sim_(sim),
  seed_(seed),
  record_(record),
  world_(build_scenario(scenario_)),
  grid_(make_grid(sim.grid, world_.ego, world_.time)),
  memory_(sim.memory_capacity),
  last_u_{world_.ego_speed, world_.ego_delta}
{
  sim_.grid.validate();
  limit_ = sim_.time_limit > 0.0 ? sim_.time_limit : scenario_->config.episode_time_limit;
}

Observation SimSession::sense()
{
  const ScenarioConfig & cfg = scenario_->config;
  const double t = world_.time;
  rays_ = cast_rays(world_, cfg.fov_deg, cfg.n_rays, cfg.max_range);
  grid_ = recenter_if_needed(grid_, world_.ego, sim_.grid);
  grid_ = update_grid(grid_, rays_, world_.ego, sim_.grid, cfg.max_range);
  grid_.timestamp = t;
  q_ = std::make_shared<const OccupancyGrid>(quantize_grid(grid_));
  MemoryRecord rec;
  rec.timestamp = t;
  rec.ego_state = observe_state(world_.ego, cfg.vehicle, mix_seed(seed_, world_.step));
  rec.control = last_u_;
  rec.grid = q_;
  rec.speed = world_.ego_speed;
  memory_.insert(rec);
  if (record_) record_->insert(rec);
  observed_ = rec.ego_state;
  return Observation{world_, rays_, q_, memory_, observed_, world_.ego_speed, t, last_u_, sim_.dt};
}

bool SimSession::advance(const ControlInput & u)
{
  world_ = step_world(world_, u, sim_.dt);
  last_u_ = {world_.ego_speed, world_.ego_delta};
  if (!world_.crashed && reached_goal(world_)) reached_ = true;
  if (!world_.crashed && !reached_ && world_.time >= limit_ - 1e-9) timed_out_ = true;
  return ended();
}

EpisodeTrace run_episode(
  std::shared_ptr<const Scenario> scenario, Controller & controller, const SimSettings & sim, std::uint64_t seed,
  AugmentedMemory * record)
{
  EpisodeTrace tr;
  tr.method = controller.name();
  tr.seed = seed;
  controller.reset(*scenario, seed);
  SimSession session(scenario, sim, seed, record);

  while (true) {
    const Observation obs = session.sense();
    const WorldState & world = session.world();
    ControlResult res;
    try {
      res = controller.act(obs);
    } catch (const std::exception & e) {
      tr.error = e.what();
      tr.end_time = world.time;
      break;
    }
    StepRecord sr;
    sr.step = world.step;
    sr.t = world.time;
    sr.ego = world.ego;
    sr.speed = world.ego_speed;
    sr.delta = world.ego_delta;
    sr.u = res.u;
    sr.flagged = res.flagged;
    sr.flag = res.flag;
    sr.log = std::move(res.log);
    tr.steps.push_back(std::move(sr));

    const bool done = session.advance(res.u);
    tr.end_time = session.world().time;
    if (done) {
      tr.crashed = session.crashed();
      tr.crash_cause = session.world().crash_cause;
      tr.crash_time = session.world().crash_time;
      tr.reached_goal = session.reached();
      tr.timed_out = session.timed_out();
      break;
    }
  }
  return tr;
}

Polyline mean_path(const Polyline & route, const std::vector<EpisodeTrace> & demos, double spacing)
{
  if (demos.empty()) return route;
  struct Track {
    std::vector<double> s;
    std::vector<Vec2> p;
  };
  std::vector<Track> tracks;
  for (const auto & d : demos) {
    Track t;
    double s_max = -1e300;
    for (const auto & st : d.steps) {
      const Vec2 p{st.ego.x, st.ego.y};
      const double s = route.project(p).s;
      if (s <= s_max) continue;  // keep the arc-length sequence increasing
      s_max = s;
      t.s.push_back(s);
      t.p.push_back(p);
    }
    if (t.s.size() >= 2) tracks.push_back(std::move(t));
  }
  if (tracks.empty()) return route;
  std::vector<Vec2> out;
  const int n = static_cast<int>(std::floor(route.length() / spacing));
  for (int k = 0; k <= n; ++k) {
    const double s = k * spacing;
    Vec2 acc{0.0, 0.0};
    int cnt = 0;
    for (const auto & t : tracks) {
      if (s < t.s.front() || s > t.s.back()) continue;
      const size_t i = static_cast<size_t>(std::upper_bound(t.s.begin(), t.s.end(), s) - t.s.begin());
      const size_t hi = std::min(i, t.s.size() - 1);
      const size_t lo = hi == 0 ? 0 : hi - 1;
      const double f = t.s[hi] > t.s[lo] ? (s - t.s[lo]) / (t.s[hi] - t.s[lo]) : 0.0;
      acc = acc + (t.p[lo] + f * (t.p[hi] - t.p[lo]));
      ++cnt;
    }
    if (cnt > 0) out.push_back((1.0 / cnt) * acc);
  }
  if (out.size() < 2) return route;
  return Polyline(out);
}

}  // namespace scenenmpc

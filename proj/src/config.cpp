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

#include "scenenmpc/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "scenenmpc/fixtures.hpp"

namespace scenenmpc {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Field lists. Each struct is visited as v("key", member) in file order.

template <class V> void fields(V & v, VehicleParams & x)
{
  v("wheelbase_L", x.wheelbase_L);
  v("delta_max", x.delta_max);
  v("v_min", x.v_min);
  v("v_max", x.v_max);
  v("accel_max", x.accel_max);
  v("state_noise_sigma", x.state_noise_sigma);
  v("length", x.length);
  v("width", x.width);
}

template <class V> void fields(V & v, TrafficConfig & x)
{
  v("length", x.length);
  v("width", x.width);
  v("follow_gap", x.follow_gap);
  v("min_gap", x.min_gap);
  v("lateral_speed", x.lateral_speed);
  v("lane_change_rate", x.lane_change_rate);
  v("brake_rate", x.brake_rate);
  v("brake_duration", x.brake_duration);
  v("spawn_clearance", x.spawn_clearance);
}

template <class V> void fields(V & v, ScenarioConfig & x)
{
  v("kind", x.kind);
  v("fov_deg", x.fov_deg);
  v("n_traffic", x.n_traffic);
  v("v_max", x.v_max);
  v("v_min", x.v_min);
  v("accel_max", x.accel_max);
  v("straight_road_fraction", x.straight_road_fraction);
  v("mean_curve_radius_deg", x.mean_curve_radius_deg);
  v("route", x.route);
  v("rng_seed", x.rng_seed);
  v("road_length", x.road_length);
  v("segment_length", x.segment_length);
  v("n_lanes", x.n_lanes);
  v("lane_width", x.lane_width);
  v("curbs", x.curbs);
  v("n_rays", x.n_rays);
  v("max_range", x.max_range);
  v("initial_speed", x.initial_speed);
  v("initial_lateral_offset", x.initial_lateral_offset);
  v("initial_heading_offset", x.initial_heading_offset);
  v("stall_fraction", x.stall_fraction);
  v("stall_duration", x.stall_duration);
  v("goal_tolerance", x.goal_tolerance);
  v("episode_time_limit", x.episode_time_limit);
  v("static_obstacles", x.static_obstacles);
  v("traffic", x.traffic);
  v("vehicle", x.vehicle);
}

template <class V> void fields(V & v, GridConfig & x)
{
  v("size_m", x.size_m);
  v("resolution", x.resolution);
  v("decay_factor", x.decay_factor);
  v("recenter_threshold", x.recenter_threshold);
  v("eta", x.eta);
}

template <class V> void fields(V & v, SimSettings & x)
{
  v("dt", x.dt);
  v("grid", x.grid);
  v("time_limit", x.time_limit);
  v("memory_capacity", x.memory_capacity);
}

template <class V> void fields(V & v, ExpertConfig & x)
{
  v("v_ref", x.v_ref);
  v("speed_jitter", x.speed_jitter);
  v("lookahead", x.lookahead);
  v("lookahead_jitter", x.lookahead_jitter);
  v("steer_gain", x.steer_gain);
  v("slow_distance", x.slow_distance);
  v("min_speed_factor", x.min_speed_factor);
  v("front_cone_deg", x.front_cone_deg);
}

template <class V> void fields(V & v, ConvSpec & x)
{
  v("filters", x.filters);
  v("kernel", x.kernel);
  v("stride", x.stride);
}

template <class V> void fields(V & v, NetConfig & x)
{
  v("grid_cells", x.grid_cells);
  v("downsample", x.downsample);
  v("frames", x.frames);
  v("tau_o", x.tau_o);
  v("conv1", x.conv1);
  v("conv2", x.conv2);
  v("state_hidden", x.state_hidden);
  v("ref_hidden", x.ref_hidden);
  v("fc1", x.fc1);
  v("fc2", x.fc2);
  v("branch_hidden", x.branch_hidden);
  v("dropout", x.dropout);
  v("dt_o", x.dt_o);
  v("pos_scale", x.pos_scale);
  v("speed_scale", x.speed_scale);
  v("head_init", x.head_init);
}

template <class V> void fields(V & v, PursuitConfig & x)
{
  v("v_ref", x.v_ref);
  v("lookahead", x.lookahead);
  v("steer_gain", x.steer_gain);
}

template <class V> void fields(V & v, PolicyInputConfig & x)
{
  v("feedforward", x.feedforward);
  v("ref_min_speed", x.ref_min_speed);
  v("hold_applied_control", x.hold_applied_control);
}

template <class V> void fields(V & v, TrainConfig & x)
{
  v("gamma", x.gamma);
  v("K1", x.K1);
  v("K2", x.K2);
  v("alpha1", x.alpha1);
  v("alpha2", x.alpha2);
  v("batch_size", x.batch_size);
  v("epochs", x.epochs);
  v("lr", x.lr);
  v("l2_lambda", x.l2_lambda);
  v("tau_i", x.tau_i);
  v("stride", x.stride);
  v("tau_o", x.tau_o);
  v("output_dt", x.output_dt);
  v("rng_seed", x.rng_seed);
  v("fit_steps", x.fit_steps);
  v("probe_batch", x.probe_batch);
  v("target_refresh", x.target_refresh);
  v("n_perturbed", x.n_perturbed);
  v("perturb_sigma", x.perturb_sigma);
  v("w0", x.w0.w);
  v("literal_w_gradient", x.literal_w_gradient);
  v("checkpoint_every", x.checkpoint_every);
  v("policy", x.policy);
}

template <class V> void fields(V & v, SolverConfig & x)
{
  v("max_iters", x.max_iters);
  v("grad_tol", x.grad_tol);
  v("wolfe_c1", x.wolfe_c1);
  v("wolfe_c2", x.wolfe_c2);
  v("max_line_search", x.max_line_search);
  v("bound_snap", x.bound_snap);
}

template <class V> void fields(V & v, NmpcConfig & x)
{
  v("Q", x.Q);
  v("R", x.R);
  v("S", x.S);
  v("tau_o", x.tau_o);
  v("dt", x.dt);
  v("du_min", x.du_min);
  v("du_max", x.du_max);
  v("e_min", x.e_min);
  v("e_max", x.e_max);
  v("penalty_mu", x.penalty_mu);
  v("terminal_weight", x.terminal_weight);
  v("predict_with_compensation", x.predict_with_compensation);
  v("control_relative_to_feedforward", x.control_relative_to_feedforward);
  v("solver", x.solver);
}

template <class V> void fields(V & v, DwaConfig & x)
{
  v("v_samples", x.v_samples);
  v("delta_min", x.delta_min);
  v("delta_max", x.delta_max);
  v("delta_samples", x.delta_samples);
  v("horizon", x.horizon);
  v("sim_dt", x.sim_dt);
  v("w_heading", x.w_heading);
  v("w_clearance", x.w_clearance);
  v("w_velocity", x.w_velocity);
  v("lookahead", x.lookahead);
  v("clearance_cap", x.clearance_cap);
  v("margin", x.margin);
}

template <class V> void fields(V & v, ViewConfig & x)
{
  v("side", x.side);
  v("ahead", x.ahead);
  v("behind", x.behind);
  v("half_width", x.half_width);
  v("frames", x.frames);
  v("gap", x.gap);
}

template <class V> void fields(V & v, IncrementConfig & x)
{
  v("steer", x.steer);
  v("speed_fraction", x.speed_fraction);
  v("brake_factor", x.brake_factor);
}

template <class V> void fields(V & v, PolicyNetConfig & x)
{
  v("frames", x.frames);
  v("side", x.side);
  v("conv1", x.conv1);
  v("conv2", x.conv2);
  v("hidden", x.hidden);
  v("n_scalar", x.n_scalar);
  v("n_out", x.n_out);
}

template <class V> void fields(V & v, BcConfig & x)
{
  v("net", x.net);
  v("view", x.view);
  v("increments", x.increments);
  v("label_threshold", x.label_threshold);
  v("label_horizon", x.label_horizon);
  v("epochs", x.epochs);
  v("batch_size", x.batch_size);
  v("lr", x.lr);
  v("l2_lambda", x.l2_lambda);
  v("val_fraction", x.val_fraction);
  v("seed", x.seed);
}

template <class V> void fields(V & v, DqnRewardWeights & x)
{
  v("progress", x.progress);
  v("velocity", x.velocity);
  v("clearance", x.clearance);
}

template <class V> void fields(V & v, DqnConfig & x)
{
  v("net", x.net);
  v("view", x.view);
  v("increments", x.increments);
  v("reward", x.reward);
  v("stall_speed_fraction", x.stall_speed_fraction);
  v("episodes", x.episodes);
  v("max_steps", x.max_steps);
  v("replay_capacity", x.replay_capacity);
  v("batch_size", x.batch_size);
  v("gamma", x.gamma);
  v("lr", x.lr);
  v("l2_lambda", x.l2_lambda);
  v("eps_start", x.eps_start);
  v("eps_end", x.eps_end);
  v("eps_decay", x.eps_decay);
  v("warmup", x.warmup);
  v("train_every", x.train_every);
  v("target_sync", x.target_sync);
  v("huber_delta", x.huber_delta);
  v("seed", x.seed);
  v("snapshot_path", x.snapshot_path);
}

template <class V> void fields(V & v, EvalSettings & x)
{
  v("trials", x.trials);
  v("seed", x.seed);
  v("gt_demos", x.gt_demos);
  v("gt_seed", x.gt_seed);
}

template <class V> void fields(V & v, BridgeConfig & x)
{
  v("bind", x.bind);
  v("port", x.port);
  v("rate_hz", x.rate_hz);
  v("watchdog_s", x.watchdog_s);
  v("max_queue", x.max_queue);
  v("send_grids", x.send_grids);
}

template <class V> void fields(V & v, RecordSettings & x)
{
  v("episodes", x.episodes);
  v("seed", x.seed);
}

template <class V> void fields(V & v, PathSettings & x)
{
  v("dataset", x.dataset);
  v("reward", x.reward);
  v("phase1", x.phase1);
  v("dynamics", x.dynamics);
  v("dqn", x.dqn);
  v("bc", x.bc);
  v("reports", x.reports);
}

// ---------------------------------------------------------------------------
// Value conversion

namespace {

template <class T, class = void> struct has_fields : std::false_type {};

struct Probe {
  template <class U> void operator()(const char *, U &) {}
};

template <class T>
struct has_fields<T, std::void_t<decltype(fields(std::declval<Probe &>(), std::declval<T &>()))>> : std::true_type {};

template <class T> struct is_std_array : std::false_type {};
template <class T, size_t N> struct is_std_array<std::array<T, N>> : std::true_type {};
template <class T> struct is_vector : std::false_type {};
template <class T> struct is_vector<std::vector<T>> : std::true_type {};

[[noreturn]] void bad(const std::string & path, const std::string & what)
{
  throw ConfigError(path + ": " + what);
}

template <class T> json write_value(const T & x);
template <class T> void read_value(const json & j, T & x, const std::string & path);

struct Writer {
  json out = json::object();
  template <class T> void operator()(const char * key, T & x) { out[key] = write_value(x); }
};

struct Reader {
  const json & in;
  std::string path;
  std::vector<std::string> seen;
  template <class T> void operator()(const char * key, T & x)
  {
    seen.emplace_back(key);
    const auto it = in.find(key);
    if (it != in.end()) read_value(*it, x, path.empty() ? std::string(key) : path + "." + key);
  }
  void finish() const
  {
    for (const auto & [k, _] : in.items()) {
      if (std::find(seen.begin(), seen.end(), k) == seen.end()) bad(path.empty() ? k : path + "." + k, "unknown key");
    }
  }
};

template <class T> json write_value(const T & x)
{
  if constexpr (has_fields<T>::value) {
    Writer w;
    fields(w, const_cast<T &>(x));
    return w.out;
  } else if constexpr (std::is_same_v<T, ScenarioKind>) {
    return to_string(x);
  } else if constexpr (std::is_same_v<T, Vec2>) {
    return json::array({x.x, x.y});
  } else if constexpr (is_std_array<T>::value || is_vector<T>::value) {
    json a = json::array();
    for (const auto & e : x) a.push_back(write_value(e));
    return a;
  } else {
    return json(x);
  }
}

template <class T> void read_value(const json & j, T & x, const std::string & path)
{
  if constexpr (has_fields<T>::value) {
    if (!j.is_object()) bad(path, "expected an object");
    Reader r{j, path, {}};
    fields(r, x);
    r.finish();
  } else if constexpr (std::is_same_v<T, ScenarioKind>) {
    if (!j.is_string()) bad(path, "expected a string");
    try {
      x = scenario_kind_from_string(j.get<std::string>());
    } catch (const std::exception & e) {
      bad(path, e.what());
    }
  } else if constexpr (std::is_same_v<T, Vec2>) {
    if (!j.is_array() || j.size() != 2) bad(path, "expected [x, y]");
    read_value(j[0], x.x, path + "[0]");
    read_value(j[1], x.y, path + "[1]");
  } else if constexpr (is_std_array<T>::value) {
    if (!j.is_array() || j.size() != x.size()) bad(path, "expected an array of " + std::to_string(x.size()));
    for (size_t i = 0; i < x.size(); ++i) read_value(j[i], x[i], path + "[" + std::to_string(i) + "]");
  } else if constexpr (is_vector<T>::value) {
    if (!j.is_array()) bad(path, "expected an array");
    x.assign(j.size(), typename T::value_type{});
    for (size_t i = 0; i < j.size(); ++i) read_value(j[i], x[i], path + "[" + std::to_string(i) + "]");
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) bad(path, "expected true or false");
    x = j.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) bad(path, "expected a string");
    x = j.get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) bad(path, "expected a number");
    x = j.get<T>();
    if (!std::isfinite(x)) bad(path, "expected a finite number");
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!j.is_number_unsigned()) bad(path, "expected a non-negative integer");
    x = j.get<T>();
  } else {
    static_assert(std::is_integral_v<T>);
    if (!j.is_number_integer()) bad(path, "expected an integer");
    x = j.get<T>();
  }
}

}  // namespace

// ---------------------------------------------------------------------------

ScenarioConfig scenario_from_base(const std::string & name)
{
  if (name == "straight_obstacle") return straight_obstacle_fixture();
  if (name == "straight_empty") return straight_empty_fixture();
  return scenario_preset(scenario_kind_from_string(name));
}

AppConfig::AppConfig() : scenario(scenario_from_base("straight_obstacle")) { resolve(); }

void AppConfig::resolve()
{
  auto check = [](bool ok, const std::string & msg) {
    if (!ok) throw ConfigError(msg);
  };
  try {
    scenario.validate();
    sim.grid.validate();
    net.vehicle = scenario.vehicle;
    const NmpcConfig box = NmpcConfig::for_vehicle(scenario.vehicle);
    nmpc.u_min = box.u_min;
    nmpc.u_max = box.u_max;
    net.validate();
    train.validate();
    nmpc.validate();
    dwa.validate();
    bc.validate();
    dqn.validate();
  } catch (const ConfigError &) {
    throw;
  } catch (const std::exception & e) {
    throw ConfigError(e.what());
  }
  check(net.tau_o == train.tau_o && net.tau_o == nmpc.tau_o, "net.tau_o, train.tau_o and nmpc.tau_o must agree");
  check(net.dt_o == train.output_dt && net.dt_o == nmpc.dt && net.dt_o == sim.dt,
        "net.dt_o, train.output_dt, nmpc.dt and sim.dt must agree");
  const double slots = train.tau_i / train.stride;
  check(std::abs(slots - std::round(slots)) < 1e-9 && net.frames == static_cast<int>(std::round(slots)) + 1,
        "net.frames must equal train.tau_i / train.stride + 1");
  check(net.grid_cells == sim.grid.cells(), "net.grid_cells must equal the grid side in cells");
  check(dqn.net.n_out == kDiscreteActions, "dqn.net.n_out must be 8");
  check(bc.net.n_out == kBcCommands, "bc.net.n_out must be 4");
  check(bc.net.frames == bc.view.frames && bc.net.side == bc.view.side, "bc.net and bc.view disagree");
  check(dqn.net.frames == dqn.view.frames && dqn.net.side == dqn.view.side, "dqn.net and dqn.view disagree");
  check(record.episodes >= 0 && eval.trials >= 0 && eval.gt_demos >= 0, "counts must be non-negative");
  check(bridge.rate_hz > 0.0 && bridge.watchdog_s >= 0.0 && bridge.max_queue > 0 && bridge.port >= 0 &&
          bridge.port < 65536,
        "bad bridge settings");
}

nlohmann::json AppConfig::to_json() const
{
  json sc = write_value(scenario);
  json out = json::object();
  out["scenario"] = json::object({{"base", scenario_base}});
  for (auto & [k, v] : sc.items()) out["scenario"][k] = v;
  out["sim"] = write_value(sim);
  out["expert"] = write_value(expert);
  out["net"] = write_value(net);
  out["train"] = write_value(train);
  out["nmpc"] = write_value(nmpc);
  out["dwa"] = write_value(dwa);
  out["bc"] = write_value(bc);
  out["dqn"] = write_value(dqn);
  out["eval"] = write_value(eval);
  out["bridge"] = write_value(bridge);
  out["record"] = write_value(record);
  out["paths"] = write_value(paths);
  out["init_seed"] = init_seed;
  return out;
}

AppConfig AppConfig::from_json(const nlohmann::json & j)
{
  if (!j.is_object()) throw ConfigError("config: expected an object");
  static const std::vector<std::string> sections{"scenario", "sim",    "expert", "net",    "train",
                                                 "nmpc",     "dwa",    "bc",     "dqn",    "eval",
                                                 "bridge",   "record", "paths",  "init_seed"};
  for (const auto & [k, _] : j.items()) {
    if (std::find(sections.begin(), sections.end(), k) == sections.end()) bad(k, "unknown key");
  }
  AppConfig c;
  if (j.contains("scenario")) {
    const json & s = j["scenario"];
    if (!s.is_object()) bad("scenario", "expected an object");
    if (s.contains("base")) read_value(s["base"], c.scenario_base, "scenario.base");
    try {
      c.scenario = scenario_from_base(c.scenario_base);
    } catch (const std::exception & e) {
      bad("scenario.base", e.what());
    }
    Reader r{s, "scenario", {"base"}};
    fields(r, c.scenario);
    r.finish();
  }
  auto section = [&](const char * key, auto & x) {
    if (j.contains(key)) read_value(j[key], x, key);
  };
  section("sim", c.sim);
  section("expert", c.expert);
  section("net", c.net);
  section("train", c.train);
  section("nmpc", c.nmpc);
  section("dwa", c.dwa);
  section("bc", c.bc);
  section("dqn", c.dqn);
  section("eval", c.eval);
  section("bridge", c.bridge);
  section("record", c.record);
  section("paths", c.paths);
  section("init_seed", c.init_seed);
  c.resolve();
  return c;
}

BenchmarkConfig AppConfig::benchmark() const
{
  BenchmarkConfig b;
  b.trials = eval.trials;
  b.seed = eval.seed;
  b.gt_demos = eval.gt_demos;
  b.gt_seed = eval.gt_seed;
  b.expert = expert;
  b.sim = sim;
  return b;
}

AppConfig load_config(const std::string & path)
{
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error & e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return AppConfig::from_json(j);
}

std::string dump_config(const AppConfig & cfg) { return cfg.to_json().dump(2) + "\n"; }

void apply_override(nlohmann::json & doc, const std::string & assignment)
{
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json * node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key part");
    parts.push_back(part);
  }
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
  (*node)[parts.back()] = value;
}

}  // namespace scenenmpc

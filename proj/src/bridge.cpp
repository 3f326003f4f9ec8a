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

#include "scenenmpc/bridge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include "scenenmpc/occupancy_grid.hpp"

namespace scenenmpc {

namespace bi = boost::archive::iterators;

std::string base64_encode(const std::vector<std::uint8_t> & bytes)
{
  using It = bi::base64_from_binary<bi::transform_width<std::vector<std::uint8_t>::const_iterator, 6, 8>>;
  std::string out(It(bytes.begin()), It(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string & text)
{
  if (text.size() % 4 != 0) throw ProtocolError("base64: length is not a multiple of 4");
  size_t pad = 0;
  while (pad < 2 && pad < text.size() && text[text.size() - 1 - pad] == '=') ++pad;
  for (size_t i = 0; i + pad < text.size(); ++i) {
    const char c = text[i];
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/')) {
      throw ProtocolError("base64: invalid character");
    }
  }
  std::string body = text.substr(0, text.size() - pad);
  body.append(pad, 'A');
  using It = bi::transform_width<bi::binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::vector<std::uint8_t> out(It(body.begin()), It(body.end()));
  out.resize(out.size() - pad);
  return out;
}

namespace {

const char * action_name(SessionControl::Action a)
{
  switch (a) {
    case SessionControl::Action::start: return "start";
    case SessionControl::Action::stop: return "stop";
    case SessionControl::Action::reset: return "reset";
    case SessionControl::Action::record_start: return "record_start";
    case SessionControl::Action::record_stop: return "record_stop";
  }
  return "start";
}

double number(const nlohmann::json & j, const char * key)
{
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) throw ProtocolError(std::string("field '") + key + "' must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ProtocolError(std::string("field '") + key + "' must be finite");
  return v;
}

}  // namespace

ClientMessage decode_client_message(const std::string & text)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error & e) {
    throw ProtocolError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("message must be an object");
  if (!j.contains("v") || j["v"] != kProtocolVersion) throw ProtocolError("unsupported protocol version");
  if (!j.contains("kind") || !j["kind"].is_string()) throw ProtocolError("missing kind");
  const std::string kind = j["kind"];
  const double t = j.contains("t") ? number(j, "t") : 0.0;
  if (kind == "control_command") {
    ControlCommand c;
    c.t = t;
    const bool abs = j.contains("v_cmd") || j.contains("delta_cmd");
    const bool inc = j.contains("dv") || j.contains("ddelta");
    if (abs == inc) throw ProtocolError("control_command needs either v_cmd/delta_cmd or dv/ddelta");
    if (abs) {
      c.absolute = ControlInput{number(j, "v_cmd"), number(j, "delta_cmd")};
    } else {
      c.dv = j.contains("dv") ? number(j, "dv") : 0.0;
      c.ddelta = j.contains("ddelta") ? number(j, "ddelta") : 0.0;
    }
    return c;
  }
  if (kind == "session_control") {
    SessionControl s;
    s.t = t;
    if (!j.contains("action") || !j["action"].is_string()) throw ProtocolError("session_control needs an action");
    const std::string a = j["action"];
    if (a == "start") {
      s.action = SessionControl::Action::start;
    } else if (a == "stop") {
      s.action = SessionControl::Action::stop;
    } else if (a == "reset") {
      s.action = SessionControl::Action::reset;
    } else if (a == "record_start") {
      s.action = SessionControl::Action::record_start;
    } else if (a == "record_stop") {
      s.action = SessionControl::Action::record_stop;
    } else {
      throw ProtocolError("unknown session action '" + a + "'");
    }
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) throw ProtocolError("seed must be a non-negative integer");
      s.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("record")) {
      if (!j["record"].is_boolean()) throw ProtocolError("record must be a boolean");
      s.record = j["record"];
    }
    return s;
  }
  throw ProtocolError("unknown message kind '" + kind + "'");
}

std::string encode(const ControlCommand & c)
{
  nlohmann::json j{{"v", kProtocolVersion}, {"kind", "control_command"}, {"t", c.t}};
  if (c.absolute) {
    j["v_cmd"] = c.absolute->v_cmd;
    j["delta_cmd"] = c.absolute->delta_cmd;
  } else {
    j["dv"] = c.dv;
    j["ddelta"] = c.ddelta;
  }
  return j.dump();
}

std::string encode(const SessionControl & s)
{
  nlohmann::json j{{"v", kProtocolVersion}, {"kind", "session_control"}, {"t", s.t}, {"action", action_name(s.action)}};
  if (s.seed) j["seed"] = *s.seed;
  if (s.record) j["record"] = true;
  return j.dump();
}

std::string encode_state_update(const WorldState & w, const ControlInput & applied, bool braking, bool recording,
                                bool running)
{
  return nlohmann::json{{"v", kProtocolVersion},
                        {"kind", "state_update"},
                        {"t", w.time},
                        {"step", w.step},
                        {"ego", {w.ego.x, w.ego.y, w.ego.rho}},
                        {"speed", w.ego_speed},
                        {"delta", w.ego_delta},
                        {"u", {applied.v_cmd, applied.delta_cmd}},
                        {"crashed", w.crashed},
                        {"reached", w.scenario ? reached_goal(w) : false},
                        {"braking", braking},
                        {"recording", recording},
                        {"running", running}}
    .dump();
}

std::string encode_grid_update(const OccupancyGrid & grid, double t, std::uint64_t step)
{
  return nlohmann::json{{"v", kProtocolVersion}, {"kind", "grid_update"}, {"t", t},       {"step", step},
                        {"rows", grid.rows},      {"cols", grid.cols},      {"grid", base64_encode(serialize_grid(grid))}}
    .dump();
}

std::string encode_error(const std::string & msg, double t)
{
  return nlohmann::json{{"v", kProtocolVersion}, {"kind", "error"}, {"t", t}, {"msg", msg}}.dump();
}

// ---------------------------------------------------------------------------

BridgeCore::BridgeCore(const ScenarioConfig & scenario, const SimSettings & sim, const BridgeConfig & cfg,
                       std::uint64_t seed)
: scenario_(make_scenario(scenario)), sim_(sim), cfg_(cfg), seed_(seed)
{
  if (!(cfg.rate_hz > 0.0) || !(cfg.watchdog_s >= 0.0)) throw std::invalid_argument("bridge: bad rate or watchdog");
  reset(seed, false);
}

void BridgeCore::reset(std::uint64_t seed, bool record)
{
  close_recording();
  seed_ = seed;
  if (record) {
    rec_ = std::make_unique<TeleopRecording>();
    rec_->seed = seed;
    rec_->scenario = scenario_;
    rec_->trace.method = "teleop";
    rec_->trace.seed = seed;
  }
  session_ = std::make_unique<SimSession>(scenario_, sim_, seed, rec_ ? &rec_->memory : nullptr);
  recording_ = record;
  waiting_ = record;
  command_.reset();
  last_command_t_ = -1e300;
  braking_ = false;
  applied_ = {session_->world().ego_speed, session_->world().ego_delta};
}

void BridgeCore::close_recording()
{
  if (rec_) {
    rec_->trace.end_time = session_->world().time;
    rec_->trace.crashed = session_->crashed();
    rec_->trace.crash_cause = session_->world().crash_cause;
    rec_->trace.crash_time = session_->world().crash_time;
    rec_->trace.reached_goal = session_->reached();
    rec_->trace.timed_out = session_->timed_out();
    session_->detach_record();
    done_.push_back(std::move(*rec_));
    rec_.reset();
  }
  recording_ = false;
}

void BridgeCore::submit(const ClientMessage & m)
{
  if (const auto * c = std::get_if<ControlCommand>(&m)) {
    const VehicleParams & vp = scenario_->config.vehicle;
    ControlInput u;
    if (c->absolute) {
      u = *c->absolute;
    } else {
      u = command_.value_or(applied_);
      u.v_cmd += c->dv;
      u.delta_cmd += c->ddelta;
    }
    command_ = clamp_control(u, vp);
    last_command_t_ = session_->world().time;
    waiting_ = false;
    return;
  }
  const auto & s = std::get<SessionControl>(m);
  switch (s.action) {
    case SessionControl::Action::start: running_ = true; break;
    case SessionControl::Action::stop: running_ = false; break;
    case SessionControl::Action::reset: reset(s.seed.value_or(seed_), s.record); break;
    case SessionControl::Action::record_start: reset(s.seed.value_or(seed_), true); break;
    case SessionControl::Action::record_stop: close_recording(); break;
  }
}

BridgeCore::Tick BridgeCore::tick()
{
  Tick out;
  if (running_ && !waiting_ && !session_->ended()) {
    const Observation obs = session_->sense();
    const WorldState & w = session_->world();
    const bool fresh = command_ && w.time - last_command_t_ <= cfg_.watchdog_s + 1e-9;
    braking_ = !fresh;
    applied_ = fresh ? *command_ : clamp_control({0.0, 0.0}, scenario_->config.vehicle);
    if (rec_) {
      StepRecord sr;
      sr.step = w.step;
      sr.t = w.time;
      sr.ego = w.ego;
      sr.speed = w.ego_speed;
      sr.delta = w.ego_delta;
      sr.u = applied_;
      if (braking_) {
        sr.flagged = true;
        sr.flag = "watchdog_brake";
      }
      rec_->trace.steps.push_back(std::move(sr));
      rec_->applied.push_back(applied_);
    }
    const GridPtr grid = obs.grid;
    const double t_grid = obs.t;
    const std::uint64_t step_grid = w.step;
    const bool ended = session_->advance(applied_);
    out.stepped = true;
    if (ended && rec_) close_recording();
    out.messages.push_back(encode_state_update(session_->world(), applied_, braking_, recording_, running_));
    if (cfg_.send_grids) out.messages.push_back(encode_grid_update(*grid, t_grid, step_grid));
  } else {
    out.messages.push_back(encode_state_update(session_->world(), applied_, braking_, recording_, running_));
  }
  return out;
}

std::vector<TeleopRecording> BridgeCore::take_recordings()
{
  std::vector<TeleopRecording> out;
  out.swap(done_);
  return out;
}

EpisodeTrace replay_recording(const TeleopRecording & rec, const SimSettings & sim, AugmentedMemory * memory)
{
  if (!rec.scenario) throw std::invalid_argument("replay: recording has no scenario");
  if (rec.applied.empty()) {
    EpisodeTrace tr;
    tr.method = "teleop";
    tr.seed = rec.seed;
    return tr;
  }
  ReplayController ctl(rec.applied, "teleop");
  SimSettings s = sim;
  // a recording stopped mid-episode ends the replay at the same time
  if (!rec.trace.crashed && !rec.trace.reached_goal && !rec.trace.timed_out) s.time_limit = rec.trace.end_time;
  return run_episode(rec.scenario, ctl, s, rec.seed, memory);
}

bool traces_identical(const EpisodeTrace & a, const EpisodeTrace & b, std::string * why)
{
  auto fail = [&](const std::string & m) {
    if (why) *why = m;
    return false;
  };
  if (a.steps.size() != b.steps.size()) {
    return fail("step count " + std::to_string(a.steps.size()) + " vs " + std::to_string(b.steps.size()));
  }
  for (size_t k = 0; k < a.steps.size(); ++k) {
    const auto & x = a.steps[k];
    const auto & y = b.steps[k];
    if (x.step != y.step || x.t != y.t || x.ego.x != y.ego.x || x.ego.y != y.ego.y || x.ego.rho != y.ego.rho ||
        x.speed != y.speed || x.delta != y.delta || x.u.v_cmd != y.u.v_cmd || x.u.delta_cmd != y.u.delta_cmd) {
      return fail("first difference at step " + std::to_string(k));
    }
  }
  if (a.crashed != b.crashed || a.reached_goal != b.reached_goal) return fail("outcome differs");
  return true;
}

}  // namespace scenenmpc

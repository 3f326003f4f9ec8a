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
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenenmpc/augmented_memory.hpp"
#include "scenenmpc/episode.hpp"
#include "scenenmpc/gridsim.hpp"

namespace scenenmpc {

struct BridgeConfig {
  std::string bind = "127.0.0.1";
  int port = 8765;          // 0 picks a free port
  double rate_hz = 20.0;    // wall-clock cadence of the simulation loop
  double watchdog_s = 0.5;  // simulated seconds without a command before the brake engages
  size_t max_queue = 8;     // outbound frames buffered per client before dropping
  bool send_grids = true;
};

// ---------------------------------------------------------------------------
// Wire protocol, version 1. One JSON object per websocket text message:
//   {"v":1, "kind":..., "t":<sim time>, ...}
// server -> client
//   state_update    step, ego [x, y, rho], speed, delta, u [v, delta], crashed,
//                   reached, braking, recording, running
//   grid_update     step, rows, cols, grid (base64 of the OGRD layout)
//   error           msg
// client -> server
//   control_command v_cmd, delta_cmd        absolute command, or
//                   dv, ddelta              increments on the current command
//   session_control action: start | stop | reset | record_start | record_stop,
//                   optional seed, optional record (with reset)

inline constexpr int kProtocolVersion = 1;

class ProtocolError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::string base64_encode(const std::vector<std::uint8_t> & bytes);
std::vector<std::uint8_t> base64_decode(const std::string & text);

struct ControlCommand {
  double t = 0.0;
  std::optional<ControlInput> absolute;
  double dv = 0.0;
  double ddelta = 0.0;
};

struct SessionControl {
  enum class Action { start, stop, reset, record_start, record_stop };
  double t = 0.0;
  Action action = Action::start;
  std::optional<std::uint64_t> seed;
  bool record = false;  // with reset: arm recording for the new episode
};

using ClientMessage = std::variant<ControlCommand, SessionControl>;

ClientMessage decode_client_message(const std::string & text);
std::string encode(const ControlCommand & c);
std::string encode(const SessionControl & s);

std::string encode_state_update(const WorldState & world, const ControlInput & applied, bool braking, bool recording,
                                bool running);
std::string encode_grid_update(const OccupancyGrid & grid, double t, std::uint64_t step);
std::string encode_error(const std::string & msg, double t);

// ---------------------------------------------------------------------------
// Simulation side of the bridge. Deterministic: what it does depends only on
// the order of submitted messages relative to tick() calls.

struct TeleopRecording {
  AugmentedMemory memory{1 << 20};
  EpisodeTrace trace;
  std::vector<ControlInput> applied;  // input of every recorded step
  std::uint64_t seed = 0;
  std::shared_ptr<const Scenario> scenario;
};

class BridgeCore {
public:
  BridgeCore(const ScenarioConfig & scenario, const SimSettings & sim, const BridgeConfig & cfg, std::uint64_t seed);

  void submit(const ClientMessage & m);

  struct Tick {
    std::vector<std::string> messages;
    bool stepped = false;
  };
  // One simulation step (unless stopped, waiting for the first command after a
  // recording reset, or the episode has ended) followed by the broadcasts.
  Tick tick();

  const WorldState & world() const { return session_->world(); }
  bool running() const { return running_; }
  bool recording() const { return recording_; }
  bool braking() const { return braking_; }
  std::uint64_t seed() const { return seed_; }
  const std::shared_ptr<const Scenario> & scenario() const { return scenario_; }
  // Recordings closed by record_stop, episode end or reset.
  std::vector<TeleopRecording> take_recordings();

private:
  void reset(std::uint64_t seed, bool record);
  void close_recording();

  std::shared_ptr<const Scenario> scenario_;
  SimSettings sim_;
  BridgeConfig cfg_;
  std::uint64_t seed_;
  std::unique_ptr<SimSession> session_;
  std::unique_ptr<TeleopRecording> rec_;
  std::vector<TeleopRecording> done_;
  std::optional<ControlInput> command_;
  double last_command_t_ = -1e300;
  bool running_ = true;
  bool waiting_ = false;   // hold after a recording reset until the first command
  bool recording_ = false;
  bool braking_ = false;
  ControlInput applied_;
};

// Offline replay of a recording through run_episode.
EpisodeTrace replay_recording(const TeleopRecording & rec, const SimSettings & sim, AugmentedMemory * memory = nullptr);

// Step-level equality of two traces (poses, speeds, steering, inputs, outcome).
bool traces_identical(const EpisodeTrace & a, const EpisodeTrace & b, std::string * why = nullptr);

}  // namespace scenenmpc

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
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenenmpc/baselines.hpp"
#include "scenenmpc/bridge.hpp"
#include "scenenmpc/dynamics_net.hpp"
#include "scenenmpc/episode.hpp"
#include "scenenmpc/evaluation.hpp"
#include "scenenmpc/gridsim.hpp"
#include "scenenmpc/irl_training.hpp"
#include "scenenmpc/nmpc.hpp"

namespace scenenmpc {

// Unknown keys, wrong value types and inconsistent settings.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RecordSettings {
  int episodes = 20;
  std::uint64_t seed = 100;
};

struct EvalSettings {
  int trials = 10;
  std::uint64_t seed = 500;
  int gt_demos = 10;
  std::uint64_t gt_seed = 1000;
};

struct PathSettings {
  std::string dataset = "run/dataset";
  std::string reward = "run/reward.ckpt";
  std::string phase1 = "run/phase1.ckpt";  // network after the reward-learning fits
  std::string dynamics = "run/dynamics.ckpt";
  std::string dqn = "run/dqn.ckpt";
  std::string bc = "run/bc.ckpt";
  std::string reports = "run/reports";
};

// Every tunable of the pipeline. Files are JSON objects with the sections
// below; a missing key keeps its default, an unknown key is an error.
//
// "scenario" takes a "base" (straight_obstacle, straight_empty, seamless,
// inner_city or highway) whose settings the remaining keys override. The
// network takes its vehicle and the NMPC its input box from scenario.vehicle.
struct AppConfig {
  std::string scenario_base = "straight_obstacle";
  ScenarioConfig scenario;
  SimSettings sim;
  ExpertConfig expert;
  NetConfig net;
  TrainConfig train;
  NmpcConfig nmpc;
  DwaConfig dwa;
  BcConfig bc;
  DqnConfig dqn;
  EvalSettings eval;
  BridgeConfig bridge;
  RecordSettings record;
  PathSettings paths;
  std::uint64_t init_seed = 7;  // network initialisation

  AppConfig();
  // Copies the derived values (vehicle, NMPC box, window sizes) and checks consistency.
  void resolve();

  nlohmann::json to_json() const;
  static AppConfig from_json(const nlohmann::json & j);

  BenchmarkConfig benchmark() const;
  WindowQuery window() const { return {0.0, train.tau_i, train.stride}; }
};

ScenarioConfig scenario_from_base(const std::string & name);

AppConfig load_config(const std::string & path);
std::string dump_config(const AppConfig & cfg);

// Applies "a.b.c=value" to a raw config document. The value is parsed as JSON
// when possible and taken as a string otherwise.
void apply_override(nlohmann::json & doc, const std::string & assignment);

}  // namespace scenenmpc

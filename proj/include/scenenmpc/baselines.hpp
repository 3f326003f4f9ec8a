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

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenenmpc/augmented_memory.hpp"
#include "scenenmpc/dynamics_net.hpp"
#include "scenenmpc/episode.hpp"
#include "scenenmpc/nn/params.hpp"

namespace scenenmpc {

// ---------------------------------------------------------------------------
// Discrete command spaces

enum class DiscreteAction : int {
  accelerate = 0,
  turn_left = 1,
  turn_right = 2,
  no_action = 3,
  brake = 4,
  accel_left = 5,
  accel_right = 6,
  reverse = 7,
};
inline constexpr int kDiscreteActions = 8;
std::string to_string(DiscreteAction a);

enum class BcCommand : int { left = 0, right = 1, accelerate = 2, decelerate = 3 };
inline constexpr int kBcCommands = 4;
std::string to_string(BcCommand c);

struct IncrementConfig {
  double steer = 0.01;          // rad per step
  double speed_fraction = 0.01; // of v_max per step
  double brake_factor = 3.0;    // brake removes this many speed increments
};

// Commands are persistent; every step moves them by one increment and clamps
// to the vehicle box. Left is negative steering.
ControlInput apply_action(const ControlInput & cmd, DiscreteAction a, const IncrementConfig & inc,
                          const VehicleParams & vehicle);
ControlInput apply_command(const ControlInput & cmd, BcCommand c, const IncrementConfig & inc,
                           const VehicleParams & vehicle);

// Argmax with exact ties broken uniformly by `rng`; lowest index when rng is null.
int argmax_tiebreak(const Eigen::Ref<const Eigen::VectorXd> & v, std::mt19937_64 * rng);

// ---------------------------------------------------------------------------
// DWA

struct DwaConfig {
  int v_samples = 5;
  double delta_min = -0.5;
  double delta_max = 0.5;
  int delta_samples = 21;
  double horizon = 1.5;   // s
  double sim_dt = 0.1;    // rollout step
  double w_heading = 1.0;
  double w_clearance = 2.0;
  double w_velocity = 0.5;
  double lookahead = 4.0;      // route point the heading term aims at
  double clearance_cap = 1.0;  // m, clearance score saturates here
  double margin = 0.2;         // m added around the footprint for the collision test

  void validate() const;
};

struct DwaCandidate {
  ControlInput u;
  double heading = 0.0;
  double clearance = 0.0;  // m, capped
  double velocity = 0.0;
  double score = 0.0;
  bool collides = false;
};

struct DwaResult {
  ControlInput u;
  bool flagged = false;
  std::vector<DwaCandidate> candidates;
  int chosen = -1;
};

// Obstacle points in world coordinates from ray returns shorter than max_range.
std::vector<Vec2> ray_points(const std::vector<RayHit> & rays, const VehicleState & ego, double max_range);

// Velocity window [v - a dt, v + a dt] clipped to the vehicle box; steering over
// [delta_min, delta_max]. Each pair is rolled out with the nominal model.
DwaResult dwa_step(const std::vector<Vec2> & obstacles, const VehicleState & ego, double speed, const Polyline & route,
                   const DwaConfig & cfg, const VehicleParams & vehicle, double dt);

class DwaController final : public Controller {
public:
  explicit DwaController(DwaConfig cfg = {}) : cfg_(cfg) {}
  std::string name() const override { return "dwa"; }
  void reset(const Scenario & scenario, std::uint64_t seed) override;
  ControlResult act(const Observation & obs) override;

private:
  DwaConfig cfg_;
  const Scenario * sc_ = nullptr;
};

// ---------------------------------------------------------------------------
// Grid frames for the discrete policies

struct ViewConfig {
  int side = 80;
  double ahead = 10.0;     // m in front of the ego in the view
  double behind = 2.0;
  double half_width = 6.0;
  int frames = 4;
  int gap = 5;             // steps between stacked frames
};

// Ego-frame view of the grid, row 0 farthest ahead, column 0 leftmost.
// Values are the grid beliefs (quantized grids give multiples of 1/127).
std::vector<float> ego_view(const OccupancyGrid & grid, const VehicleState & ego, const ViewConfig & cfg);

// Stack of frames[k], frames[k - gap], ... clamped at index 0.
nn::Feature stack_frames(const std::vector<const std::vector<float> *> & history, const ViewConfig & cfg);

// ---------------------------------------------------------------------------
// Conv policy network shared by End2End and DQN

struct PolicyNetConfig {
  int frames = 4;
  int side = 80;
  ConvSpec conv1{8, 7, 4};
  ConvSpec conv2{8, 3, 1};
  int hidden = 64;
  int n_scalar = 2;  // (v_cmd / v_max, delta_cmd / delta_max)
  int n_out = 4;

  int conv_features() const;
  void validate() const;
  nlohmann::json to_json() const;
  static PolicyNetConfig from_json(const nlohmann::json & j);
};

struct PolicyNet {
  PolicyNetConfig cfg;
  nn::ParamSet p;
};

PolicyNet init_policy_net(const PolicyNetConfig & cfg, std::uint64_t seed);

struct PolicyTrace {
  nn::ConvCache c1, c2;
  std::vector<std::uint8_t> m1, m2, m3;
  nn::PoolCache p1, p2;
  Eigen::VectorXd flat, h;
};

Eigen::VectorXd policy_forward(const PolicyNet & net, const nn::Feature & x, const Eigen::VectorXd & scalars,
                               PolicyTrace * trace = nullptr);
// Adds d(out)/d(params) contracted with dout into grads.
void policy_backward(const PolicyNet & net, const PolicyTrace & trace, const Eigen::VectorXd & dout,
                     nn::ParamSet & grads);

void save_policy_net(const std::string & path, const PolicyNet & net, const std::string & tag);
PolicyNet load_policy_net(const std::string & path, const std::string & tag);
nn::Checkpoint policy_checkpoint(const PolicyNet & net, const std::string & tag);
PolicyNet policy_from_checkpoint(const nn::Checkpoint & ck, const std::string & tag);

inline constexpr const char * kBcTag = "end2end_bc";
inline constexpr const char * kDqnTag = "dqn_qnet";

Eigen::VectorXd command_scalars(const ControlInput & cmd, const VehicleParams & vehicle);

// ---------------------------------------------------------------------------
// End2End behavioural cloning

struct BcConfig {
  PolicyNetConfig net;
  ViewConfig view;
  IncrementConfig increments;
  double label_threshold = 0.005;  // |delta change| above which a frame is a steering frame
  int label_horizon = 5;           // steps between the controls compared for a label; 1 = consecutive steps
  int epochs = 8;
  int batch_size = 32;
  double lr = 1e-3;
  double l2_lambda = 1e-4;
  double val_fraction = 0.2;  // last episodes held out
  std::uint64_t seed = 1;

  void validate() const;
};

// Label of the change between consecutive applied controls.
BcCommand bc_label(const ControlInput & prev, const ControlInput & next, double threshold);

// Views are kept per record and stacked on demand.
struct BcEpisode {
  std::vector<std::vector<float>> views;
  std::vector<Eigen::VectorXd> scalars;  // sample k: command state before record k's decision
  std::vector<int> labels;               // sample k: change from record k to record k + label_horizon
  size_t size() const { return labels.size(); }
  nn::Feature input(size_t k, const ViewConfig & view) const;
};

BcEpisode make_bc_episode(const AugmentedMemory & episode, const VehicleParams & vehicle, const BcConfig & cfg);

struct BcModel {
  PolicyNet net;
  std::vector<double> train_loss;  // per epoch
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::array<int, kBcCommands> label_counts{};
};

BcModel train_bc(const Dataset & data, const VehicleParams & vehicle, const BcConfig & cfg);
double bc_accuracy(const PolicyNet & net, const std::vector<BcEpisode> & episodes, const ViewConfig & view);

class End2EndController final : public Controller {
public:
  End2EndController(PolicyNet net, BcConfig cfg, std::string name = "end2end");
  std::string name() const override { return name_; }
  void reset(const Scenario & scenario, std::uint64_t seed) override;
  ControlResult act(const Observation & obs) override;

private:
  PolicyNet net_;
  BcConfig cfg_;
  std::string name_;
  const Scenario * sc_ = nullptr;
  std::optional<ControlInput> cmd_;
  std::deque<std::vector<float>> frames_;
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// DQN

struct DqnRewardWeights {
  double progress = 0.5;
  double velocity = 0.3;
  double clearance = 0.2;
};

struct DqnConfig {
  PolicyNetConfig net{4, 80, {8, 7, 4}, {8, 3, 1}, 64, 2, kDiscreteActions};
  ViewConfig view;
  IncrementConfig increments;
  DqnRewardWeights reward;
  double stall_speed_fraction = 0.05;  // below this fraction of v_max the step is penalised
  int episodes = 60;
  int max_steps = 0;          // per episode; 0 = scenario time limit
  size_t replay_capacity = 100000;
  int batch_size = 32;
  double gamma = 0.95;
  double lr = 1e-4;
  double l2_lambda = 1e-4;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay = 0.99;    // per episode
  int warmup = 256;           // transitions before the first update
  int train_every = 4;        // env steps per gradient step
  int target_sync = 250;      // gradient steps between target copies
  double huber_delta = 1.0;
  std::uint64_t seed = 1;
  std::string snapshot_path;  // replay snapshot written when training diverges

  void validate() const;
  // Hyperparameters as listed for the original system.
  static DqnConfig reference();
};

// Rewards are a normalized weighted sum in [-1, 1]; crashes and stalls give -1.
double dqn_reward(const WorldState & before, const WorldState & after, const std::vector<RayHit> & rays_after,
                  const DqnConfig & cfg, double dt);

class DqnDiverged : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct DqnEpisodeStats {
  int episode = 0;
  int steps = 0;
  double ret = 0.0;
  double epsilon = 0.0;
  double mean_loss = 0.0;
  bool crashed = false;
  bool reached = false;
};

struct DqnModel {
  PolicyNet net;
  std::vector<DqnEpisodeStats> history;
  long long updates = 0;
};

DqnModel dqn_train(const ScenarioConfig & scenario, const SimSettings & sim, const DqnConfig & cfg,
                   const std::function<void(const DqnEpisodeStats &)> & sink = {});

// Reward of every step under a uniformly random policy, for `transitions` steps
// over as many episodes as needed (frames are not rendered).
std::vector<double> sample_random_rewards(const ScenarioConfig & scenario, const SimSettings & sim,
                                          const DqnConfig & cfg, size_t transitions, std::uint64_t seed);

class DqnController final : public Controller {
public:
  DqnController(PolicyNet net, DqnConfig cfg, double epsilon = 0.0, std::string name = "dqn");
  std::string name() const override { return name_; }
  void reset(const Scenario & scenario, std::uint64_t seed) override;
  ControlResult act(const Observation & obs) override;

private:
  PolicyNet net_;
  DqnConfig cfg_;
  double epsilon_;
  std::string name_;
  const Scenario * sc_ = nullptr;
  std::optional<ControlInput> cmd_;
  std::deque<std::vector<float>> frames_;
  std::mt19937_64 rng_;
};

}  // namespace scenenmpc

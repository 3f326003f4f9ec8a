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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenenmpc/augmented_memory.hpp"
#include "scenenmpc/dynamics_net.hpp"
#include "scenenmpc/policy_input.hpp"

namespace scenenmpc {

// Weights over the (x, y, heading) deviation features.
struct RewardWeights {
  std::array<double, 3> w{1.0, 1.0, 1.0};
};

// Per-dimension deviation of a trajectory from the reference:
// phi_x = sum dx^2 / |dp|, phi_y = sum dy^2 / |dp|, phi_rho = sum |wrap(drho)|,
// so that w = (1, 1, 0) gives the summed waypoint L2 distance.
std::array<double, 3> deviation_features(const SetPointTrajectory & z_d, const SetPointTrajectory & z_ref);

// -w . phi: zero for a perfect match, more negative for larger deviation.
double reward(const SetPointTrajectory & z_d, const SetPointTrajectory & z_ref, const RewardWeights & w);
// +w . phi, the quantity as printed; logged only.
double reward_raw(const SetPointTrajectory & z_d, const SetPointTrajectory & z_ref, const RewardWeights & w);

double discounted_return(const std::vector<double> & rewards, double gamma, size_t t_hat);

struct TrainConfig {
  double gamma = 0.95;
  int K1 = 200;
  int K2 = 2000;
  double alpha1 = 0.05;  // reward-weight step
  double alpha2 = 0.001; // network step in phase 2
  int batch_size = 64;
  int epochs = 1;        // curve points per run in the ablation sweep
  double lr = 0.001;     // supervised fit inside phase 1
  double l2_lambda = 1e-4;
  double tau_i = 0.284;
  double stride = 0.071;
  int tau_o = 4;
  double output_dt = 0.071;
  std::uint64_t rng_seed = 1;
  int fit_steps = 2;          // Adam steps per phase-1 iteration
  int probe_batch = 32;       // fixed batch for the phase-1 loss curve
  int target_refresh = 100;   // frozen target copy refresh, iterations
  int n_perturbed = 4;
  double perturb_sigma = 0.05;
  RewardWeights w0;
  bool literal_w_gradient = false;
  int checkpoint_every = 500;
  PolicyInputConfig policy;

  void validate() const;
  BatchSpec batch_spec() const { return {tau_i, stride, tau_o, output_dt}; }
};

struct BellmanTarget {
  double value = 0.0;          // r + gamma * max Q
  size_t best = 0;
  SetPointTrajectory best_trajectory;
  std::vector<double> q;
};

// Generic form: q[i] is Q(s', candidate i).
BellmanTarget bellman_target(double r, const std::vector<double> & q, double gamma);
BellmanTarget bellman_target(
  double r, const std::vector<SetPointTrajectory> & candidates, double gamma,
  const std::function<double(const SetPointTrajectory &)> & q_fn);
// Network form: Q(s', c) = -w . phi(rollout of the frozen network at s', c).
BellmanTarget bellman_target(
  double r, const NetInput & next_s, const NetworkParams & frozen, const std::vector<SetPointTrajectory> & candidates,
  double gamma, const RewardWeights & w);

// Weighted squared trajectory error, heading wrapped; gradient written to dz.
double trajectory_loss(
  const SetPointTrajectory & z, const SetPointTrajectory & target, const std::array<double, 3> & lambda,
  std::vector<std::array<double, 3>> * dz);

struct IterationMetrics {
  std::string phase;
  int iter = 0;
  double loss = 0.0;
  double probe_loss = 0.0;
  double reward = 0.0;
  double reward_raw = 0.0;
  double bellman_error = 0.0;
  RewardWeights w;
  nlohmann::json to_json() const;
};

using MetricsSink = std::function<void(const IterationMetrics &)>;

struct RewardLearningResult {
  RewardWeights w;
  NetworkParams net;  // the network after the local supervised fits
  std::vector<IterationMetrics> history;
};

RewardLearningResult learn_reward_weights(
  const Dataset & data, const NetworkParams & net_init, const TrainConfig & cfg, const MetricsSink & sink = {});

struct DynamicsState {
  NetworkParams net;
  NetworkParams frozen;
  nn::AdamState adam;
  int iter = 0;
};

struct DynamicsResult {
  NetworkParams net;
  std::vector<IterationMetrics> history;
};

// `resume` continues from a saved state; `checkpoint` is called every
// cfg.checkpoint_every iterations and at the end.
DynamicsResult train_dynamics(
  const Dataset & data, const NetworkParams & net_init, const RewardWeights & w, const TrainConfig & cfg,
  const MetricsSink & sink = {}, std::optional<DynamicsState> resume = std::nullopt,
  const std::function<void(const DynamicsState &)> & checkpoint = {});

struct DynamicsEval {
  double loss = 0.0;           // weighted trajectory MSE to the regression target
  double bellman_error = 0.0;  // mean (target value - Q(s, target))^2
  std::vector<SetPointTrajectory> predicted;
  std::vector<SetPointTrajectory> expert;
};

// Inference-mode evaluation on a fixed batch drawn with `seed`; the network
// acts as its own target copy.
DynamicsEval evaluate_dynamics(
  const Dataset & data, const NetworkParams & net, const RewardWeights & w, const TrainConfig & cfg, int samples,
  std::uint64_t seed);

// Run-directory helpers: config.json snapshot, metrics.jsonl, checkpoints.
void save_dynamics_state(const std::string & path, const DynamicsState & st, const RewardWeights & w);
DynamicsState load_dynamics_state(const std::string & path, RewardWeights * w = nullptr);
void save_reward_weights(const std::string & path, const RewardWeights & w);
RewardWeights load_reward_weights(const std::string & path);

}  // namespace scenenmpc

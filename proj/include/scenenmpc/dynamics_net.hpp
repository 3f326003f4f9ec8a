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
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenenmpc/augmented_memory.hpp"
#include "scenenmpc/nn/layers.hpp"
#include "scenenmpc/nn/params.hpp"
#include "scenenmpc/vehicle_model.hpp"

namespace scenenmpc {

struct ConvSpec {
  int filters = 8;
  int kernel = 7;
  int stride = 4;
};

struct NetConfig {
  int grid_cells = 120;  // raw OG side length in cells
  int downsample = 2;    // mean-pooling factor before the conv stack
  int frames = 5;        // window slots, tau_i / stride + 1
  int tau_o = 4;
  ConvSpec conv1{8, 7, 4};
  ConvSpec conv2{4, 3, 1};
  int state_hidden = 16;
  int ref_hidden = 16;
  int fc1 = 96;
  int fc2 = 64;
  int branch_hidden = 16;
  double dropout = 0.2;
  double dt_o = 0.071;      // rollout step between set-points
  double pos_scale = 0.1;   // metres -> network units for ego-frame inputs
  double speed_scale = 0.1; // m/s -> network units for u_now
  double head_init = 0.01;
  VehicleParams vehicle;

  int input_side() const { return grid_cells / downsample; }
  // Shapes after each block of the conv stack for one frame.
  int conv1_side() const;
  int pool1_side() const;
  int conv2_side() const;
  int pool2_side() const;
  int conv_features() const;  // per frame
  int embedding() const;
  void validate() const;
  nlohmann::json to_json() const;
  static NetConfig from_json(const nlohmann::json & j);
};

// Parameters Theta. `generation` changes on every update so stale traces are
// detectable.
struct NetworkParams {
  NetConfig cfg;
  nn::ParamSet p;
  std::uint64_t generation = 0;

  struct Index {
    size_t conv1_W, conv1_b, conv2_W, conv2_b;
    size_t st_W, st_U, st_b, ref_W, ref_U, ref_b;
    size_t fc1_W, fc1_b, fc2_W, fc2_b;
    std::vector<size_t> br_W, br_U, br_b, head_W, head_b;
  } idx;
};

// Builds the tensors for a config without initializing them (all zero).
NetworkParams make_network(const NetConfig & cfg);
NetworkParams init_network(const NetConfig & cfg, std::uint64_t seed);
void touch(NetworkParams & params);  // bump the generation after external edits

// Network-ready view of a window.
struct NetInput {
  std::vector<nn::Feature> frames;       // 1 x side x side each
  std::vector<nn::Vec> states;           // ego-frame (dx, dy, drho), scaled
  std::vector<nn::Vec> refs;             // ego-frame reference points, scaled
  nn::Vec u;                             // scaled u_now
  VehicleState z_now;
  ControlInput u_now;
};

NetInput make_input(
  const NetConfig & cfg, const JointState & s, const std::vector<VehicleState> & reference_window,
  const ControlInput & u_now);

struct ForwardTrace {
  std::uint64_t generation = 0;
  std::shared_ptr<bool> consumed = std::make_shared<bool>(false);
  NetInput input;
  struct Frame {
    nn::ConvCache c1, c2;
    std::vector<std::uint8_t> r1, r2;
    nn::PoolCache p1, p2;
    nn::Feature out;
  };
  std::vector<Frame> frames;
  std::vector<nn::LstmStep> st_steps, ref_steps;
  nn::Vec embed, h1, h2;
  std::vector<std::uint8_t> m1, m2;
  std::vector<double> d1, d2;
  std::vector<std::vector<nn::LstmStep>> branch_steps;
  std::vector<DynamicsCompensation> comps;
  SetPointTrajectory z_d;
};

struct ForwardResult {
  std::vector<DynamicsCompensation> comps;
  SetPointTrajectory z_d;
  ForwardTrace trace;
};

ForwardResult forward(
  const NetworkParams & params, const JointState & s, const std::vector<VehicleState> & reference_window,
  const ControlInput & u_now);
// training = true enables dropout drawn from rng.
ForwardResult forward(const NetworkParams & params, const NetInput & input, bool training, std::mt19937_64 * rng);

// Rollout z^{k+1} = step_combined(z^k, u_now, comp_k) from z_now.
SetPointTrajectory rollout(
  const VehicleState & z_now, const ControlInput & u_now, const std::vector<DynamicsCompensation> & comps,
  const VehicleParams & vehicle, double dt);

struct OutputGradient {
  std::vector<std::array<double, 3>> dz;  // dL/dz_d[k], heading included
  std::vector<std::array<double, 2>> dcomp;  // optional direct dL/dh_k
};

// Adjoint of rollout: dL/dh_k given dL/dz_d and any direct dL/dh_k.
std::vector<std::array<double, 2>> rollout_backward(
  const VehicleState & z_now, const ControlInput & u_now, const std::vector<DynamicsCompensation> & comps,
  const SetPointTrajectory & z_d, const VehicleParams & vehicle, double dt, const OutputGradient & grad);

nn::ParamSet backward(const NetworkParams & params, ForwardTrace & trace, const OutputGradient & grad);
// Same as backward but adds into an existing gradient set.
void backward_accumulate(
  const NetworkParams & params, ForwardTrace & trace, const OutputGradient & grad, nn::ParamSet & grads);

void adam_step(NetworkParams & params, const nn::ParamSet & grads, nn::AdamState & state, double lr, double l2_lambda);

// Hash of every ReLU mask and pooling argmax in a trace; a finite-difference
// probe that changes it straddles a non-differentiable point.
std::uint64_t activation_signature(const ForwardTrace & trace);
std::uint64_t output_checksum(const ForwardResult & r);

void save_network(const std::string & path, const NetworkParams & params, const std::string & tag = "dynamics_net");
NetworkParams load_network(const std::string & path, const std::string & tag = "dynamics_net");
nn::Checkpoint network_checkpoint(const NetworkParams & params, const std::string & tag);
NetworkParams network_from_checkpoint(const nn::Checkpoint & ck, const std::string & tag);

}  // namespace scenenmpc

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
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenenmpc/augmented_memory.hpp"
#include "scenenmpc/dynamics_net.hpp"
#include "scenenmpc/episode.hpp"
#include "scenenmpc/policy_input.hpp"

namespace scenenmpc {

struct SolverConfig {
  int max_iters = 100;
  double grad_tol = 1e-9;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_line_search = 40;
  double bound_snap = 1e-5;  // relative distance at which a coordinate is tried on its bound
};

struct NmpcConfig {
  std::array<double, 3> Q{1.0, 1.0, 0.5};
  std::array<double, 2> R{0.1, 0.1};
  std::array<double, 2> S{0.0, 1.0};  // weight on per-step control change (u_k - u_{k-1})^2
  int tau_o = 4;
  double dt = 0.071;
  ControlInput u_min{0.0, -0.5};
  ControlInput u_max{10.0, 0.5};
  std::array<double, 2> du_min{-4.0, -2.0};  // per second
  std::array<double, 2> du_max{4.0, 2.0};
  std::array<double, 3> e_min{-1.0, -1.0, -0.5};
  std::array<double, 3> e_max{1.0, 1.0, 0.5};
  double penalty_mu = 1e3;
  double terminal_weight = 0.0;  // extra multiple of Q on the last step; 0 = none
  bool predict_with_compensation = false;
  bool control_relative_to_feedforward = true;  // R acts on u - u_ff instead of u
  SolverConfig solver;

  void validate() const;
  // Box from the vehicle limits.
  static NmpcConfig for_vehicle(const VehicleParams & v);
};

struct NmpcSolution {
  std::vector<ControlInput> u_sequence;
  std::vector<VehicleState> predicted_states;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Tracking cost sum_k (z_k - z_d,k)' Q (z_k - z_d,k) + (u_k - u_ref,k)' R (u_k - u_ref,k),
// heading differences wrapped. u_ref defaults to zero.
double cost(
  const std::vector<VehicleState> & z_pred, const SetPointTrajectory & z_d, const std::vector<ControlInput> & u_seq,
  const NmpcConfig & cfg, const std::vector<ControlInput> * u_ref = nullptr);

struct NmpcProblem {
  VehicleState z0;
  SetPointTrajectory z_d;
  std::vector<DynamicsCompensation> comps;   // used only if predict_with_compensation
  std::vector<ControlInput> u_ref;           // empty = zero
  ControlInput u_prev;                        // for the first rate term
  VehicleParams vehicle;
};

// Full objective: cost, S-weighted control changes, rate and cross-track penalties; gradient by the adjoint.
double objective(const NmpcProblem & p, const std::vector<ControlInput> & u, const NmpcConfig & cfg,
                 std::vector<std::array<double, 2>> * grad = nullptr);

NmpcSolution solve(const NmpcProblem & p, const NmpcConfig & cfg,
                   const std::optional<std::vector<ControlInput>> & warm_start = std::nullopt);

// Window form: the current state is the latest state of s_now.
NmpcSolution solve(const JointState & s_now, const SetPointTrajectory & z_d,
                   const std::vector<DynamicsCompensation> & comps, const NmpcConfig & cfg,
                   const VehicleParams & vehicle, const ControlInput & u_prev,
                   const std::optional<std::vector<ControlInput>> & warm_start = std::nullopt,
                   const std::vector<ControlInput> & u_ref = {});

struct ControlStep {
  ControlInput u;
  NmpcSolution solution;
  SetPointTrajectory z_d;
  std::vector<DynamicsCompensation> comps;
  ControlInput u_ff;
  nlohmann::json log() const;
};

// One receding-horizon step at time t: window, network forward, warm-started solve.
// Throws InsufficientHistory when the memory does not cover tau_i.
ControlStep control_step(
  const AugmentedMemory & memory, double t, const Polyline & route, const NetworkParams & net,
  const NmpcConfig & cfg, const PolicyInputConfig & policy, const WindowQuery & window,
  const std::optional<std::vector<ControlInput>> & warm_start = std::nullopt);

class NmpcController final : public Controller {
public:
  NmpcController(NetworkParams net, NmpcConfig cfg, PolicyInputConfig policy = {}, WindowQuery window = {},
                 std::string name = "dl_nmpc_sd");
  std::string name() const override { return name_; }
  void reset(const Scenario & scenario, std::uint64_t seed) override;
  ControlResult act(const Observation & obs) override;

private:
  NetworkParams net_;
  NmpcConfig cfg_;
  PolicyInputConfig policy_;
  WindowQuery window_;
  std::string name_;
  const Scenario * sc_ = nullptr;
  std::optional<std::vector<ControlInput>> prev_;
};

}  // namespace scenenmpc

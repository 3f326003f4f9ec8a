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

namespace scenenmpc {

// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

// Signed shortest rotation taking `from` to `to`, in (-pi, pi].
double angle_diff(double to, double from);

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double rho = 0.0;
};

struct ControlInput {
  double v_cmd = 0.0;
  double delta_cmd = 0.0;
};

struct VehicleParams {
  double wheelbase_L = 2.5;
  double delta_max = 0.5;
  double v_min = 0.0;
  double v_max = 10.0;
  double accel_max = 3.0;
  double state_noise_sigma = 0.0;
  // footprint used for collision checks
  double length = 4.0;
  double width = 1.8;

  void validate() const;
};

struct DynamicsCompensation {
  double h_v = 0.0;
  double h_delta = 0.0;
};

// Clamps u into the box given by the vehicle parameters.
ControlInput clamp_control(const ControlInput & u, const VehicleParams & params);

VehicleState step_nominal(
  const VehicleState & state, const ControlInput & u, const VehicleParams & params, double dt);

VehicleState step_combined(
  const VehicleState & state, const ControlInput & u, const DynamicsCompensation & comp,
  const VehicleParams & params, double dt);

VehicleState observe_state(
  const VehicleState & state, const VehicleParams & params, std::uint64_t rng_seed);

// Partial derivatives of step_combined used by adjoint gradient code.
struct StepJacobian {
  // d(x', y', rho') / d(x, y, rho), rows = outputs
  double dz[3][3];
  // d(x', y', rho') / d(v_cmd, delta_cmd)
  double du[3][2];
  // d(x', y', rho') / d(h_v, h_delta)
  double dh[3][2];
};

StepJacobian step_combined_jacobian(
  const VehicleState & state, const ControlInput & u, const DynamicsCompensation & comp,
  const VehicleParams & params, double dt);

}  // namespace scenenmpc

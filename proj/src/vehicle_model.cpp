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

#include "scenenmpc/vehicle_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace scenenmpc {

double wrap_angle(double a)
{
  if (!std::isfinite(a)) throw std::invalid_argument("wrap_angle: non-finite angle");
  if (a > -M_PI && a <= M_PI) return a;
  double r = std::remainder(a, 2.0 * M_PI);  // in [-pi, pi]
  if (r <= -M_PI) r += 2.0 * M_PI;
  return r;
}

double angle_diff(double to, double from) { return wrap_angle(to - from); }

void VehicleParams::validate() const
{
  if (!(wheelbase_L > 0.0)) throw std::invalid_argument("vehicle: wheelbase_L must be > 0");
  if (!(v_max > v_min)) throw std::invalid_argument("vehicle: v_max must exceed v_min");
  if (!(accel_max > 0.0)) throw std::invalid_argument("vehicle: accel_max must be > 0");
  if (!(state_noise_sigma >= 0.0)) throw std::invalid_argument("vehicle: state_noise_sigma < 0");
  if (!(delta_max > 0.0 && delta_max < M_PI / 2)) throw std::invalid_argument("vehicle: bad delta_max");
  if (!(length > 0.0 && width > 0.0)) throw std::invalid_argument("vehicle: bad footprint");
}

ControlInput clamp_control(const ControlInput & u, const VehicleParams & params)
{
  return {std::clamp(u.v_cmd, params.v_min, params.v_max),
          std::clamp(u.delta_cmd, -params.delta_max, params.delta_max)};
}

namespace {

void check_inputs(const VehicleState & s, const ControlInput & u, double dt, const VehicleParams & p)
{
  if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.rho)) {
    throw std::invalid_argument("vehicle step: non-finite state");
  }
  if (!std::isfinite(u.v_cmd) || !std::isfinite(u.delta_cmd)) {
    throw std::invalid_argument("vehicle step: non-finite control");
  }
  if (!std::isfinite(dt) || dt <= 0.0) throw std::invalid_argument("vehicle step: dt must be > 0");
  if (!(p.wheelbase_L > 0.0)) throw std::invalid_argument("vehicle step: wheelbase_L must be > 0");
}

}  // namespace

VehicleState step_combined(
  const VehicleState & state, const ControlInput & u, const DynamicsCompensation & comp,
  const VehicleParams & params, double dt)
{
  check_inputs(state, u, dt, params);
  if (!std::isfinite(comp.h_v) || !std::isfinite(comp.h_delta)) {
    throw std::invalid_argument("vehicle step: non-finite compensation");
  }
  const double speed = u.v_cmd + comp.h_v;
  const double yaw_rate = u.v_cmd / params.wheelbase_L * std::tan(u.delta_cmd) * std::cos(comp.h_delta);
  VehicleState out;
  out.x = state.x + speed * std::cos(state.rho) * dt;
  out.y = state.y + speed * std::sin(state.rho) * dt;
  out.rho = wrap_angle(state.rho + yaw_rate * dt);
  return out;
}

// The nominal model is the combined model with h = 0; sharing the code path
// keeps the two bit-identical.
VehicleState step_nominal(
  const VehicleState & state, const ControlInput & u, const VehicleParams & params, double dt)
{
  return step_combined(state, u, DynamicsCompensation{}, params, dt);
}

VehicleState observe_state(const VehicleState & state, const VehicleParams & params, std::uint64_t rng_seed)
{
  if (!std::isfinite(state.x) || !std::isfinite(state.y) || !std::isfinite(state.rho)) {
    throw std::invalid_argument("observe_state: non-finite state");
  }
  if (!(params.state_noise_sigma >= 0.0)) throw std::invalid_argument("observe_state: sigma < 0");
  if (params.state_noise_sigma == 0.0) return state;
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> n(0.0, params.state_noise_sigma);
  VehicleState out = state;
  out.x += n(rng);
  out.y += n(rng);
  return out;
}

StepJacobian step_combined_jacobian(
  const VehicleState & state, const ControlInput & u, const DynamicsCompensation & comp,
  const VehicleParams & params, double dt)
{
  StepJacobian j{};
  const double speed = u.v_cmd + comp.h_v;
  const double c = std::cos(state.rho);
  const double s = std::sin(state.rho);
  const double t = std::tan(u.delta_cmd);
  const double ch = std::cos(comp.h_delta);
  const double sh = std::sin(comp.h_delta);
  const double L = params.wheelbase_L;

  j.dz[0][0] = 1.0;
  j.dz[0][2] = -speed * s * dt;
  j.dz[1][1] = 1.0;
  j.dz[1][2] = speed * c * dt;
  j.dz[2][2] = 1.0;

  j.du[0][0] = c * dt;
  j.du[1][0] = s * dt;
  j.du[2][0] = t * ch / L * dt;
  j.du[2][1] = u.v_cmd / L * (1.0 + t * t) * ch * dt;

  j.dh[0][0] = c * dt;
  j.dh[1][0] = s * dt;
  j.dh[2][1] = -u.v_cmd / L * t * sh * dt;
  return j;
}

}  // namespace scenenmpc

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

#include "scenenmpc/policy_input.hpp"

#include <stdexcept>

namespace scenenmpc {

PolicyInput make_policy_input(
  const NetConfig & net, const JointState & s, const Polyline & route, const PolicyInputConfig & cfg)
{
  if (s.size() == 0) throw std::invalid_argument("policy input: empty window");
  PolicyInput pi;
  const VehicleState & z = s.latest();
  // controls[k] is the control applied just before states[k]; its speed is the measured speed
  pi.speed = s.controls.back().v_cmd;
  pi.u_ff = cfg.hold_applied_control ? s.controls.back() : pure_pursuit(route, z, cfg.feedforward, net.vehicle);
  const auto window = reference_trajectory(route, z, pi.speed, net.dt_o, net.tau_o + 1, 0, cfg.ref_min_speed);
  pi.z_ref.assign(window.begin() + 1, window.end());
  pi.input = make_input(net, s, window, pi.u_ff);
  return pi;
}

}  // namespace scenenmpc

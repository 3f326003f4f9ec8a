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

#include <vector>

#include "scenenmpc/dynamics_net.hpp"
#include "scenenmpc/episode.hpp"

namespace scenenmpc {

// How a window is turned into network input. The control held over the
// rollout is a route-tracking feed-forward computed from the latest state,
// so a zero network reproduces nominal tracking of the route.
struct PolicyInputConfig {
  PursuitConfig feedforward{4.0, 6.0, 1.0};
  double ref_min_speed = 0.5;
  bool hold_applied_control = false;  // true: roll out the last applied control instead
};

struct PolicyInput {
  NetInput input;
  std::vector<VehicleState> z_ref;  // route samples at t+1 .. t+tau_o
  ControlInput u_ff;
  double speed = 0.0;
};

PolicyInput make_policy_input(
  const NetConfig & net, const JointState & s, const Polyline & route, const PolicyInputConfig & cfg);

}  // namespace scenenmpc

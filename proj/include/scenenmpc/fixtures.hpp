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

#include "scenenmpc/episode.hpp"
#include "scenenmpc/gridsim.hpp"

namespace scenenmpc {

// Two-lane straight road, 70 m, one box obstacle in the right lane at x 30..32
// and a route that changes to the left lane around it. No traffic.
ScenarioConfig straight_obstacle_fixture(std::uint64_t seed = 1);

// Same road without the obstacle, route in the right lane.
ScenarioConfig straight_empty_fixture(std::uint64_t seed = 1);

}  // namespace scenenmpc

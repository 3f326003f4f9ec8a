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
#include <string>
#include <vector>

#include "scenenmpc/dynamics_net.hpp"

namespace scenenmpc {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  int checked = 0;
  int one_sided = 0;
  int skipped = 0;  // probes across a ReLU or pooling switch
  bool ok = true;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-4;
  double abs_floor = 1e-6;  // relative error denominator floor
};

// Per layer kind: a random instance, a random linear functional of its
// output, analytic vs central differences over every parameter and input.
GradCheckResult gradcheck_conv(std::uint64_t seed, const GradCheckOptions & opt = {});
GradCheckResult gradcheck_pool_relu(std::uint64_t seed, const GradCheckOptions & opt = {});
GradCheckResult gradcheck_dense(std::uint64_t seed, const GradCheckOptions & opt = {});
GradCheckResult gradcheck_dropout(std::uint64_t seed, const GradCheckOptions & opt = {});
GradCheckResult gradcheck_lstm(std::uint64_t seed, const GradCheckOptions & opt = {});
GradCheckResult gradcheck_rollout(std::uint64_t seed, const GradCheckOptions & opt = {});
// Whole network in training mode (fixed dropout mask).
GradCheckResult gradcheck_network(const NetConfig & cfg, std::uint64_t seed, const GradCheckOptions & opt = {});

// 2 filters, 4 hidden units, tau_i = tau_o = 2.
NetConfig tiny_net_config();
// Random input of the right shape for cfg.
NetInput random_input(const NetConfig & cfg, std::uint64_t seed);

std::vector<GradCheckResult> gradcheck_all(std::uint64_t seed, const GradCheckOptions & opt = {});

}  // namespace scenenmpc

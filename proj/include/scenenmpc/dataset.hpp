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

#include "scenenmpc/augmented_memory.hpp"
#include "scenenmpc/episode.hpp"

namespace scenenmpc {

// Directory layout:
//   index.json      {"v":1, "format":"scenenmpc-dataset", "episodes":[{name, file, records, grids, route}]}
//   <name>.bin      "SNEP", u32 version, u64 count, then per record
//                   f64 t, x, y, rho, v_cmd, delta_cmd, speed, u32 grid bytes, OGRD snapshot
// Grids are stored quantized, so a save/load round trip is lossless for
// recordings made by run_episode.
void save_dataset(const std::string & dir, const Dataset & data);
Dataset load_dataset(const std::string & dir);

std::vector<std::uint8_t> encode_episode(const AugmentedMemory & ep);
AugmentedMemory decode_episode(const std::vector<std::uint8_t> & bytes);

struct RecordResult {
  Dataset data;
  std::vector<EpisodeTrace> traces;
};

// Runs `episodes` scripted-expert demonstrations with seeds seed, seed+1, ...
RecordResult record_expert(
  const ScenarioConfig & scenario, int episodes, const SimSettings & sim, const ExpertConfig & expert,
  std::uint64_t seed);

}  // namespace scenenmpc

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

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "scenenmpc/config.hpp"

namespace scenenmpc {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Controller factory for the names accepted by `eval --method`:
// dl_nmpc_sd, untrained, dwa, end2end, dqn, expert, tracker.
// Models are loaded from the configured paths.
MethodSpec make_method(const std::string & name, const AppConfig & cfg);

// Entry point of the `scenenmpc` tool. Errors are printed to `err` as one line
//   error: code=<usage|runtime> msg="<json-escaped text>"
int run_cli(const std::vector<std::string> & args, std::ostream & out, std::ostream & err);

}  // namespace scenenmpc

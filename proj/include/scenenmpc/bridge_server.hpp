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
#include <functional>
#include <memory>

#include "scenenmpc/bridge.hpp"

namespace scenenmpc {

// WebSocket front end for a BridgeCore. Single io thread: inbound messages are
// decoded and submitted in arrival order, a timer at rate_hz drives tick() and
// broadcasts its messages to every connected client.
class BridgeServer {
public:
  BridgeServer(BridgeCore & core, const BridgeConfig & cfg);
  ~BridgeServer();
  BridgeServer(const BridgeServer &) = delete;
  BridgeServer & operator=(const BridgeServer &) = delete;

  // Port the acceptor is bound to (resolved when cfg.port is 0).
  unsigned short port() const;
  // Called on the io thread after every tick; set before run().
  void set_tick_hook(std::function<void(BridgeCore &)> hook);
  // Blocks until stop().
  void run();
  // Safe from any thread.
  void stop();

  std::uint64_t ticks() const;
  std::uint64_t dropped() const;  // outbound frames discarded on full queues

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace scenenmpc

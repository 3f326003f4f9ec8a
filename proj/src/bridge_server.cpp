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

#include "scenenmpc/bridge_server.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace scenenmpc {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace ws = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Client : public std::enable_shared_from_this<Client> {
public:
  Client(tcp::socket socket, BridgeCore & core, size_t max_queue, std::atomic<std::uint64_t> & dropped)
  : ws_(std::move(socket)), core_(core), max_queue_(max_queue), dropped_(dropped)
  {
  }

  void start()
  {
    ws_.text(true);
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->open_ = true;
      self->read();
    });
  }

  bool alive() const { return !closed_; }

  void send(const std::string & msg)
  {
    if (!open_ || closed_) return;
    if (queue_.size() >= max_queue_) {
      ++dropped_;
      return;
    }
    queue_.push_back(msg);
    if (queue_.size() == 1) write();
  }

  void close()
  {
    if (closed_) return;
    closed_ = true;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).close(ec);
  }

private:
  void read()
  {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, size_t) {
      if (ec) {
        self->closed_ = true;
        return;
      }
      const std::string text = beast::buffers_to_string(self->buf_.data());
      self->buf_.consume(self->buf_.size());
      try {
        self->core_.submit(decode_client_message(text));
      } catch (const std::exception & e) {
        self->send(encode_error(e.what(), self->core_.world().time));
      }
      self->read();
    });
  }

  void write()
  {
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, size_t) {
      if (ec) {
        self->closed_ = true;
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write();
    });
  }

  ws::stream<tcp::socket> ws_;
  BridgeCore & core_;
  size_t max_queue_;
  std::atomic<std::uint64_t> & dropped_;
  beast::flat_buffer buf_;
  std::deque<std::string> queue_;
  bool open_ = false;
  bool closed_ = false;
};

}  // namespace

struct BridgeServer::Impl {
  Impl(BridgeCore & c, const BridgeConfig & k)
  : core(c),
    cfg(k),
    acceptor(io, tcp::endpoint(asio::ip::make_address(k.bind), static_cast<unsigned short>(k.port))),
    timer(io),
    period(std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(1.0 / k.rate_hz)))
  {
  }

  void accept()
  {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket s) {
      if (ec) return;
      auto c = std::make_shared<Client>(std::move(s), core, cfg.max_queue, dropped);
      clients.push_back(c);
      c->start();
      accept();
    });
  }

  void schedule()
  {
    next += period;
    timer.expires_at(next);
    timer.async_wait([this](beast::error_code ec) {
      if (ec) return;
      const auto t = core.tick();
      ++ticks;
      if (hook) hook(core);
      std::erase_if(clients, [](const auto & c) { return !c->alive(); });
      for (const auto & m : t.messages) {
        for (const auto & c : clients) c->send(m);
      }
      schedule();
    });
  }

  BridgeCore & core;
  BridgeConfig cfg;
  asio::io_context io;
  tcp::acceptor acceptor;
  asio::steady_timer timer;
  std::chrono::steady_clock::duration period;
  std::chrono::steady_clock::time_point next;
  std::vector<std::shared_ptr<Client>> clients;
  std::function<void(BridgeCore &)> hook;
  std::atomic<std::uint64_t> ticks{0};
  std::atomic<std::uint64_t> dropped{0};
};

BridgeServer::BridgeServer(BridgeCore & core, const BridgeConfig & cfg)
{
  if (!(cfg.rate_hz > 0.0) || cfg.max_queue == 0) throw std::invalid_argument("bridge: bad rate or queue size");
  impl_ = std::make_unique<Impl>(core, cfg);
}

BridgeServer::~BridgeServer() = default;

unsigned short BridgeServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void BridgeServer::set_tick_hook(std::function<void(BridgeCore &)> hook) { impl_->hook = std::move(hook); }

void BridgeServer::run()
{
  impl_->accept();
  impl_->next = std::chrono::steady_clock::now();
  impl_->schedule();
  impl_->io.run();
  for (const auto & c : impl_->clients) c->close();
  impl_->clients.clear();
}

void BridgeServer::stop()
{
  asio::post(impl_->io, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
    impl_->timer.cancel();
    for (const auto & c : impl_->clients) c->close();
    impl_->io.stop();
  });
}

std::uint64_t BridgeServer::ticks() const { return impl_->ticks; }
std::uint64_t BridgeServer::dropped() const { return impl_->dropped; }

}  // namespace scenenmpc

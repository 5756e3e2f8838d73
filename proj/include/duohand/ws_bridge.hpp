#pragma once

// WebSocket endpoint for the cockpit: broadcasts decimated bus traffic to
// every client and feeds ctl_* messages into the live session.

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "duohand/cockpit_schema.hpp"
#include "duohand/service.hpp"

namespace duohand {

namespace ws_detail {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

class ClientSession;

struct Hub {
  std::set<std::shared_ptr<ClientSession>> clients;
  std::function<void(const ControlMessage&)> on_control;
};

class ClientSession : public std::enable_shared_from_this<ClientSession> {
 public:
  ClientSession(tcp::socket socket, Hub& hub) : ws_(std::move(socket)), hub_(hub) {}

  void run() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->hub_.clients.insert(self);
      self->read();
    });
  }

  void send(std::shared_ptr<const std::string> text) {
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write();
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->hub_.clients.erase(self);
        return;
      }
      const auto text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      try {
        const auto msg = parse_control(text);
        if (self->hub_.on_control) self->hub_.on_control(msg);
      } catch (const std::exception& e) {
        self->send(std::make_shared<const std::string>(envelope("error", {{"message", e.what()}}).dump()));
      }
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->hub_.clients.erase(self);
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  Hub& hub_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
};

}  // namespace ws_detail

class CockpitServer {
 public:
  /// Binds 127.0.0.1:`port`; port 0 picks a free one.
  CockpitServer(TeleopSession& session, Bus& bus, unsigned short port = 0, double broadcast_hz = 20.0)
      : acceptor_(ioc_, {ws_detail::net::ip::make_address("127.0.0.1"), port}),
        sub_(bus.subscribe()),
        decimator_(broadcast_hz) {
    hub_.on_control = [&session](const ControlMessage& m) { session.push_control(m); };
  }

  ~CockpitServer() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() {
    if (running_.exchange(true)) return;
    accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
    pump_thread_ = std::thread([this] { pump(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    sub_->close();
    if (pump_thread_.joinable()) pump_thread_.join();
    ioc_.stop();
    if (io_thread_.joinable()) io_thread_.join();
  }

  std::size_t client_count() {
    std::promise<std::size_t> p;
    auto f = p.get_future();
    ws_detail::net::post(ioc_, [&] { p.set_value(hub_.clients.size()); });
    return f.get();
  }

 private:
  void accept() {
    acceptor_.async_accept([this](boost::beast::error_code ec, ws_detail::tcp::socket socket) {
      if (!ec) std::make_shared<ws_detail::ClientSession>(std::move(socket), hub_)->run();
      if (running_) accept();
    });
  }

  void pump() {
    while (running_) {
      auto m = sub_->pop_until(SteadyClock::now() + std::chrono::milliseconds(100));
      if (!m) {
        if (sub_->closed()) break;
        continue;
      }
      auto text = decimator_.feed(*m);
      if (!text) continue;
      auto shared = std::make_shared<const std::string>(std::move(*text));
      ws_detail::net::post(ioc_, [this, shared] {
        for (const auto& c : hub_.clients) c->send(shared);
      });
    }
  }

  ws_detail::net::io_context ioc_;
  ws_detail::tcp::acceptor acceptor_;
  std::shared_ptr<Channel<BusMessage>> sub_;
  BroadcastDecimator decimator_;
  ws_detail::Hub hub_;
  std::atomic<bool> running_{false};
  std::thread io_thread_;
  std::thread pump_thread_;
};

}  // namespace duohand

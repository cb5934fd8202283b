#pragma once

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <deque>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "sonograin/service.hpp"

namespace sonograin {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point epoch) {
  return std::chrono::duration<double>(Clock::now() - epoch).count();
}

inline std::string content_type_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  return "image/jpeg";
}

// One websocket client. All handlers run on the connection's strand, so the control
// handler only queues pointer events and the tick timer does the synthesis.
class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  static constexpr auto kTick = std::chrono::milliseconds(10);
  static constexpr std::size_t kMaxBacklog = 100;  // 1 s of audio

  WsSession(tcp::socket&& socket, SessionHub& hub, Clock::time_point epoch)
      : ws_(std::move(socket)), conn_(hub), timer_(ws_.get_executor()), epoch_(epoch) {}

  template <class Request>
  void run(Request req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  struct Outgoing {
    std::string text;
    std::vector<unsigned char> binary;
    bool is_binary = false;
  };

  void on_accept(beast::error_code ec) {
    if (ec) return;
    do_read();
  }

  void do_read() { ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      shutdown();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    if (ws_.got_binary()) {
      send_text(error_message("bad_request", "binary messages are not accepted"));
    } else {
      for (auto& reply : conn_.handle_text(text, seconds_since(epoch_))) send_text(std::move(reply));
    }
    if (conn_.closed()) {
      timer_.cancel();
      closing_ = true;
      if (!writing_) do_close();
      return;
    }
    if (conn_.is_open() && !ticking_) {
      ticking_ = true;
      deadline_ = Clock::now() + kTick;
      schedule_tick();
    }
    do_read();
  }

  void schedule_tick() {
    timer_.expires_at(deadline_);
    timer_.async_wait(beast::bind_front_handler(&WsSession::on_tick, shared_from_this()));
  }

  void on_tick(beast::error_code ec) {
    if (ec || closing_) return;
    const bool late = Clock::now() - deadline_ > kTick;
    Outgoing frame;
    frame.is_binary = true;
    if (!conn_.tick(seconds_since(epoch_), frame.binary, late)) return;
    if (queue_.size() >= kMaxBacklog) {
      // The client stopped reading; dropping frames would break sequence continuity.
      closing_ = true;
      timer_.cancel();
      if (!writing_) do_close();
      return;
    }
    enqueue(std::move(frame));
    deadline_ += kTick;
    schedule_tick();
  }

  void send_text(std::string text) {
    Outgoing m;
    m.text = std::move(text);
    enqueue(std::move(m));
  }

  void enqueue(Outgoing m) {
    queue_.push_back(std::move(m));
    if (!writing_) do_write();
  }

  void do_write() {
    if (queue_.empty()) {
      writing_ = false;
      if (closing_) do_close();
      return;
    }
    writing_ = true;
    Outgoing& m = queue_.front();
    ws_.binary(m.is_binary);
    auto handler = beast::bind_front_handler(&WsSession::on_write, shared_from_this());
    if (m.is_binary)
      ws_.async_write(net::buffer(m.binary), std::move(handler));
    else
      ws_.async_write(net::buffer(m.text), std::move(handler));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      shutdown();
      return;
    }
    queue_.pop_front();
    do_write();
  }

  void do_close() {
    if (close_sent_) return;
    close_sent_ = true;
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
  }

  void shutdown() {
    closing_ = true;
    timer_.cancel();
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  Connection conn_;
  net::steady_timer timer_;
  Clock::time_point epoch_;
  Clock::time_point deadline_{};
  std::deque<Outgoing> queue_;
  bool writing_ = false;
  bool ticking_ = false;
  bool closing_ = false;
  bool close_sent_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, SessionHub& hub, Clock::time_point epoch)
      : stream_(std::move(socket)), hub_(hub), epoch_(epoch) {}

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(req_) && req_.target() == "/session") {
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), hub_, epoch_)->run(std::move(req_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>(handle(req_));
    res_ = res;
    http::async_write(stream_, *res, beast::bind_front_handler(&HttpSession::on_write, shared_from_this(), res->need_eof()));
  }

  void on_write(bool close, beast::error_code ec, std::size_t) {
    res_.reset();
    if (ec) return;
    if (close) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    do_read();
  }

  http::response<http::string_body> handle(const http::request<http::string_body>& req) {
    auto reply = [&](http::status status, std::string body, std::string type) {
      http::response<http::string_body> res{status, req.version()};
      res.set(http::field::content_type, type);
      res.set(http::field::access_control_allow_origin, "*");
      res.keep_alive(req.keep_alive());
      res.body() = std::move(body);
      res.prepare_payload();
      return res;
    };
    const std::string target(req.target());
    if (req.method() != http::verb::get) return reply(http::status::method_not_allowed, "", "text/plain");
    if (target == "/corpora") return reply(http::status::ok, hub_.registry().catalogue().dump(), "application/json");

    const std::string prefix = "/materials/", suffix = "/image";
    if (target.starts_with(prefix) && target.ends_with(suffix) && target.size() > prefix.size() + suffix.size()) {
      const std::string id = target.substr(prefix.size(), target.size() - prefix.size() - suffix.size());
      const MaterialEntry* entry = hub_.registry().find(id);
      if (entry && !entry->image.empty()) {
        std::ifstream in(entry->image, std::ios::binary);
        std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        if (in || in.eof()) return reply(http::status::ok, std::move(bytes), content_type_for(entry->image));
      }
    }
    return reply(http::status::not_found, "not found\n", "text/plain");
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<void> res_;
  SessionHub& hub_;
  Clock::time_point epoch_;
};

}  // namespace detail

/// HTTP + websocket front end:
///   GET /corpora, GET /materials/<id>/image, websocket channel at /session.
class Server {
 public:
  Server(SessionHub& hub, const std::string& address, unsigned short port)
      : hub_(hub), acceptor_(ioc_), epoch_(detail::Clock::now()) {
    const tcp::endpoint endpoint(net::ip::make_address(address), port);
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(net::socket_base::max_listen_connections);
  }

  ~Server() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  /// Starts accepting and runs the event loop on `threads` background threads.
  void start(unsigned threads = 1) {
    do_accept();
    for (unsigned i = 0; i < std::max(1u, threads); ++i) workers_.emplace_back([this] { ioc_.run(); });
  }

  void stop() {
    ioc_.stop();
    workers_.clear();
  }

 private:
  void do_accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (!ec) std::make_shared<detail::HttpSession>(std::move(socket), hub_, epoch_)->run();
      if (acceptor_.is_open()) do_accept();
    });
  }

  SessionHub& hub_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  detail::Clock::time_point epoch_;
  std::vector<std::jthread> workers_;
};

}  // namespace sonograin

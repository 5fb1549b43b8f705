// Copyright 2026 The Untwist Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "untwist/session/server.hpp"

#include <sys/socket.h>

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <iterator>
#include <list>
#include <regex>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

namespace untwist::session {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

HttpReply route_http(const std::string& target, const VideoCatalog& catalog,
                     const SessionStore& store) {
  static const std::regex kFrame(R"(^/videos/([A-Za-z0-9_.-]+)/frames/([0-9]+)\.png$)");
  static const std::regex kSession(R"(^/sessions/([A-Za-z0-9_.-]+)$)");
  const std::string path = target.substr(0, target.find('?'));
  auto not_found = [](const std::string& what) {
    return HttpReply{404, "application/json", json{{"error", what}}.dump()};
  };

  try {
    if (path == "/videos") {
      json out = json::array();
      for (const auto& id : catalog.list()) {
        const auto v = catalog.open(id);
        if (!v) continue;
        out.push_back({{"id", id},
                       {"duration_s", v->duration_s()},
                       {"interval_s", v->interval_s()},
                       {"frame_count", v->timestamps().size()},
                       {"keyframe_count", v->keyframe_count()},
                       {"deep_description", v->deep_description().has_value()}});
      }
      return {200, "application/json", out.dump()};
    }
    std::smatch m;
    if (std::regex_match(path, m, kFrame)) {
      const auto v = catalog.open(m[1].str());
      if (!v) return not_found("unknown video");
      const auto index = std::stoull(m[2].str());
      if (index >= v->timestamps().size()) return not_found("frame index out of range");
      std::ifstream in(v->frame_path(index), std::ios::binary);
      if (!in) return not_found("frame missing");
      return {200, "image/png",
              std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>())};
    }
    if (std::regex_match(path, m, kSession)) {
      return {200, "application/json", json(store.load_session(m[1].str())).dump()};
    }
  } catch (const StoreCorrupt& e) {
    return {500, "application/json", json{{"error", "store_corrupt"}, {"detail", e.what()}}.dump()};
  } catch (const std::exception& e) {
    return {500, "application/json", json{{"error", "internal"}, {"detail", e.what()}}.dump()};
  }
  return not_found("no such route");
}

std::string handle_ws_text(const std::string& text, SessionService& service) {
  QueryPayload query;
  try {
    query = parse_query_frame(text);
  } catch (const ProtocolError& e) {
    return error_frame("bad_request", e.what()).dump();
  }
  try {
    const QueryResult result = service.handle_query(query);
    return reply_frame(result.turn_id, result.reply).dump(-1, ' ', false,
                                                          json::error_handler_t::replace);
  } catch (const SessionError& e) {
    return error_frame(std::string(to_string(e.code())), e.what()).dump();
  } catch (const std::exception& e) {
    spdlog::error("query failed: {}", e.what());
    return error_frame("internal", e.what()).dump();
  }
}

struct Server::Impl {
  SessionService& service;
  const VideoCatalog& catalog;
  const SessionStore& store;
  std::string address;
  unsigned short requested_port;

  net::io_context io;
  std::unique_ptr<tcp::acceptor> acceptor;
  std::thread accept_thread;
  std::atomic<bool> stopping{false};
  unsigned short bound_port = 0;

  struct Connection {
    std::thread thread;
    std::atomic<bool> done{false};
    std::atomic<int> fd{-1};
  };
  std::mutex conn_mu;
  std::list<Connection> connections;

  std::mutex stop_mu;
  std::condition_variable stop_cv;
  bool stopped = false;

  Impl(SessionService& s, const VideoCatalog& c, const SessionStore& st, std::string addr,
       unsigned short port)
      : service(s), catalog(c), store(st), address(std::move(addr)), requested_port(port) {}

  void serve_websocket(tcp::socket socket, http::request<http::string_body> req) {
    websocket::stream<tcp::socket> ws(std::move(socket));
    ws.set_option(websocket::stream_base::decorator([](websocket::response_type& res) {
      res.set(http::field::server, "untwist");
    }));
    ws.accept(req);
    beast::flat_buffer buffer;
    for (;;) {
      beast::error_code ec;
      ws.read(buffer, ec);
      if (ec) break;
      const std::string text = beast::buffers_to_string(buffer.data());
      buffer.consume(buffer.size());
      const std::string out = handle_ws_text(text, service);
      ws.text(true);
      ws.write(net::buffer(out), ec);
      if (ec) break;
    }
  }

  void serve_connection(tcp::socket socket) {
    beast::flat_buffer buffer;
    for (;;) {
      beast::error_code ec;
      http::request<http::string_body> req;
      http::read(socket, buffer, req, ec);
      if (ec) return;
      if (websocket::is_upgrade(req)) {
        if (req.target() == "/ws") {
          serve_websocket(std::move(socket), std::move(req));
          return;
        }
      }
      HttpReply reply;
      if (req.method() != http::verb::get) {
        reply = {405, "application/json", json{{"error", "method not allowed"}}.dump()};
      } else {
        reply = route_http(std::string(req.target()), catalog, store);
      }
      http::response<http::string_body> res{static_cast<http::status>(reply.status),
                                            req.version()};
      res.set(http::field::server, "untwist");
      res.set(http::field::content_type, reply.content_type);
      res.set(http::field::access_control_allow_origin, "*");
      res.keep_alive(req.keep_alive());
      res.body() = std::move(reply.body);
      res.prepare_payload();
      http::write(socket, res, ec);
      if (ec || !res.keep_alive()) return;
    }
  }

  void prune_finished() {
    std::lock_guard lock(conn_mu);
    for (auto it = connections.begin(); it != connections.end();) {
      if (it->done) {
        it->thread.join();
        it = connections.erase(it);
      } else {
        ++it;
      }
    }
  }

  void accept_loop() {
    while (!stopping) {
      beast::error_code ec;
      tcp::socket socket(io);
      acceptor->accept(socket, ec);
      if (ec) {
        if (stopping) break;
        spdlog::warn("accept failed: {}", ec.message());
        continue;
      }
      prune_finished();
      std::lock_guard lock(conn_mu);
      auto& conn = connections.emplace_back();
      conn.fd = socket.native_handle();
      conn.thread = std::thread([this, &conn, s = std::move(socket)]() mutable {
        try {
          serve_connection(std::move(s));
        } catch (const std::exception& e) {
          spdlog::warn("connection closed: {}", e.what());
        }
        conn.fd = -1;
        conn.done = true;
      });
    }
  }
};

Server::Server(SessionService& service, const VideoCatalog& catalog, const SessionStore& store,
               std::string address, unsigned short port)
    : impl_(std::make_unique<Impl>(service, catalog, store, std::move(address), port)) {}

Server::~Server() { stop(); }

unsigned short Server::start() {
  auto& d = *impl_;
  const tcp::endpoint ep(net::ip::make_address(d.address), d.requested_port);
  d.acceptor = std::make_unique<tcp::acceptor>(d.io);
  d.acceptor->open(ep.protocol());
  d.acceptor->set_option(net::socket_base::reuse_address(true));
  d.acceptor->bind(ep);
  d.acceptor->listen();
  d.bound_port = d.acceptor->local_endpoint().port();
  d.accept_thread = std::thread([&d] { d.accept_loop(); });
  spdlog::info("listening on {}:{}", d.address, d.bound_port);
  return d.bound_port;
}

unsigned short Server::port() const { return impl_->bound_port; }

void Server::stop() {
  auto& d = *impl_;
  if (d.stopping.exchange(true)) return;
  if (d.acceptor) {
    // Unblocks the accept() call; close() from another thread is not safe.
    ::shutdown(d.acceptor->native_handle(), SHUT_RDWR);
  }
  if (d.accept_thread.joinable()) d.accept_thread.join();
  {
    std::lock_guard lock(d.conn_mu);
    for (auto& c : d.connections)
      if (const int fd = c.fd; fd >= 0) ::shutdown(fd, SHUT_RDWR);
  }
  std::list<Impl::Connection> conns;
  {
    std::lock_guard lock(d.conn_mu);
    conns.splice(conns.end(), d.connections);
  }
  for (auto& c : conns)
    if (c.thread.joinable()) c.thread.join();
  if (d.acceptor) {
    beast::error_code ec;
    d.acceptor->close(ec);
  }
  {
    std::lock_guard lock(d.stop_mu);
    d.stopped = true;
  }
  d.stop_cv.notify_all();
}

void Server::wait() {
  auto& d = *impl_;
  std::unique_lock lock(d.stop_mu);
  d.stop_cv.wait(lock, [&] { return d.stopped; });
}

}  // namespace untwist::session

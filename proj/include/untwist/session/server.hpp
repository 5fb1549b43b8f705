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

#pragma once

#include <memory>
#include <string>

#include "untwist/session/service.hpp"
#include "untwist/session/store.hpp"

namespace untwist::session {

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Routes a GET request target:
///   /videos                          ingested videos and deep-description availability
///   /videos/{id}/frames/{index}.png  a sampled frame
///   /sessions/{id}                   session history
HttpReply route_http(const std::string& target, const VideoCatalog& catalog,
                     const SessionStore& store);

/// Answers one ws-v1 client frame with the reply or error frame to send.
std::string handle_ws_text(const std::string& text, SessionService& service);

/// HTTP + websocket front end. Each connection is served on its own thread;
/// websocket clients connect to /ws.
class Server {
 public:
  Server(SessionService& service, const VideoCatalog& catalog, const SessionStore& store,
         std::string address = "127.0.0.1", unsigned short port = 0);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting; returns the bound port.
  unsigned short start();
  unsigned short port() const;
  /// Closes the listener and all connections, then joins their threads.
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace untwist::session

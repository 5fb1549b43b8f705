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

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "untwist/annotate/box.hpp"
#include "untwist/geometry.hpp"

namespace untwist::session {

inline constexpr const char* kProtocolVersion = "untwist/ws-v1";

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One client question, as framed by the ws-v1 "query" message.
struct QueryPayload {
  std::string session_id;
  std::string video_id;
  double timestamp_s = 0;
  std::optional<annotate::BoundingBox> box;  // display space
  std::optional<Size2> display;
  std::string message;

  /// Throws ProtocolError: empty message or ids, box without display,
  /// negative or non-finite numbers.
  void validate() const;
  friend bool operator==(const QueryPayload&, const QueryPayload&) = default;
};

/// Parses and validates a ws-v1 client frame. Throws ProtocolError.
QueryPayload parse_query_frame(const std::string& text);
nlohmann::json query_frame(const QueryPayload& q);
nlohmann::json reply_frame(std::uint64_t turn_id, const std::string& text);
nlohmann::json error_frame(const std::string& code, const std::string& detail);

struct ChatTurn {
  std::uint64_t turn_id = 0;
  QueryPayload query;
  std::string reply;
  std::string created_at;  // RFC 3339 UTC
  std::optional<std::string> annotated_frame_ref;
  std::optional<std::string> error;  // set when the model call failed

  friend bool operator==(const ChatTurn&, const ChatTurn&) = default;
};

struct Session {
  std::string session_id;
  std::string video_id;
  std::vector<ChatTurn> turns;

  std::uint64_t next_turn_id() const { return turns.empty() ? 1 : turns.back().turn_id + 1; }
  friend bool operator==(const Session&, const Session&) = default;
};

void to_json(nlohmann::json& j, const QueryPayload& q);
void from_json(const nlohmann::json& j, QueryPayload& q);
void to_json(nlohmann::json& j, const ChatTurn& t);
void from_json(const nlohmann::json& j, ChatTurn& t);
void to_json(nlohmann::json& j, const Session& s);

std::string utc_now_rfc3339();

/// Thrown when a persisted record cannot be parsed.
class StoreCorrupt : public std::runtime_error {
 public:
  StoreCorrupt(const std::string& what, std::filesystem::path file, std::size_t line)
      : std::runtime_error(what), file_(std::move(file)), line_(line) {}
  const std::filesystem::path& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::filesystem::path file_;
  std::size_t line_;
};

class SessionStore {
 public:
  virtual ~SessionStore() = default;
  virtual void append_turn(const std::string& session_id, const ChatTurn& turn) = 0;
  /// Unknown sessions load as empty.
  virtual Session load_session(const std::string& session_id) const = 0;
  virtual std::vector<std::string> list_sessions() const = 0;
};

/// Append-only JSON lines, one file per session: <dir>/<session_id>.jsonl.
/// Appends to one session are serialized; distinct sessions proceed
/// concurrently.
class JsonlSessionStore final : public SessionStore {
 public:
  explicit JsonlSessionStore(std::filesystem::path dir);

  void append_turn(const std::string& session_id, const ChatTurn& turn) override;
  Session load_session(const std::string& session_id) const override;
  std::vector<std::string> list_sessions() const override;

  std::filesystem::path file_for(const std::string& session_id) const;

 private:
  std::mutex& lock_for(const std::string& session_id) const;

  std::filesystem::path dir_;
  mutable std::mutex map_mu_;
  mutable std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

/// Session ids become file names: [A-Za-z0-9_.-], 1..128 chars, not "." or "..".
bool is_safe_id(const std::string& id);

}  // namespace untwist::session

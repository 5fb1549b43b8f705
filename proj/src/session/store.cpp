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

#include "untwist/session/store.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

#include <fmt/format.h>

namespace untwist::session {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0; }

double number_field(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_number())
    throw ProtocolError(fmt::format("field '{}' must be a number", key));
  return it->get<double>();
}

std::string string_field(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw ProtocolError(fmt::format("field '{}' must be a string", key));
  return it->get<std::string>();
}

}  // namespace

bool is_safe_id(const std::string& id) {
  if (id.empty() || id.size() > 128 || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

void QueryPayload::validate() const {
  if (!is_safe_id(session_id)) throw ProtocolError("session_id must match [A-Za-z0-9_.-]{1,128}");
  if (!is_safe_id(video_id)) throw ProtocolError("video_id must match [A-Za-z0-9_.-]{1,128}");
  if (message.empty()) throw ProtocolError("message must be non-empty");
  if (!finite_nonneg(timestamp_s)) throw ProtocolError("timestamp_s must be a non-negative number");
  if (box) {
    if (!display) throw ProtocolError("a box requires display dimensions");
    if (!finite_nonneg(box->x) || !finite_nonneg(box->y) || !std::isfinite(box->width) ||
        !std::isfinite(box->height) || box->width <= 0 || box->height <= 0)
      throw ProtocolError("box needs x, y >= 0 and width, height > 0");
  }
  if (display && (!std::isfinite(display->w) || !std::isfinite(display->h) || display->w <= 0 ||
                  display->h <= 0))
    throw ProtocolError("display dimensions must be positive");
}

void to_json(json& j, const QueryPayload& q) {
  j = json{{"session_id", q.session_id},
           {"video_id", q.video_id},
           {"timestamp_s", q.timestamp_s},
           {"message", q.message}};
  j["box"] = q.box ? json{{"x", q.box->x}, {"y", q.box->y}, {"width", q.box->width},
                          {"height", q.box->height}}
                   : json(nullptr);
  j["display"] = q.display ? json{{"w", q.display->w}, {"h", q.display->h}} : json(nullptr);
}

void from_json(const json& j, QueryPayload& q) {
  if (!j.is_object()) throw ProtocolError("query must be a JSON object");
  q.session_id = string_field(j, "session_id");
  q.video_id = string_field(j, "video_id");
  q.timestamp_s = number_field(j, "timestamp_s");
  q.message = string_field(j, "message");
  q.box.reset();
  q.display.reset();
  if (const auto b = j.find("box"); b != j.end() && !b->is_null()) {
    if (!b->is_object()) throw ProtocolError("box must be an object or null");
    q.box = annotate::BoundingBox{number_field(*b, "x"), number_field(*b, "y"),
                                  number_field(*b, "width"), number_field(*b, "height"),
                                  annotate::Space::Display};
  }
  if (const auto d = j.find("display"); d != j.end() && !d->is_null()) {
    if (!d->is_object()) throw ProtocolError("display must be an object or null");
    q.display = Size2{number_field(*d, "w"), number_field(*d, "h")};
  }
}

QueryPayload parse_query_frame(const std::string& text) {
  const json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ProtocolError("frame is not a JSON object");
  if (doc.value("type", "") != "query") throw ProtocolError("unsupported frame type");
  QueryPayload q = doc.get<QueryPayload>();
  q.validate();
  return q;
}

json query_frame(const QueryPayload& q) {
  json j = q;
  j["type"] = "query";
  return j;
}

json reply_frame(std::uint64_t turn_id, const std::string& text) {
  return {{"type", "reply"}, {"turn_id", turn_id}, {"text", text}};
}

json error_frame(const std::string& code, const std::string& detail) {
  return {{"type", "error"}, {"code", code}, {"detail", detail}};
}

void to_json(json& j, const ChatTurn& t) {
  j = json{{"turn_id", t.turn_id},
           {"query", t.query},
           {"reply", t.reply},
           {"created_at", t.created_at}};
  j["annotated_frame_ref"] = t.annotated_frame_ref ? json(*t.annotated_frame_ref) : json(nullptr);
  j["error"] = t.error ? json(*t.error) : json(nullptr);
}

void from_json(const json& j, ChatTurn& t) {
  t.turn_id = j.at("turn_id").get<std::uint64_t>();
  t.query = j.at("query").get<QueryPayload>();
  t.reply = j.at("reply").get<std::string>();
  t.created_at = j.at("created_at").get<std::string>();
  t.annotated_frame_ref.reset();
  t.error.reset();
  if (const auto it = j.find("annotated_frame_ref"); it != j.end() && !it->is_null())
    t.annotated_frame_ref = it->get<std::string>();
  if (const auto it = j.find("error"); it != j.end() && !it->is_null())
    t.error = it->get<std::string>();
}

void to_json(json& j, const Session& s) {
  j = json{{"session_id", s.session_id}, {"video_id", s.video_id}, {"turns", s.turns}};
}

std::string utc_now_rfc3339() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}.{:03d}Z", tm.tm_year + 1900,
                     tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                     static_cast<int>(ms.count()));
}

JsonlSessionStore::JsonlSessionStore(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
}

fs::path JsonlSessionStore::file_for(const std::string& session_id) const {
  if (!is_safe_id(session_id)) throw std::invalid_argument("unsafe session id: " + session_id);
  return dir_ / (session_id + ".jsonl");
}

std::mutex& JsonlSessionStore::lock_for(const std::string& session_id) const {
  std::lock_guard lock(map_mu_);
  auto& slot = locks_[session_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void JsonlSessionStore::append_turn(const std::string& session_id, const ChatTurn& turn) {
  const fs::path file = file_for(session_id);
  const std::string line = json(turn).dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
  std::lock_guard lock(lock_for(session_id));
  std::ofstream out(file, std::ios::app | std::ios::binary);
  out << line;
  out.flush();
  if (!out) throw std::runtime_error("cannot append to " + file.string());
}

Session JsonlSessionStore::load_session(const std::string& session_id) const {
  const fs::path file = file_for(session_id);
  Session s;
  s.session_id = session_id;
  std::lock_guard lock(lock_for(session_id));
  std::ifstream in(file, std::ios::binary);
  if (!in) return s;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      s.turns.push_back(json::parse(line).get<ChatTurn>());
    } catch (const std::exception& e) {
      throw StoreCorrupt(fmt::format("{}:{}: unparsable session record ({})", file.string(),
                                     line_no, e.what()),
                         file, line_no);
    }
  }
  if (!s.turns.empty()) s.video_id = s.turns.front().query.video_id;
  return s;
}

std::vector<std::string> JsonlSessionStore::list_sessions() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir_))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
      ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace untwist::session

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

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "untwist/annotate/box.hpp"
#include "untwist/describe/deep_description.hpp"
#include "untwist/llm/gateway.hpp"
#include "untwist/media/ingest.hpp"
#include "untwist/session/store.hpp"

namespace untwist::session {

/// Index of the timestamp nearest `t`; the earlier one on ties. `timestamps`
/// must be non-empty and ascending.
std::size_t nearest_frame_index(double t, std::span<const double> timestamps);
const media::FrameRecord& nearest_frame(double t, std::span<const media::FrameRecord> frames);

/// An ingested video: sampled stills under <dir>/frames plus the optional
/// deep_description.json.
class VideoAsset {
 public:
  explicit VideoAsset(std::filesystem::path dir);

  const std::string& id() const { return id_; }
  const std::filesystem::path& dir() const { return dir_; }
  double duration_s() const { return duration_s_; }
  double interval_s() const { return interval_s_; }
  const std::vector<double>& timestamps() const { return timestamps_; }
  std::size_t keyframe_count() const { return keyframe_count_; }
  const std::optional<describe::DeepDescription>& deep_description() const { return dd_; }

  media::FrameRecord load_frame(std::size_t index) const;
  std::filesystem::path frame_path(std::size_t index) const;

 private:
  std::filesystem::path dir_;
  std::string id_;
  double duration_s_ = 0;
  double interval_s_ = 0;
  std::vector<double> timestamps_;
  std::size_t keyframe_count_ = 0;
  std::optional<describe::DeepDescription> dd_;
};

/// Videos are the subdirectories of a data directory holding frames/meta.json.
class VideoCatalog {
 public:
  explicit VideoCatalog(std::filesystem::path data_dir) : data_dir_(std::move(data_dir)) {}

  std::vector<std::string> list() const;
  /// nullptr for unknown ids.
  std::shared_ptr<const VideoAsset> open(const std::string& video_id) const;

 private:
  std::filesystem::path data_dir_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::shared_ptr<const VideoAsset>> cache_;
};

enum class SessionErrc {
  BadRequest,
  UnknownVideo,
  TimestampOutOfRange,
  VideoMismatch,
  DegenerateBox,
  GatewayFailure,
  StoreFailure,
};

std::string_view to_string(SessionErrc code);

class SessionError : public std::runtime_error {
 public:
  SessionError(SessionErrc code, const std::string& what,
               std::optional<std::uint64_t> turn_id = std::nullopt)
      : std::runtime_error(what), code_(code), turn_id_(turn_id) {}
  SessionErrc code() const { return code_; }
  std::optional<std::uint64_t> turn_id() const { return turn_id_; }

 private:
  SessionErrc code_;
  std::optional<std::uint64_t> turn_id_;
};

/// FIFO mutual exclusion: waiters are admitted in arrival order.
class TicketLock {
 public:
  void lock();
  void unlock();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::uint64_t next_ticket_ = 0;
  std::uint64_t serving_ = 0;
};

struct ServiceOptions {
  annotate::AnnotationStyle style;
  bool auto_contrast = false;
  std::size_t history_turns = 12;
};

struct QueryResult {
  std::uint64_t turn_id = 0;
  std::string reply;
  std::optional<std::string> annotated_frame_ref;
};

/// Text of the user message for a query. Region information is expressed
/// only by reference to the drawn box; no coordinates are included.
std::string user_turn_text(const QueryPayload& query);

std::string tutor_system_prompt(const describe::DeepDescription* dd);

/// System prompt with the narrative, prior successful turns (oldest beyond
/// `history_turns` collapsed into one marker), then the new user message
/// carrying `frame_png`.
std::vector<llm::ChatMessage> build_context(const describe::DeepDescription* dd,
                                            std::span<const ChatTurn> prior,
                                            const QueryPayload& query,
                                            std::vector<std::uint8_t> frame_png,
                                            std::size_t history_turns);

/// Orchestrates one question: frame lookup, annotation, context assembly,
/// the model call and persistence. Queries on one session run one at a
/// time in arrival order; distinct sessions run concurrently.
class SessionService {
 public:
  SessionService(const VideoCatalog& catalog, SessionStore& store, llm::ChatClient& chat,
                 std::filesystem::path annotated_dir, ServiceOptions options = {});

  /// Throws SessionError. A failed model call still persists the turn
  /// (with its error marker) before throwing GatewayFailure.
  QueryResult handle_query(const QueryPayload& payload);

  const std::filesystem::path& annotated_dir() const { return annotated_dir_; }

 private:
  TicketLock& lock_for(const std::string& session_id);

  const VideoCatalog& catalog_;
  SessionStore& store_;
  llm::ChatClient& chat_;
  std::filesystem::path annotated_dir_;
  ServiceOptions options_;
  std::mutex locks_mu_;
  std::map<std::string, std::unique_ptr<TicketLock>> locks_;
};

}  // namespace untwist::session

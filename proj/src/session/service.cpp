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

#include "untwist/session/service.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace untwist::session {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr Rgb kContrastCandidates[] = {
    {255, 0, 0}, {0, 200, 0}, {0, 0, 255}, {255, 255, 0}, {255, 0, 255}, {0, 255, 255}};

constexpr std::string_view kTutorPrompt =
    "You are a patient tutor helping a learner understand an educational video. "
    "Answer using the video's deep description below, the conversation so far, and the "
    "attached frame from the moment the learner paused. When part of the frame is outlined "
    "by a drawn box, the question is about what lies inside that box.";

constexpr std::string_view kRegionNote =
    "(The question refers to the region outlined by the drawn box in the attached frame.)";

constexpr std::string_view kOmittedMarker = "[Earlier exchanges in this conversation were omitted.]";

}  // namespace

std::size_t nearest_frame_index(double t, std::span<const double> timestamps) {
  if (timestamps.empty()) throw std::invalid_argument("no frames to choose from");
  // First timestamp >= t; compare with its predecessor, earlier wins ties.
  const auto it = std::lower_bound(timestamps.begin(), timestamps.end(), t);
  if (it == timestamps.begin()) return 0;
  if (it == timestamps.end()) return timestamps.size() - 1;
  const auto hi = static_cast<std::size_t>(it - timestamps.begin());
  const auto lo = hi - 1;
  return (t - timestamps[lo]) <= (timestamps[hi] - t) ? lo : hi;
}

const media::FrameRecord& nearest_frame(double t, std::span<const media::FrameRecord> frames) {
  std::vector<double> ts;
  ts.reserve(frames.size());
  for (const auto& f : frames) ts.push_back(f.timestamp_s);
  return frames[nearest_frame_index(t, ts)];
}

VideoAsset::VideoAsset(fs::path dir) : dir_(std::move(dir)), id_(dir_.filename().string()) {
  const fs::path meta_path = dir_ / "frames" / "meta.json";
  std::ifstream in(meta_path);
  if (!in) throw std::runtime_error("missing " + meta_path.string());
  const json meta = json::parse(in);
  duration_s_ = meta.at("duration_s").get<double>();
  const double fps = meta.at("fps_source").get<double>();
  interval_s_ = meta.contains("interval_s") ? meta["interval_s"].get<double>() : 1.0 / fps;
  timestamps_ = media::sample_timestamps(duration_s_, interval_s_);
  std::size_t stills = 0;
  while (stills < timestamps_.size() && fs::exists(frame_path(stills))) ++stills;
  if (stills == 0) throw std::runtime_error("no sampled frames in " + (dir_ / "frames").string());
  timestamps_.resize(stills);

  if (std::ifstream k(dir_ / "keyframes.json"); k) {
    const json manifest = json::parse(k, nullptr, false);
    if (manifest.is_array()) keyframe_count_ = manifest.size();
  }
  if (fs::exists(dir_ / "deep_description.json")) dd_ = describe::load(dir_ / "deep_description.json");
}

fs::path VideoAsset::frame_path(std::size_t index) const {
  return media::DirectoryFrameSource::still_path(dir_ / "frames", index);
}

media::FrameRecord VideoAsset::load_frame(std::size_t index) const {
  if (index >= timestamps_.size()) throw std::out_of_range("frame index out of range");
  return {index, timestamps_[index], read_png(frame_path(index))};
}

std::vector<std::string> VideoCatalog::list() const {
  std::vector<std::string> ids;
  if (!fs::is_directory(data_dir_)) return ids;
  for (const auto& entry : fs::directory_iterator(data_dir_))
    if (entry.is_directory() && fs::exists(entry.path() / "frames" / "meta.json"))
      ids.push_back(entry.path().filename().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::shared_ptr<const VideoAsset> VideoCatalog::open(const std::string& video_id) const {
  if (!is_safe_id(video_id)) return nullptr;
  std::lock_guard lock(mu_);
  if (auto it = cache_.find(video_id); it != cache_.end()) return it->second;
  const fs::path dir = data_dir_ / video_id;
  if (!fs::exists(dir / "frames" / "meta.json")) return nullptr;
  auto asset = std::make_shared<const VideoAsset>(dir);
  cache_[video_id] = asset;
  return asset;
}

std::string_view to_string(SessionErrc code) {
  switch (code) {
    case SessionErrc::BadRequest: return "bad_request";
    case SessionErrc::UnknownVideo: return "unknown_video";
    case SessionErrc::TimestampOutOfRange: return "timestamp_out_of_range";
    case SessionErrc::VideoMismatch: return "video_mismatch";
    case SessionErrc::DegenerateBox: return "degenerate_box";
    case SessionErrc::GatewayFailure: return "gateway_error";
    case SessionErrc::StoreFailure: return "store_error";
  }
  return "internal";
}

void TicketLock::lock() {
  std::unique_lock lock(mu_);
  const std::uint64_t ticket = next_ticket_++;
  cv_.wait(lock, [&] { return serving_ == ticket; });
}

void TicketLock::unlock() {
  {
    std::lock_guard lock(mu_);
    ++serving_;
  }
  cv_.notify_all();
}

std::string user_turn_text(const QueryPayload& query) {
  if (!query.box) return query.message;
  return query.message + "\n\n" + std::string(kRegionNote);
}

std::string tutor_system_prompt(const describe::DeepDescription* dd) {
  std::string out(kTutorPrompt);
  out += "\n\nDeep description of the video:\n";
  out += dd && !dd->narrative.empty() ? dd->narrative : "(not available)";
  return out;
}

std::vector<llm::ChatMessage> build_context(const describe::DeepDescription* dd,
                                            std::span<const ChatTurn> prior,
                                            const QueryPayload& query,
                                            std::vector<std::uint8_t> frame_png,
                                            std::size_t history_turns) {
  std::vector<const ChatTurn*> usable;
  for (const auto& t : prior)
    if (!t.error) usable.push_back(&t);

  std::vector<llm::ChatMessage> messages;
  messages.push_back(llm::ChatMessage::system(tutor_system_prompt(dd)));
  std::size_t first = 0;
  if (usable.size() > history_turns) {
    first = usable.size() - history_turns;
    messages.push_back(llm::ChatMessage::system(std::string(kOmittedMarker)));
  }
  for (std::size_t i = first; i < usable.size(); ++i) {
    messages.push_back(llm::ChatMessage::user(user_turn_text(usable[i]->query)));
    messages.push_back(llm::ChatMessage::assistant(usable[i]->reply));
  }
  std::vector<llm::ImageAttachment> images;
  if (!frame_png.empty()) images.push_back({std::move(frame_png), "high"});
  messages.push_back(llm::ChatMessage::user(user_turn_text(query), std::move(images)));
  return messages;
}

SessionService::SessionService(const VideoCatalog& catalog, SessionStore& store,
                               llm::ChatClient& chat, fs::path annotated_dir,
                               ServiceOptions options)
    : catalog_(catalog),
      store_(store),
      chat_(chat),
      annotated_dir_(std::move(annotated_dir)),
      options_(options) {}

TicketLock& SessionService::lock_for(const std::string& session_id) {
  std::lock_guard lock(locks_mu_);
  auto& slot = locks_[session_id];
  if (!slot) slot = std::make_unique<TicketLock>();
  return *slot;
}

QueryResult SessionService::handle_query(const QueryPayload& payload) {
  try {
    payload.validate();
  } catch (const ProtocolError& e) {
    throw SessionError(SessionErrc::BadRequest, e.what());
  }
  const auto video = catalog_.open(payload.video_id);
  if (!video) throw SessionError(SessionErrc::UnknownVideo, "unknown video: " + payload.video_id);
  if (payload.timestamp_s > video->duration_s())
    throw SessionError(SessionErrc::TimestampOutOfRange,
                       fmt::format("timestamp {} beyond video duration {}", payload.timestamp_s,
                                   video->duration_s()));

  std::lock_guard session_lock(lock_for(payload.session_id));

  Session session;
  try {
    session = store_.load_session(payload.session_id);
  } catch (const StoreCorrupt& e) {
    throw SessionError(SessionErrc::StoreFailure, e.what());
  }
  if (!session.turns.empty() && session.video_id != payload.video_id)
    throw SessionError(SessionErrc::VideoMismatch,
                       fmt::format("session {} belongs to video {}", payload.session_id,
                                   session.video_id));

  ChatTurn turn;
  turn.turn_id = session.next_turn_id();
  turn.query = payload;

  const std::size_t index = nearest_frame_index(payload.timestamp_s, video->timestamps());
  media::FrameRecord frame = video->load_frame(index);
  RgbImage image = std::move(frame.pixels);

  if (payload.box) {
    annotate::BoundingBox mapped;
    try {
      mapped = annotate::map_display_to_frame(
          *payload.box, *payload.display,
          {static_cast<double>(image.width()), static_cast<double>(image.height())});
    } catch (const annotate::DegenerateBox& e) {
      throw SessionError(SessionErrc::DegenerateBox, e.what());
    }
    annotate::AnnotationStyle style = options_.style;
    if (options_.auto_contrast)
      style.color = annotate::pick_contrast_color(image, mapped, style.stroke_px, kContrastCandidates);
    annotate::draw_box_in_place(image, mapped, style);

    const std::string ref = fmt::format("{}/turn_{:06d}.png", payload.session_id, turn.turn_id);
    fs::create_directories(annotated_dir_ / payload.session_id);
    write_png(annotated_dir_ / ref, image);
    turn.annotated_frame_ref = ref;
  }

  const auto* dd = video->deep_description() ? &*video->deep_description() : nullptr;
  auto messages = build_context(dd, session.turns, payload, encode_png(image),
                                options_.history_turns);

  try {
    turn.reply = chat_.chat(messages);
  } catch (const llm::GatewayError& e) {
    turn.error = fmt::format("{}: {}", llm::to_string(e.code()), e.what());
    turn.created_at = utc_now_rfc3339();
    store_.append_turn(payload.session_id, turn);
    spdlog::warn("session {} turn {}: {}", payload.session_id, turn.turn_id, *turn.error);
    throw SessionError(SessionErrc::GatewayFailure, *turn.error, turn.turn_id);
  }
  turn.created_at = utc_now_rfc3339();
  store_.append_turn(payload.session_id, turn);
  spdlog::info("session {} turn {} answered ({} chars)", payload.session_id, turn.turn_id,
               turn.reply.size());
  return {turn.turn_id, turn.reply, turn.annotated_frame_ref};
}

}  // namespace untwist::session

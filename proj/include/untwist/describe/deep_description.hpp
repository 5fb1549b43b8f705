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

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "untwist/keyframe/select.hpp"
#include "untwist/llm/gateway.hpp"
#include "untwist/media/ingest.hpp"

namespace untwist::describe {

inline constexpr const char* kSchemaVersion = "untwist/dd-v1";
inline constexpr const char* kRefinePromptVersion = "refine-v1";

class MalformedReply : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The five-field analysis of one keyframe.
struct FrameDescription {
  std::string math;
  std::string text;
  std::string graph;
  std::string other_shapes;
  std::string additional_info;
  double timestamp_s = 0;

  bool empty() const {
    return math.empty() && text.empty() && graph.empty() && other_shapes.empty() &&
           additional_info.empty();
  }
  friend bool operator==(const FrameDescription&, const FrameDescription&) = default;
};

struct DeepDescription {
  std::string narrative;
  std::vector<FrameDescription> frame_entries;  // ordered by timestamp_s
  std::string transcript_digest;
  std::string version = kSchemaVersion;

  friend bool operator==(const DeepDescription&, const DeepDescription&) = default;
};

void to_json(nlohmann::json& j, const FrameDescription& d);
void from_json(const nlohmann::json& j, FrameDescription& d);
void to_json(nlohmann::json& j, const DeepDescription& d);
void from_json(const nlohmann::json& j, DeepDescription& d);

void save(const std::filesystem::path& path, const DeepDescription& dd);
DeepDescription load(const std::filesystem::path& path);

/// Text parts plus at most one image, sent as a single user message.
struct PromptBundle {
  std::vector<std::string> parts;
  std::vector<llm::ImageAttachment> images;

  std::string text() const;
  llm::ChatMessage to_message() const { return llm::ChatMessage::user(text(), images); }
};

/// "12" for whole seconds, otherwise one decimal ("12.5").
std::string format_timestamp(double seconds);

PromptBundle build_frame_prompt(const media::Transcript& transcript,
                                const keyframe::KeyFrame& keyframe);

/// Extracts the first JSON object in `raw` (markdown fences and surrounding
/// prose are tolerated). Missing or null keys become empty strings; extra
/// keys are ignored. Throws MalformedReply when no object parses.
FrameDescription parse_frame_description(std::string_view raw, double timestamp_s);

/// System prompt for the refinement call, versioned by kRefinePromptVersion.
std::string_view refine_system_prompt();

struct DescribeOptions {
  std::size_t max_in_flight = 4;
};

/// One chat call per keyframe. A reply that does not parse is retried
/// once with a stricter instruction; a second failure records an empty
/// description for that timestamp. Gateway errors propagate.
std::vector<FrameDescription> describe_keyframes(const media::Transcript& transcript,
                                                 std::span<const keyframe::KeyFrame> keyframes,
                                                 llm::ChatClient& chat,
                                                 const DescribeOptions& options = {});

/// A single refinement call turning transcript plus entries into the
/// narrative. With no input at all the narrative stays empty and no call is
/// made.
DeepDescription compose_deep_description(const media::Transcript& transcript,
                                         std::vector<FrameDescription> entries,
                                         llm::ChatClient& chat);

}  // namespace untwist::describe

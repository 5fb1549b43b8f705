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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "untwist/describe/deep_description.hpp"
#include "untwist/keyframe/select.hpp"
#include "untwist/llm/gateway.hpp"
#include "untwist/media/ingest.hpp"

namespace untwist::pipeline {

nlohmann::json transcript_to_json(const media::Transcript& t);
media::Transcript transcript_from_json(const nlohmann::json& j);

struct IngestOptions {
  double interval_s = 2.0;
  std::optional<keyframe::KBounds> bounds;
  keyframe::ElbowOptions elbow;
  std::size_t workers = 4;
  /// Plain-text transcript used instead of transcribing the audio track.
  std::optional<std::filesystem::path> transcript_file;
};

struct IngestResult {
  std::size_t frame_count = 0;
  keyframe::ElbowChoice choice;
  std::vector<keyframe::KeyFrame> keyframes;
  media::Transcript transcript;
};

/// Samples, clusters and transcribes `source` into `out_dir`:
///   frames/frame_%06d.png + frames/meta.json   every sampled frame
///   keyframes/frame_%06d.png                   representatives, named by frame index
///   keyframes.json                             [{index, timestamp_s, cluster_id, distance}]
///   transcript.json
/// A source without audio yields an empty transcript. `transcriber` may be
/// null when a transcript file is given or no audio is expected.
IngestResult ingest(const media::FrameSource& source, const std::filesystem::path& out_dir,
                    const IngestOptions& options, llm::Transcriber* transcriber);

/// Reads frames/, keyframes.json and transcript.json written by ingest().
struct IngestedVideo {
  std::vector<keyframe::KeyFrame> keyframes;
  media::Transcript transcript;
};
IngestedVideo load_ingested(const std::filesystem::path& video_dir);

/// Per-keyframe descriptions plus the refinement call; writes
/// deep_description.json into `video_dir`.
describe::DeepDescription describe_video(const std::filesystem::path& video_dir,
                                         llm::ChatClient& chat,
                                         const describe::DescribeOptions& options = {});

}  // namespace untwist::pipeline

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


#include "untwist/pipeline.hpp"

#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "untwist/image.hpp"

namespace untwist::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path keyframe_path(const fs::path& video_dir, std::size_t index) {
  return video_dir / "keyframes" / fmt::format("frame_{:06d}.png", index);
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  out << doc.dump(2, ' ', false, json::error_handler_t::replace) << "\n";
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing " + path.string());
  return json::parse(in);
}

media::Transcript obtain_transcript(const media::FrameSource& source, const IngestOptions& options,
                                    llm::Transcriber* transcriber) {
  if (options.transcript_file) {
    std::ifstream in(*options.transcript_file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + options.transcript_file->string());
    media::Transcript t;
    t.text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    while (!t.text.empty() && (t.text.back() == '\n' || t.text.back() == '\r')) t.text.pop_back();
    return t;
  }
  AudioTrack audio;
  try {
    audio = media::extract_audio(source);
  } catch (const media::MediaError& e) {
    if (e.code() != media::MediaErrc::NoAudioStream) throw;
    spdlog::info("no audio stream; continuing with an empty transcript");
    return {};
  }
  if (!transcriber) {
    spdlog::warn("audio present but no transcriber configured; transcript left empty");
    return {};
  }
  return media::transcribe(audio, *transcriber);
}

}  // namespace

json transcript_to_json(const media::Transcript& t) {
  json segments = json::array();
  for (const auto& s : t.segments)
    segments.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}, {"text", s.text}});
  json j{{"text", t.text}, {"segments", segments}};
  j["language"] = t.language ? json(*t.language) : json(nullptr);
  return j;
}

media::Transcript transcript_from_json(const json& j) {
  media::Transcript t;
  t.text = j.value("text", "");
  if (const auto it = j.find("segments"); it != j.end() && it->is_array())
    for (const auto& s : *it)
      t.segments.push_back({s.at("start_s").get<double>(), s.at("end_s").get<double>(),
                            s.at("text").get<std::string>()});
  if (const auto it = j.find("language"); it != j.end() && it->is_string())
    t.language = it->get<std::string>();
  return t;
}

IngestResult ingest(const media::FrameSource& source, const fs::path& out_dir,
                    const IngestOptions& options, llm::Transcriber* transcriber) {
  IngestResult result;
  const auto frames = media::sample_frames(source, options.interval_s);
  result.frame_count = frames.size();

  fs::create_directories(out_dir / "frames");
  for (const auto& f : frames)
    write_png(media::DirectoryFrameSource::still_path(out_dir / "frames", f.index), f.pixels);
  media::write_frame_meta(out_dir / "frames", source.duration_s(), 1.0 / options.interval_s);
  {
    json meta = read_json(out_dir / "frames" / "meta.json");
    meta["interval_s"] = options.interval_s;
    write_json(out_dir / "frames" / "meta.json", meta);
  }

  std::vector<media::PreprocessedFrame> pre;
  pre.reserve(frames.size());
  for (const auto& f : frames) pre.push_back(media::preprocess_frame(f));
  const keyframe::GridMeanExtractor extractor;
  const auto vectors = keyframe::embed_frames(pre, extractor, options.workers);
  const auto features = keyframe::FeatureMatrix::from_vectors(vectors);

  result.choice = keyframe::choose_k(features, source.duration_s(), options.bounds, options.elbow);
  const auto model = keyframe::kmeans_best_of(features, result.choice.k, options.elbow.seed,
                                              options.elbow.restarts);
  result.keyframes = keyframe::select_representatives(model, features, frames);

  fs::create_directories(out_dir / "keyframes");
  json manifest = json::array();
  for (const auto& kf : result.keyframes) {
    write_png(keyframe_path(out_dir, kf.frame.index), kf.frame.pixels);
    manifest.push_back({{"index", kf.frame.index},
                        {"timestamp_s", kf.frame.timestamp_s},
                        {"cluster_id", kf.cluster_id},
                        {"distance", kf.distance_to_centroid}});
  }
  write_json(out_dir / "keyframes.json", manifest);

  result.transcript = obtain_transcript(source, options, transcriber);
  write_json(out_dir / "transcript.json", transcript_to_json(result.transcript));

  spdlog::info("ingested {} frames, {} keyframes (K={})", result.frame_count,
               result.keyframes.size(), result.choice.k);
  return result;
}

IngestedVideo load_ingested(const fs::path& video_dir) {
  IngestedVideo v;
  for (const auto& entry : read_json(video_dir / "keyframes.json")) {
    keyframe::KeyFrame kf;
    kf.frame.index = entry.at("index").get<std::size_t>();
    kf.frame.timestamp_s = entry.at("timestamp_s").get<double>();
    kf.frame.pixels = read_png(keyframe_path(video_dir, kf.frame.index));
    kf.cluster_id = entry.at("cluster_id").get<std::size_t>();
    kf.distance_to_centroid = entry.at("distance").get<double>();
    v.keyframes.push_back(std::move(kf));
  }
  if (fs::exists(video_dir / "transcript.json"))
    v.transcript = transcript_from_json(read_json(video_dir / "transcript.json"));
  return v;
}

describe::DeepDescription describe_video(const fs::path& video_dir, llm::ChatClient& chat,
                                         const describe::DescribeOptions& options) {
  const IngestedVideo video = load_ingested(video_dir);
  auto entries = describe::describe_keyframes(video.transcript, video.keyframes, chat, options);
  auto dd = describe::compose_deep_description(video.transcript, std::move(entries), chat);
  describe::save(video_dir / "deep_description.json", dd);
  return dd;
}

}  // namespace untwist::pipeline

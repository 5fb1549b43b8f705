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

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "untwist/audio.hpp"
#include "untwist/image.hpp"
#include "untwist/llm/gateway.hpp"

namespace untwist::media {

enum class MediaErrc { UnreadableSource, EmptyVideo, ZeroSizeFrame, NoAudioStream, InvalidArgument };

class MediaError : public std::runtime_error {
 public:
  MediaError(MediaErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  MediaErrc code() const { return code_; }

 private:
  MediaErrc code_;
};

inline constexpr double kDefaultSamplingInterval = 2.0;
inline constexpr int kModelInputSize = 224;

struct FrameRecord {
  std::size_t index = 0;
  double timestamp_s = 0;  // index * sampling interval
  RgbImage pixels;
};

struct NormalizationConstants {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
};

/// 224 x 224 x 3 normalized tensor in HWC order.
struct PreprocessedFrame {
  std::vector<float> data;
  std::size_t source_index = 0;

  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * kModelInputSize + static_cast<std::size_t>(x)) * 3 +
                static_cast<std::size_t>(c)];
  }
};

struct TranscriptSegment {
  double start_s = 0;
  double end_s = 0;
  std::string text;
};

struct Transcript {
  std::string text;
  std::vector<TranscriptSegment> segments;  // ordered, non-overlapping
  std::optional<std::string> language;
};

/// A video viewed as stills addressable by time.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual double duration_s() const = 0;
  /// Still shown at time `t` (clamped to the available range).
  virtual RgbImage frame_at(double t) const = 0;
  /// Sidecar WAV, if the source carries audio.
  virtual std::optional<std::filesystem::path> audio_path() const { return std::nullopt; }
};

/// Directory of frame_%06d.png stills plus meta.json
/// {"duration_s": number, "fps_source": number}. Still i is shown from
/// i / fps_source. An optional audio.wav beside them is the audio track.
class DirectoryFrameSource final : public FrameSource {
 public:
  explicit DirectoryFrameSource(std::filesystem::path dir);

  double duration_s() const override { return duration_s_; }
  double fps_source() const { return fps_source_; }
  std::size_t still_count() const { return stills_; }
  RgbImage frame_at(double t) const override;
  std::optional<std::filesystem::path> audio_path() const override;
  const std::filesystem::path& dir() const { return dir_; }

  static std::filesystem::path still_path(const std::filesystem::path& dir, std::size_t i);

 private:
  std::filesystem::path dir_;
  double duration_s_ = 0;
  double fps_source_ = 0;
  std::size_t stills_ = 0;
};

/// Runs an external decoder `exe <input-path> <output-dir> <interval_s>`
/// that must exit 0 after writing the frame-directory layout (and optionally
/// audio.wav) into output-dir, then reads that directory.
class DecoderFrameSource final : public FrameSource {
 public:
  DecoderFrameSource(const std::filesystem::path& decoder, const std::filesystem::path& input,
                     const std::filesystem::path& work_dir, double interval_s);

  double duration_s() const override { return frames_->duration_s(); }
  RgbImage frame_at(double t) const override { return frames_->frame_at(t); }
  std::optional<std::filesystem::path> audio_path() const override {
    return frames_->audio_path();
  }

 private:
  std::unique_ptr<DirectoryFrameSource> frames_;
};

/// Runs `argv[0]` with arguments and waits; returns the exit status
/// (-1 if it could not be started or was killed by a signal).
int run_process(const std::vector<std::string>& argv);

void write_frame_meta(const std::filesystem::path& dir, double duration_s, double fps_source);

/// t = k * interval for k = 0, 1, ... while t < duration.
std::vector<double> sample_timestamps(double duration_s, double interval_s);

/// Throws MediaError(EmptyVideo) for duration <= 0 and
/// MediaError(UnreadableSource) when a still cannot be decoded.
std::vector<FrameRecord> sample_frames(const FrameSource& source, double interval_s);

/// Bilinear, pixel-center aligned; no aspect preservation.
RgbImage resize_bilinear(const RgbImage& image, int width, int height);

PreprocessedFrame preprocess_frame(const FrameRecord& frame,
                                   const NormalizationConstants& norm = {});

/// Mono 16 kHz track from the source's audio. Throws MediaError(NoAudioStream)
/// when the source has no audio or the stream is empty.
AudioTrack extract_audio(const FrameSource& source);

/// Text is the gateway's output verbatim. Gateway errors propagate with the
/// original code and added context.
Transcript transcribe(const AudioTrack& audio, llm::Transcriber& gateway);

}  // namespace untwist::media

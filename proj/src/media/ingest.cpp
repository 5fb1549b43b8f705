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

#include "untwist/media/ingest.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <json.hpp>

namespace untwist::media {
namespace fs = std::filesystem;

namespace {

struct Tap {
  int i0, i1;
  float w1;  // weight of i1
};

std::vector<Tap> bilinear_taps(int src, int dst) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int d = 0; d < dst; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src - 1);
    taps[static_cast<std::size_t>(d)] = {i0, i1, static_cast<float>(s - i0)};
  }
  return taps;
}

// Interpolated channel values in [0, 255], HWC.
std::vector<float> resize_to_float(const RgbImage& image, int width, int height) {
  const auto xs = bilinear_taps(image.width(), width);
  const auto ys = bilinear_taps(image.height(), height);
  const auto src = image.bytes();
  const auto stride = static_cast<std::size_t>(image.width()) * 3;
  std::vector<float> out(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  std::size_t o = 0;
  for (const Tap& ty : ys) {
    const std::uint8_t* r0 = src.data() + static_cast<std::size_t>(ty.i0) * stride;
    const std::uint8_t* r1 = src.data() + static_cast<std::size_t>(ty.i1) * stride;
    for (const Tap& tx : xs) {
      const auto a = static_cast<std::size_t>(tx.i0) * 3;
      const auto b = static_cast<std::size_t>(tx.i1) * 3;
      for (std::size_t c = 0; c < 3; ++c) {
        const float top = r0[a + c] + (r0[b + c] - r0[a + c]) * tx.w1;
        const float bot = r1[a + c] + (r1[b + c] - r1[a + c]) * tx.w1;
        out[o++] = top + (bot - top) * ty.w1;
      }
    }
  }
  return out;
}

}  // namespace

DirectoryFrameSource::DirectoryFrameSource(fs::path dir) : dir_(std::move(dir)) {
  const fs::path meta = dir_ / "meta.json";
  std::ifstream in(meta);
  if (!in) throw MediaError(MediaErrc::UnreadableSource, "missing " + meta.string());
  const auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("duration_s") ||
      !doc["duration_s"].is_number() || !doc.contains("fps_source") ||
      !doc["fps_source"].is_number())
    throw MediaError(MediaErrc::UnreadableSource, "malformed " + meta.string());
  duration_s_ = doc["duration_s"].get<double>();
  fps_source_ = doc["fps_source"].get<double>();
  if (!(fps_source_ > 0))
    throw MediaError(MediaErrc::UnreadableSource, "fps_source must be positive in " + meta.string());
  while (fs::exists(still_path(dir_, stills_))) ++stills_;
  if (duration_s_ > 0 && stills_ == 0)
    throw MediaError(MediaErrc::UnreadableSource, "no frame_%06d.png stills in " + dir_.string());
}

fs::path DirectoryFrameSource::still_path(const fs::path& dir, std::size_t i) {
  return dir / fmt::format("frame_{:06d}.png", i);
}

RgbImage DirectoryFrameSource::frame_at(double t) const {
  if (stills_ == 0) throw MediaError(MediaErrc::UnreadableSource, "source has no stills");
  const double pos = std::max(0.0, t) * fps_source_;
  const auto i = std::min(static_cast<std::size_t>(std::floor(pos + 1e-9)), stills_ - 1);
  try {
    return read_png(still_path(dir_, i));
  } catch (const ImageIoError& e) {
    throw MediaError(MediaErrc::UnreadableSource, e.what());
  }
}

std::optional<fs::path> DirectoryFrameSource::audio_path() const {
  fs::path wav = dir_ / "audio.wav";
  if (fs::exists(wav)) return wav;
  return std::nullopt;
}

int run_process(const std::vector<std::string>& argv) {
  if (argv.empty()) return -1;
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  const pid_t pid = fork();
  if (pid < 0) return -1;
  if (pid == 0) {
    execvp(args[0], args.data());
    _exit(127);
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) return -1;
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

DecoderFrameSource::DecoderFrameSource(const fs::path& decoder, const fs::path& input,
                                       const fs::path& work_dir, double interval_s) {
  if (!(interval_s > 0)) throw MediaError(MediaErrc::InvalidArgument, "interval_s must be > 0");
  fs::create_directories(work_dir);
  const int rc = run_process(
      {decoder.string(), input.string(), work_dir.string(), fmt::format("{}", interval_s)});
  if (rc != 0)
    throw MediaError(MediaErrc::UnreadableSource,
                     fmt::format("decoder {} exited with {} for {}", decoder.string(), rc,
                                 input.string()));
  frames_ = std::make_unique<DirectoryFrameSource>(work_dir);
}

void write_frame_meta(const fs::path& dir, double duration_s, double fps_source) {
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  out << nlohmann::json{{"duration_s", duration_s}, {"fps_source", fps_source}}.dump(2) << '\n';
  if (!out) throw MediaError(MediaErrc::UnreadableSource, "cannot write meta.json in " + dir.string());
}

std::vector<double> sample_timestamps(double duration_s, double interval_s) {
  if (!(interval_s > 0) || !std::isfinite(interval_s))
    throw MediaError(MediaErrc::InvalidArgument, "interval_s must be a positive number");
  if (!(duration_s > 0)) throw MediaError(MediaErrc::EmptyVideo, "video duration is not positive");
  // Times within rounding error of the duration count as the duration itself.
  const double end = duration_s - 1e-9 * std::max(1.0, duration_s);
  std::vector<double> out;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * interval_s;
    if (k > 0 && !(t < end)) break;
    out.push_back(t);
  }
  return out;
}

std::vector<FrameRecord> sample_frames(const FrameSource& source, double interval_s) {
  const auto times = sample_timestamps(source.duration_s(), interval_s);
  std::vector<FrameRecord> frames;
  frames.reserve(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    RgbImage pixels = source.frame_at(times[k]);
    if (pixels.empty())
      throw MediaError(MediaErrc::UnreadableSource, fmt::format("empty still at t={}", times[k]));
    frames.push_back({k, times[k], std::move(pixels)});
  }
  return frames;
}

RgbImage resize_bilinear(const RgbImage& image, int width, int height) {
  if (image.empty()) throw MediaError(MediaErrc::ZeroSizeFrame, "cannot resize an empty image");
  const auto values = resize_to_float(image, width, height);
  RgbImage out(width, height);
  auto dst = out.bytes();
  for (std::size_t i = 0; i < values.size(); ++i)
    dst[i] = static_cast<std::uint8_t>(std::clamp(std::lround(values[i]), 0L, 255L));
  return out;
}

PreprocessedFrame preprocess_frame(const FrameRecord& frame, const NormalizationConstants& norm) {
  if (frame.pixels.empty())
    throw MediaError(MediaErrc::ZeroSizeFrame, fmt::format("frame {} has zero size", frame.index));
  PreprocessedFrame out;
  out.source_index = frame.index;
  out.data = resize_to_float(frame.pixels, kModelInputSize, kModelInputSize);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const std::size_t c = i % 3;
    out.data[i] = (out.data[i] / 255.0f - norm.mean[c]) / norm.stddev[c];
  }
  return out;
}

AudioTrack extract_audio(const FrameSource& source) {
  const auto path = source.audio_path();
  if (!path) throw MediaError(MediaErrc::NoAudioStream, "source has no audio stream");
  std::ifstream in(*path, std::ios::binary);
  if (!in) throw MediaError(MediaErrc::NoAudioStream, "cannot open " + path->string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  AudioTrack track;
  try {
    track = resample(decode_wav(bytes), kSpeechSampleRate);
  } catch (const WavError& e) {
    throw MediaError(MediaErrc::UnreadableSource, path->string() + ": " + e.what());
  }
  if (track.empty()) throw MediaError(MediaErrc::NoAudioStream, "audio stream is empty");
  return track;
}

Transcript transcribe(const AudioTrack& audio, llm::Transcriber& gateway) {
  if (audio.empty()) throw MediaError(MediaErrc::InvalidArgument, "cannot transcribe empty audio");
  try {
    return Transcript{gateway.transcribe_audio(audio), {}, std::nullopt};
  } catch (const llm::GatewayError& e) {
    throw llm::GatewayError(e.code(), std::string("transcription failed: ") + e.what(),
                            e.http_status());
  }
}

}  // namespace untwist::media

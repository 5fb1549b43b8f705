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

#include "untwist/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string_view>

namespace untwist {
namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_tag(std::vector<std::uint8_t>& out, std::string_view tag) {
  out.insert(out.end(), tag.begin(), tag.end());
}

bool tag_is(const std::uint8_t* p, std::string_view tag) {
  return std::memcmp(p, tag.data(), 4) == 0;
}

}  // namespace

AudioTrack decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes.data(), "RIFF") || !tag_is(bytes.data() + 8, "WAVE"))
    throw WavError("not a RIFF/WAVE stream");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::size_t len = le32(chunk + 4);
    const std::size_t avail = std::min(len, bytes.size() - pos - 8);
    if (tag_is(chunk, "fmt ")) {
      if (avail < 16) throw WavError("truncated fmt chunk");
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      bits = le16(chunk + 22);
      if (format == 0xFFFE && avail >= 26) format = le16(chunk + 32);  // extensible
    } else if (tag_is(chunk, "data")) {
      data = chunk + 8;
      data_len = avail;
    }
    pos += 8 + len + (len & 1);
  }
  if (channels == 0 || rate == 0) throw WavError("missing fmt chunk");
  if (data == nullptr) throw WavError("missing data chunk");

  const bool is_float = format == 3 && bits == 32;
  if (!(format == 1 && (bits == 8 || bits == 16 || bits == 32)) && !is_float)
    throw WavError("unsupported WAV sample format");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data_len / frame_bytes;

  AudioTrack track;
  track.sample_rate = static_cast<int>(rate);
  track.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* s = data + f * frame_bytes + c * bytes_per_sample;
      double v = 0;
      if (is_float) {
        float fv;
        std::memcpy(&fv, s, 4);
        v = fv;
      } else if (bits == 8) {
        v = (static_cast<int>(s[0]) - 128) / 128.0;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(le16(s)) / 32768.0;
      } else {
        v = static_cast<std::int32_t>(le32(s)) / 2147483648.0;
      }
      acc += v;
    }
    track.samples[f] = static_cast<float>(acc / channels);
  }
  return track;
}

std::vector<std::uint8_t> encode_wav(const AudioTrack& track) {
  const auto data_len = static_cast<std::uint32_t>(track.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  put_tag(out, "RIFF");
  put32(out, 36 + data_len);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(track.sample_rate));
  put32(out, static_cast<std::uint32_t>(track.sample_rate * 2));
  put16(out, 2);
  put16(out, 16);
  put_tag(out, "data");
  put32(out, data_len);
  for (float s : track.samples) {
    const double clamped = std::clamp(static_cast<double>(s), -1.0, 1.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(
                   std::lround(clamped * 32767.0))));
  }
  return out;
}

AudioTrack resample(const AudioTrack& track, int to_rate) {
  if (to_rate <= 0 || track.sample_rate <= 0) throw WavError("invalid sample rate");
  if (track.sample_rate == to_rate) return track;
  AudioTrack out;
  out.sample_rate = to_rate;
  const auto n_in = track.samples.size();
  if (n_in == 0) return out;
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_in) * to_rate / track.sample_rate));
  out.samples.resize(n_out);
  const double step = static_cast<double>(track.sample_rate) / to_rate;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double src = static_cast<double>(i) * step;
    const auto i0 = std::min(static_cast<std::size_t>(src), n_in - 1);
    const auto i1 = std::min(i0 + 1, n_in - 1);
    const double frac = src - static_cast<double>(i0);
    out.samples[i] = static_cast<float>(track.samples[i0] * (1.0 - frac) +
                                        track.samples[i1] * frac);
  }
  return out;
}

}  // namespace untwist

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
#include <span>
#include <stdexcept>
#include <vector>

namespace untwist {

inline constexpr int kSpeechSampleRate = 16000;

/// Mono PCM samples in [-1, 1].
struct AudioTrack {
  int sample_rate = kSpeechSampleRate;
  std::vector<float> samples;

  std::size_t sample_count() const { return samples.size(); }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
  bool empty() const { return samples.empty(); }
};

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// RIFF/WAVE with 8/16/32-bit integer PCM or 32-bit float. Channels are
/// averaged down to mono; the rate is preserved.
AudioTrack decode_wav(std::span<const std::uint8_t> bytes);

/// 16-bit PCM mono WAV.
std::vector<std::uint8_t> encode_wav(const AudioTrack& track);

/// Linear-interpolation resampler. Output length is round(n * to / from).
AudioTrack resample(const AudioTrack& track, int to_rate);

}  // namespace untwist

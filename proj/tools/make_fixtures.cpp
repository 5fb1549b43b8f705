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


// Regenerates tests/fixtures: a 10-still sample directory with audio and a
// 60-second three-slide lecture with a scripted transcript.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "untwist/audio.hpp"
#include "untwist/media/ingest.hpp"

namespace fs = std::filesystem;

namespace {

const cv::Scalar kInk(20, 20, 20);

void text(cv::Mat& m, const std::string& s, int x, int y, double scale) {
  cv::putText(m, s, {x, y}, cv::FONT_HERSHEY_SIMPLEX, scale, kInk, 2, cv::LINE_AA);
}

cv::Mat slide(int which, int tick) {
  cv::Mat m(360, 640, CV_8UC3, cv::Scalar(250, 248, 245));
  switch (which) {
    case 0:
      text(m, "Derivatives", 40, 70, 1.6);
      text(m, "rate of change", 40, 130, 0.9);
      cv::line(m, {60, 320}, {600, 320}, kInk, 2);
      cv::line(m, {60, 320}, {60, 160}, kInk, 2);
      for (int x = 0; x < 520; x += 4) {
        const int y0 = 320 - static_cast<int>(0.0005 * x * x);
        const int y1 = 320 - static_cast<int>(0.0005 * (x + 4) * (x + 4));
        cv::line(m, {60 + x, y0}, {64 + x, y1}, cv::Scalar(200, 60, 30), 2);
      }
      break;
    case 1:
      text(m, "Power rule", 40, 70, 1.6);
      text(m, "d/dx x^n = n x^(n-1)", 40, 170, 1.2);
      text(m, "example: d/dx x^3 = 3 x^2", 40, 240, 0.9);
      break;
    default:
      text(m, "Tangent lines", 40, 70, 1.6);
      cv::circle(m, {320, 220}, 90, cv::Scalar(40, 140, 40), 3);
      cv::line(m, {180, 130}, {500, 130}, cv::Scalar(30, 30, 200), 3);
      cv::rectangle(m, {470, 250}, {590, 330}, kInk, 2);
      break;
  }
  // Progress strip so consecutive stills of one slide differ slightly.
  cv::rectangle(m, {0, 352}, {10 + 21 * tick, 359}, cv::Scalar(180, 180, 180), cv::FILLED);
  return m;
}

void write_dir(const fs::path& dir, double duration, double fps, int stills, int slide_len) {
  fs::create_directories(dir);
  for (int i = 0; i < stills; ++i) {
    const auto path = untwist::media::DirectoryFrameSource::still_path(dir, i);
    cv::imwrite(path.string(), slide(std::min(i / slide_len, 2), i % slide_len));
  }
  untwist::media::write_frame_meta(dir, duration, fps);
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("tests/fixtures");

  write_dir(root / "sample", 20.0, 0.5, 10, 4);
  untwist::AudioTrack tone;
  tone.sample_rate = 8000;
  for (int i = 0; i < 8000; ++i)
    tone.samples.push_back(0.25f * static_cast<float>(std::sin(2 * std::numbers::pi * 440 * i / 8000.0)));
  const auto wav = untwist::encode_wav(tone);
  std::ofstream(root / "sample" / "audio.wav", std::ios::binary)
      .write(reinterpret_cast<const char*>(wav.data()), static_cast<std::streamsize>(wav.size()));

  write_dir(root / "lecture60", 60.0, 0.5, 30, 10);
  std::ofstream(root / "lecture60" / "transcript.txt")
      << "Today we look at derivatives as a rate of change. The curve on the first slide "
         "gets steeper as x grows. Next comes the power rule: the derivative of x to the n "
         "is n times x to the n minus one, so x cubed becomes three x squared. Finally we "
         "draw tangent lines, which touch a curve at a single point and share its slope.\n";
  std::cout << "fixtures written to " << root << "\n";
  return 0;
}

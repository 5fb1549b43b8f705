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

#include "untwist/annotate/box.hpp"

#include <algorithm>
#include <cmath>

namespace untwist::annotate {
namespace {

struct PixelSpan {
  int x0, y0, x1, y1;  // half-open
};

PixelSpan clip_to_image(const RgbImage& image, const BoundingBox& box) {
  if (box.space != Space::FramePixels)
    throw std::invalid_argument("draw_box needs a frame-pixel box");
  if (!(box.width > 0) || !(box.height > 0)) throw DegenerateBox("box has zero area");
  PixelSpan s{
      static_cast<int>(std::clamp(std::lround(box.x), 0L, static_cast<long>(image.width()))),
      static_cast<int>(std::clamp(std::lround(box.y), 0L, static_cast<long>(image.height()))),
      static_cast<int>(std::clamp(std::lround(box.x + box.width), 0L, static_cast<long>(image.width()))),
      static_cast<int>(std::clamp(std::lround(box.y + box.height), 0L, static_cast<long>(image.height())))};
  if (s.x1 - s.x0 < 1 || s.y1 - s.y0 < 1) throw DegenerateBox("box does not cover a pixel");
  return s;
}

template <typename Fn>
void for_each_band_pixel(const PixelSpan& s, int stroke, Fn&& fn) {
  for (int y = s.y0; y < s.y1; ++y) {
    const bool full_row = y < s.y0 + stroke || y >= s.y1 - stroke;
    if (full_row) {
      for (int x = s.x0; x < s.x1; ++x) fn(x, y);
    } else {
      for (int x = s.x0; x < std::min(s.x0 + stroke, s.x1); ++x) fn(x, y);
      for (int x = std::max(s.x1 - stroke, s.x0 + stroke); x < s.x1; ++x) fn(x, y);
    }
  }
}

}  // namespace

BoundingBox map_display_to_frame(const BoundingBox& box, Size2 display, Size2 frame) {
  if (!(display.w > 0) || !(display.h > 0) || !(frame.w > 0) || !(frame.h > 0))
    throw std::invalid_argument("display and frame dimensions must be positive");
  const double sx = frame.w / display.w;
  const double sy = frame.h / display.h;
  const double x0 = std::clamp(box.x * sx, 0.0, frame.w);
  const double y0 = std::clamp(box.y * sy, 0.0, frame.h);
  const double x1 = std::clamp((box.x + box.width) * sx, 0.0, frame.w);
  const double y1 = std::clamp((box.y + box.height) * sy, 0.0, frame.h);
  const double rx0 = std::round(x0), ry0 = std::round(y0);
  const double rx1 = std::round(x1), ry1 = std::round(y1);
  if (rx1 - rx0 < 1 || ry1 - ry0 < 1) throw DegenerateBox("mapped box has less than one pixel of area");
  return {rx0, ry0, rx1 - rx0, ry1 - ry0, Space::FramePixels};
}

void draw_box_in_place(RgbImage& image, const BoundingBox& box, const AnnotationStyle& style) {
  if (style.stroke_px < 1) throw std::invalid_argument("stroke_px must be >= 1");
  const PixelSpan s = clip_to_image(image, box);
  for_each_band_pixel(s, style.stroke_px, [&](int x, int y) { image.set(x, y, style.color); });
}

RgbImage draw_box(const RgbImage& image, const BoundingBox& box, const AnnotationStyle& style) {
  RgbImage out = image;
  draw_box_in_place(out, box, style);
  return out;
}

Rgb pick_contrast_color(const RgbImage& image, const BoundingBox& box, int stroke_px,
                        std::span<const Rgb> candidates) {
  if (candidates.empty()) throw std::invalid_argument("no candidate colors");
  const PixelSpan s = clip_to_image(image, box);
  double sum[3] = {0, 0, 0};
  std::size_t n = 0;
  for_each_band_pixel(s, std::max(stroke_px, 1), [&](int x, int y) {
    const Rgb c = image.at(x, y);
    sum[0] += c.r;
    sum[1] += c.g;
    sum[2] += c.b;
    ++n;
  });
  const double mean[3] = {sum[0] / n, sum[1] / n, sum[2] / n};
  Rgb best = candidates.front();
  double best_d = -1;
  for (const Rgb& c : candidates) {
    const double dr = c.r - mean[0], dg = c.g - mean[1], db = c.b - mean[2];
    const double d = dr * dr + dg * dg + db * db;
    if (d > best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::string color_name(Rgb color) {
  struct Named {
    Rgb rgb;
    const char* name;
  };
  static constexpr Named kNames[] = {
      {{255, 0, 0}, "red"},      {{0, 255, 0}, "green"},  {{0, 0, 255}, "blue"},
      {{255, 255, 0}, "yellow"}, {{255, 0, 255}, "magenta"}, {{0, 255, 255}, "cyan"},
      {{0, 0, 0}, "black"},      {{255, 255, 255}, "white"}, {{255, 128, 0}, "orange"}};
  const Named* best = &kNames[0];
  int best_d = 1 << 30;
  for (const auto& n : kNames) {
    const int dr = color.r - n.rgb.r, dg = color.g - n.rgb.g, db = color.b - n.rgb.b;
    const int d = dr * dr + dg * dg + db * db;
    if (d < best_d) {
      best_d = d;
      best = &n;
    }
  }
  return best->name;
}

}  // namespace untwist::annotate

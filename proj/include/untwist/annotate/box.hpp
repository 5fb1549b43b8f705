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

#include <span>
#include <stdexcept>
#include <string>

#include "untwist/geometry.hpp"
#include "untwist/image.hpp"

namespace untwist::annotate {

class DegenerateBox : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Space { Display, FramePixels };

struct BoundingBox {
  double x = 0;
  double y = 0;
  double width = 0;
  double height = 0;
  Space space = Space::Display;

  Rect rect() const { return {x, y, width, height}; }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline constexpr Rgb kRed{255, 0, 0};

struct AnnotationStyle {
  Rgb color = kRed;
  int stroke_px = 4;
};

/// Scales a display-space box into frame pixels, clamps it to the frame and
/// rounds the edges to whole pixels. Throws DegenerateBox when less than one
/// pixel of width or height survives, std::invalid_argument on non-positive
/// dimensions.
BoundingBox map_display_to_frame(const BoundingBox& box, Size2 display, Size2 frame);

/// Burns the box outline into a copy of `image`. The stroke grows inward
/// from the box edge, so nothing outside the box changes; a stroke wider
/// than half the box fills it. The box must be in frame pixels; it is
/// clipped to the image. Throws DegenerateBox for empty boxes and
/// std::invalid_argument for stroke_px < 1.
RgbImage draw_box(const RgbImage& image, const BoundingBox& box, const AnnotationStyle& style);
void draw_box_in_place(RgbImage& image, const BoundingBox& box, const AnnotationStyle& style);

/// Of `candidates`, the color farthest (RGB Euclidean) from the mean color
/// of the band the outline will cover.
Rgb pick_contrast_color(const RgbImage& image, const BoundingBox& box, int stroke_px,
                        std::span<const Rgb> candidates);

std::string color_name(Rgb color);

}  // namespace untwist::annotate

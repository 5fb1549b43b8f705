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


#include <doctest.h>

#include <random>

#include "support.hpp"
#include "untwist/annotate/box.hpp"

using namespace untwist;
using namespace untwist::annotate;

namespace {

BoundingBox px(double x, double y, double w, double h) { return {x, y, w, h, Space::FramePixels}; }

bool in_band(int x, int y, int x0, int y0, int x1, int y1, int stroke) {
  if (x < x0 || x >= x1 || y < y0 || y >= y1) return false;
  return x < x0 + stroke || x >= x1 - stroke || y < y0 + stroke || y >= y1 - stroke;
}

}  // namespace

TEST_SUITE("annotate") {
  TEST_CASE("map: uniform scale factor 3") {
    const auto m = map_display_to_frame({100, 50, 200, 100}, {640, 360}, {1920, 1080});
    CHECK(m == px(300, 150, 600, 300));
  }

  TEST_CASE("map: identity when display equals frame") {
    const auto m = map_display_to_frame({13, 7, 40, 22}, {800, 600}, {800, 600});
    CHECK(m == px(13, 7, 40, 22));
  }

  TEST_CASE("map: scale then clamp") {
    const auto m = map_display_to_frame({630, 350, 50, 50}, {640, 360}, {1280, 720});
    CHECK(m == px(1260, 700, 20, 20));
  }

  TEST_CASE("map: anisotropic scale rounds edges") {
    const auto m = map_display_to_frame({10.2, 10.2, 10.1, 10.1}, {100, 200}, {300, 100});
    // x: 30.6 -> 31, right 60.9 -> 61; y: 5.1 -> 5, bottom 10.15 -> 10
    CHECK(m == px(31, 5, 30, 5));
  }

  TEST_CASE("map: a box entirely off-frame is degenerate") {
    CHECK_THROWS_AS(map_display_to_frame({700, 10, 20, 20}, {640, 360}, {1280, 720}), DegenerateBox);
    CHECK_THROWS_AS(map_display_to_frame({10, 10, 0.1, 20}, {640, 360}, {640, 360}), DegenerateBox);
    CHECK_THROWS_AS(map_display_to_frame({10, 10, 5, 5}, {0, 360}, {640, 360}), std::invalid_argument);
  }

  TEST_CASE("draw: post-condition instance") {
    std::mt19937_64 rng(1);
    const RgbImage frame = untwist::testing::random_image(rng, 200, 120);
    const RgbImage out = draw_box(frame, px(10, 10, 100, 50), {});
    CHECK(out.at(10, 10) == kRed);
    CHECK(out.at(13, 40) == kRed);
    CHECK(out.at(14, 40) == frame.at(14, 40));
    CHECK(out.at(60, 35) == frame.at(60, 35));
    CHECK(out.at(109, 59) == kRed);
    CHECK(out.at(110, 59) == frame.at(110, 59));
  }

  TEST_CASE("draw: zero-width box and bad styles") {
    const RgbImage frame(50, 50);
    CHECK_THROWS_AS(draw_box(frame, px(10, 10, 0, 20), {}), DegenerateBox);
    CHECK_THROWS_AS(draw_box(frame, px(60, 60, 5, 5), {}), DegenerateBox);
    CHECK_THROWS_AS(draw_box(frame, px(10, 10, 20, 20), {kRed, 0}), std::invalid_argument);
    CHECK_THROWS_AS(draw_box(frame, {10, 10, 20, 20, Space::Display}, {}), std::invalid_argument);
  }

  TEST_CASE("draw: matches the band oracle pixel for pixel") {
    std::mt19937_64 rng(2);
    const RgbImage frame = untwist::testing::random_image(rng, 90, 70);
    const AnnotationStyle style{{1, 2, 3}, 3};
    const RgbImage out = draw_box(frame, px(5, 8, 40, 30), style);
    for (int y = 0; y < 70; ++y)
      for (int x = 0; x < 90; ++x) {
        if (in_band(x, y, 5, 8, 45, 38, 3)) REQUIRE(out.at(x, y) == style.color);
        else REQUIRE(out.at(x, y) == frame.at(x, y));
      }
  }

  TEST_CASE("draw: two disjoint boxes differ only in their own bands") {
    std::mt19937_64 rng(3);
    const RgbImage frame = untwist::testing::random_image(rng, 120, 80);
    const RgbImage a = draw_box(frame, px(5, 5, 30, 30), {});
    const RgbImage b = draw_box(frame, px(60, 20, 40, 40), {});
    for (int y = 0; y < 80; ++y)
      for (int x = 0; x < 120; ++x) {
        const bool ba = in_band(x, y, 5, 5, 35, 35, 4);
        const bool bb = in_band(x, y, 60, 20, 100, 60, 4);
        if (a.at(x, y) != b.at(x, y)) REQUIRE((ba || bb));
        if (!ba && !bb) REQUIRE(a.at(x, y) == b.at(x, y));
      }
  }

  TEST_CASE("draw: idempotent") {
    std::mt19937_64 rng(4);
    const RgbImage frame = untwist::testing::random_image(rng, 64, 64);
    const RgbImage once = draw_box(frame, px(3, 4, 50, 40), {});
    CHECK(draw_box(once, px(3, 4, 50, 40), {}) == once);
  }

  TEST_CASE("draw: a stroke wider than half the box fills it") {
    const RgbImage frame(20, 20, {9, 9, 9});
    const RgbImage out = draw_box(frame, px(2, 2, 6, 6), {kRed, 4});
    for (int y = 2; y < 8; ++y)
      for (int x = 2; x < 8; ++x) CHECK(out.at(x, y) == kRed);
    CHECK(out.at(8, 8) == Rgb{9, 9, 9});
  }

  TEST_CASE("draw: boxes overhanging the image are clipped") {
    const RgbImage frame(30, 30, {9, 9, 9});
    const RgbImage out = draw_box(frame, px(20, 20, 40, 40), {kRed, 2});
    CHECK(out.at(20, 20) == kRed);
    CHECK(out.at(29, 25) == kRed);  // right edge clipped to the image edge
    CHECK(out.at(25, 25) == Rgb{9, 9, 9});
  }

  TEST_CASE("contrast color avoids the band hue") {
    const std::vector<Rgb> candidates{{255, 0, 0}, {0, 255, 255}};
    const RgbImage reddish(40, 40, {230, 20, 20});
    CHECK(pick_contrast_color(reddish, px(5, 5, 20, 20), 4, candidates) == Rgb{0, 255, 255});
    const RgbImage teal(40, 40, {0, 200, 200});
    CHECK(pick_contrast_color(teal, px(5, 5, 20, 20), 4, candidates) == Rgb{255, 0, 0});
  }

  TEST_CASE("color names") {
    CHECK(color_name(kRed) == "red");
    CHECK(color_name({250, 5, 5}) == "red");
    CHECK(color_name({0, 0, 250}) == "blue");
  }
}

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

namespace untwist {

struct Point {
  double x = 0;
  double y = 0;
};

/// Axis-aligned rectangle; [x, x + width) by [y, y + height).
struct Rect {
  double x = 0;
  double y = 0;
  double width = 0;
  double height = 0;

  double right() const { return x + width; }
  double bottom() const { return y + height; }
  Point center() const { return {x + width / 2.0, y + height / 2.0}; }
  bool contains(Point p) const {
    return p.x >= x && p.x < right() && p.y >= y && p.y < bottom();
  }
  bool intersects(const Rect& o) const {
    return x < o.right() && o.x < right() && y < o.bottom() && o.y < bottom();
  }
  Rect inflated(double margin) const {
    return {x - margin, y - margin, width + 2 * margin, height + 2 * margin};
  }

  friend bool operator==(const Rect&, const Rect&) = default;
};

struct Size2 {
  double w = 0;
  double h = 0;

  friend bool operator==(const Size2&, const Size2&) = default;
};

}  // namespace untwist

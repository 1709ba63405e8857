// Copyright 2026 The contrawarp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <vector>

#include "contrawarp/common.hpp"

namespace contrawarp {

/// Loss weight of a landmark moved by the warp chain.
inline constexpr double kChangedWeight = 1.0;
/// Loss weight of a landmark left in place.
inline constexpr double kUnchangedWeight = 0.1;

struct Landmark {
  Point2 pos;
  double weight = kUnchangedWeight;
  bool changed = false;
  bool on_image = true;

  friend bool operator==(const Landmark&, const Landmark&) = default;
};

/// K landmark points. Off-image points keep on_image = false and weight 0.
struct LandmarkSet {
  std::vector<Landmark> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  Landmark& operator[](std::size_t i) { return points[i]; }
  const Landmark& operator[](std::size_t i) const { return points[i]; }

  static LandmarkSet from_points(const std::vector<Point2>& pts) {
    LandmarkSet s;
    s.points.reserve(pts.size());
    for (const auto& p : pts) s.points.push_back({p, kUnchangedWeight, false, true});
    return s;
  }

  std::vector<double> weights() const {
    std::vector<double> w;
    w.reserve(points.size());
    for (const auto& p : points) w.push_back(p.weight);
    return w;
  }

  /// Marks points outside [0, w-1] x [0, h-1] as off-image with zero weight.
  void clip_to(int width, int height) {
    for (auto& p : points) {
      if (!p.pos.finite() || p.pos.x < 0.0 || p.pos.y < 0.0 || p.pos.x > width - 1.0 ||
          p.pos.y > height - 1.0) {
        p.on_image = false;
        p.weight = 0.0;
      }
    }
  }

  friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;
};

}  // namespace contrawarp

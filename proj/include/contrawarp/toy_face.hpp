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

// Procedural cartoon faces with analytic landmarks. The expression label is a
// function of mouth curvature only; every other parameter is a nuisance.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string_view>
#include <vector>

#include "contrawarp/common.hpp"
#include "contrawarp/image.hpp"
#include "contrawarp/landmarks.hpp"
#include "contrawarp/rng.hpp"

namespace contrawarp {

enum class Expression : int { kNegative = 0, kNeutral = 1, kPositive = 2 };

inline constexpr int kNumExpressions = 3;
inline constexpr std::array<std::string_view, kNumExpressions> kExpressionNames{
    "negative", "neutral", "positive"};

/// Landmark order: mouth (left corner, left inner, right inner, right corner),
/// eyes (left top, left bottom, right top, right bottom), brows (left outer,
/// left inner, right inner, right outer). "Left" is the smaller image x.
inline constexpr int kToyLandmarkCount = 12;

/// Index that lands at position i after a horizontal flip.
inline std::vector<int> toy_flip_permutation() { return {3, 2, 1, 0, 6, 7, 4, 5, 11, 10, 9, 8}; }

struct ToyFaceParams {
  double mouth_curvature = 0.0;  // [-1, 1]
  double brow_angle = 0.0;       // [-1, 1]
  double eye_openness = 0.5;     // [0, 1]
  Point2 head_offset{};          // pixels at 64 x 64, scaled with size
  double identity_shade = 0.55;  // [0.3, 0.8]

  Expression label() const {
    if (mouth_curvature > 0.33) return Expression::kPositive;
    if (mouth_curvature < -0.33) return Expression::kNegative;
    return Expression::kNeutral;
  }

  static ToyFaceParams sample(Rng& rng, double max_offset = 1.5) {
    ToyFaceParams p;
    p.mouth_curvature = rng.uniform(-1.0, 1.0);
    p.brow_angle = rng.uniform(-1.0, 1.0);
    p.eye_openness = rng.uniform(0.0, 1.0);
    p.head_offset = {rng.uniform(-max_offset, max_offset), rng.uniform(-max_offset, max_offset)};
    p.identity_shade = rng.uniform(0.3, 0.8);
    return p;
  }
};

struct ToyFaceRenderConfig {
  double noise_sd = 0.02;
  double background = 0.12;
  int supersample = 3;
};

/// Geometry of one face at a given size, shared by rendering and landmarks.
struct ToyFaceGeometry {
  double s = 1.0;  // size / 64
  Point2 center;
  double head_rx = 0, head_ry = 0;
  Point2 eye[2];
  double eye_rx = 0, eye_ry = 0;
  Point2 brow_end[2][2];  // [eye][outer, inner]
  double brow_half_thickness = 0;
  Point2 mouth_center;
  double mouth_half_width = 0, mouth_bend = 0, mouth_half_thickness = 0;

  ToyFaceGeometry(const ToyFaceParams& p, int size) {
    s = size / 64.0;
    center = {(size - 1) / 2.0 + p.head_offset.x * s, (size - 1) / 2.0 + p.head_offset.y * s};
    head_rx = 21.0 * s;
    head_ry = 26.0 * s;
    eye_rx = 4.0 * s;
    eye_ry = (0.7 + 2.8 * std::clamp(p.eye_openness, 0.0, 1.0)) * s;
    eye[0] = {center.x - 9.5 * s, center.y - 5.0 * s};
    eye[1] = {center.x + 9.5 * s, center.y - 5.0 * s};
    const double a = std::clamp(p.brow_angle, -1.0, 1.0) * 25.0 * std::numbers::pi / 180.0;
    const double hl = 5.0 * s;
    brow_half_thickness = 1.0 * s;
    for (int e = 0; e < 2; ++e) {
      const Point2 bc{eye[e].x, eye[e].y - 8.5 * s};
      // Direction from outer to inner end; mirrored for the right brow.
      const Point2 dir = e == 0 ? Point2{std::cos(a), std::sin(a)} : Point2{-std::cos(a), std::sin(a)};
      brow_end[e][0] = bc - hl * dir;
      brow_end[e][1] = bc + hl * dir;
    }
    mouth_center = {center.x, center.y + 12.0 * s};
    mouth_half_width = 9.0 * s;
    mouth_bend = std::clamp(p.mouth_curvature, -1.0, 1.0) * 4.0 * s;
    mouth_half_thickness = 1.2 * s;
  }

  /// Mouth centre-line at parameter t in [-1, 1]; corners rise when smiling.
  Point2 mouth_point(double t) const {
    return {mouth_center.x + t * mouth_half_width, mouth_center.y - mouth_bend * (t * t - 0.5)};
  }

  LandmarkSet landmarks() const {
    std::vector<Point2> pts;
    for (double t : {-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0}) pts.push_back(mouth_point(t));
    for (int e = 0; e < 2; ++e) {
      pts.push_back({eye[e].x, eye[e].y - eye_ry});
      pts.push_back({eye[e].x, eye[e].y + eye_ry});
    }
    pts.push_back(brow_end[0][0]);
    pts.push_back(brow_end[0][1]);
    pts.push_back(brow_end[1][1]);
    pts.push_back(brow_end[1][0]);
    return LandmarkSet::from_points(pts);
  }
};

namespace detail {

inline double segment_distance(Point2 p, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = ab.squared_norm();
  double t = len2 > 0.0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + t * ab);
}

inline bool inside_ellipse(Point2 p, Point2 c, double rx, double ry) {
  const double dx = (p.x - c.x) / rx, dy = (p.y - c.y) / ry;
  return dx * dx + dy * dy <= 1.0;
}

}  // namespace detail

struct ToyFace {
  ImageBuffer image;
  LandmarkSet landmarks;
  Expression label;
};

/// Renders a supersampled grayscale face and its 12 analytic landmarks.
inline ToyFace gen_toy_face(const ToyFaceParams& params, int size, Rng& rng,
                            const ToyFaceRenderConfig& rcfg = {}) {
  if (size < 32) throw ConfigError("gen_toy_face: size must be >= 32");
  const ToyFaceGeometry g(params, size);
  constexpr int kMouthSegments = 48;
  std::vector<Point2> mouth_line;
  for (int i = 0; i <= kMouthSegments; ++i)
    mouth_line.push_back(g.mouth_point(-1.0 + 2.0 * i / kMouthSegments));

  const double shade = std::clamp(params.identity_shade, 0.0, 1.0);
  const double ink = 0.25 * shade;
  const int ss = std::max(1, rcfg.supersample);

  auto color_at = [&](Point2 q) {
    if (!detail::inside_ellipse(q, g.center, g.head_rx, g.head_ry)) return rcfg.background;
    for (const auto& e : g.eye)
      if (detail::inside_ellipse(q, e, g.eye_rx, g.eye_ry)) return ink;
    for (const auto& b : g.brow_end)
      if (detail::segment_distance(q, b[0], b[1]) <= g.brow_half_thickness) return ink;
    if (std::abs(q.x - g.mouth_center.x) <= g.mouth_half_width + 2.0 * g.mouth_half_thickness &&
        std::abs(q.y - g.mouth_center.y) <= std::abs(g.mouth_bend) + 2.0 * g.mouth_half_thickness) {
      for (int i = 0; i < kMouthSegments; ++i)
        if (detail::segment_distance(q, mouth_line[i], mouth_line[i + 1]) <= g.mouth_half_thickness)
          return ink;
    }
    return shade;
  };

  ToyFace face{ImageBuffer(size, size, 1), g.landmarks(), params.label()};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx)
          acc += color_at({x - 0.5 + (sx + 0.5) / ss, y - 0.5 + (sy + 0.5) / ss});
      double v = acc / (ss * ss);
      if (rcfg.noise_sd > 0.0) v += rcfg.noise_sd * rng.normal();
      face.image.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  face.landmarks.clip_to(size, size);
  return face;
}

}  // namespace contrawarp

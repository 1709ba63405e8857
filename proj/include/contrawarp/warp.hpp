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

// Circular local warp: an inverse (pull) displacement field that drags the
// content around a centre c towards a target m, fading to zero at radius r.
//
// For an output pixel x with |x - c| < r, the source location is
//
//   u = x - ((r^2 - |x-c|^2) / (r^2 - |x-c|^2 + |m-c|^2))^2 (m - c)
//
// Pixels on or outside the circle are copied unchanged.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "contrawarp/common.hpp"
#include "contrawarp/image.hpp"
#include "contrawarp/landmarks.hpp"
#include "contrawarp/rng.hpp"

namespace contrawarp {

struct LocalWarp {
  Point2 center;
  Point2 target;
  double radius = 1.0;

  Point2 step() const { return target - center; }

  /// radius > 0, finite, and the step strictly inside the circle of influence.
  bool valid() const {
    return center.finite() && target.finite() && std::isfinite(radius) && radius > 0.0 &&
           step().squared_norm() < radius * radius;
  }

  std::string describe() const {
    std::ostringstream os;
    os << "LocalWarp{c=(" << center.x << "," << center.y << "), m=(" << target.x << ","
       << target.y << "), r=" << radius << "}";
    return os.str();
  }

  friend bool operator==(const LocalWarp&, const LocalWarp&) = default;
};

/// Warps applied strictly in order; empty is the identity.
using WarpChain = std::vector<LocalWarp>;

/// Displacement subtracted from x to obtain its source point (zero outside the circle).
inline Point2 warp_displacement(Point2 x, const LocalWarp& w) {
  const double r2 = w.radius * w.radius;
  const double d2 = squared_distance(x, w.center);
  if (d2 >= r2) return {0.0, 0.0};
  const Point2 step = w.step();
  const double inner = r2 - d2;
  double f = inner / (inner + step.squared_norm());
  f *= f;
  return f * step;
}

/// Source point of output location x under the pull map.
inline Point2 eval_inverse_source(Point2 x, const LocalWarp& w) {
  if (squared_distance(x, w.center) >= w.radius * w.radius) return x;
  return x - warp_displacement(x, w);
}

namespace detail {

inline void warp_rows(const ImageBuffer& src, ImageBuffer& dst, const LocalWarp& w, int y_begin,
                      int y_end) {
  const double r2 = w.radius * w.radius;
  const int channels = src.channels();
  for (int y = y_begin; y < y_end; ++y) {
    const double dy = y - w.center.y;
    const double span2 = r2 - dy * dy;
    if (span2 <= 0.0) continue;
    const double half = std::sqrt(span2);
    const int x_lo = std::max(0, static_cast<int>(std::floor(w.center.x - half)));
    const int x_hi = std::min(src.width() - 1, static_cast<int>(std::ceil(w.center.x + half)));
    for (int x = x_lo; x <= x_hi; ++x) {
      const Point2 p{static_cast<double>(x), static_cast<double>(y)};
      if (squared_distance(p, w.center) >= r2) continue;
      const Point2 u = eval_inverse_source(p, w);
      for (int c = 0; c < channels; ++c)
        dst.at(x, y, c) = static_cast<float>(bilinear_sample(src, u, c));
    }
  }
}

inline std::pair<int, int> circle_rows(const ImageBuffer& img, const LocalWarp& w) {
  const int y_lo = std::max(0, static_cast<int>(std::floor(w.center.y - w.radius)));
  const int y_hi = std::min(img.height(), static_cast<int>(std::ceil(w.center.y + w.radius)) + 1);
  return {y_lo, std::max(y_lo, y_hi)};
}

}  // namespace detail

/// Applies one warp. Only rows intersecting the circle are visited; everything
/// else is a straight copy.
inline ImageBuffer apply_warp(const ImageBuffer& img, const LocalWarp& w) {
  ImageBuffer out = img;
  if (w.target == w.center) return out;
  const auto [y_lo, y_hi] = detail::circle_rows(img, w);
  detail::warp_rows(img, out, w, y_lo, y_hi);
  return out;
}

/// Same result as apply_warp, with the circle's rows split across `threads`
/// workers. Each pixel is computed by identical arithmetic, so the output is
/// bit-identical to the single-threaded path.
inline ImageBuffer apply_warp_parallel(const ImageBuffer& img, const LocalWarp& w, int threads) {
  ImageBuffer out = img;
  if (w.target == w.center) return out;
  const auto [y_lo, y_hi] = detail::circle_rows(img, w);
  const int rows = y_hi - y_lo;
  threads = std::clamp(threads, 1, std::max(1, rows));
  if (threads == 1) {
    detail::warp_rows(img, out, w, y_lo, y_hi);
    return out;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    const int b = y_lo + rows * t / threads;
    const int e = y_lo + rows * (t + 1) / threads;
    pool.emplace_back([&img, &out, &w, b, e] { detail::warp_rows(img, out, w, b, e); });
  }
  return out;
}

inline ImageBuffer apply_warp_chain(const ImageBuffer& img, const WarpChain& chain) {
  ImageBuffer out = img;
  for (const auto& w : chain) out = apply_warp(out, w);
  return out;
}

inline ImageBuffer apply_warp_chain_parallel(const ImageBuffer& img, const WarpChain& chain,
                                             int threads) {
  ImageBuffer out = img;
  for (const auto& w : chain) out = apply_warp_parallel(out, w, threads);
  return out;
}

/// Push direction of the warp: finds x with eval_inverse_source(x, w) == p.
///
/// Fixed-point iteration x <- p + D(x) starting from p, where D is the
/// displacement field. The iteration is not a contraction near the rim of the
/// circle behind the centre, where the pull map folds; there the solution is
/// bracketed instead. Every displacement is parallel to (m - c), so
/// x = p + t (m - c) with t = g(x) in [0, 1], and the smallest root of
/// h(t) = t - g(p + t (m - c)) is located by a grid scan plus bisection.
inline Point2 forward_map_point(Point2 p, const LocalWarp& w, double tol = 1e-4,
                                int max_iter = 50) {
  if (!(tol > 0.0)) throw ConfigError("forward_map_point: tol must be positive");
  const double r2 = w.radius * w.radius;
  if (squared_distance(p, w.center) >= r2 || w.target == w.center) return p;
  const double target_residual = tol * 1e-3;
  Point2 x = p;
  double residual = 0.0;
  for (int k = 0; k <= max_iter; ++k) {
    residual = distance(eval_inverse_source(x, w), p);
    if (residual <= target_residual) return x;
    if (k == max_iter) break;
    x = p + warp_displacement(x, w);
  }

  const Point2 step = w.step();
  const double step_len = step.norm();
  auto h = [&](double t) {
    const Point2 q = p + t * step;
    const double f = squared_distance(q, w.center) >= r2 ? 0.0 : warp_displacement(q, w).norm() / step_len;
    return t - f;
  };
  constexpr int kScan = 256;
  double lo = 0.0, hi = -1.0;
  for (int i = 1; i <= kScan; ++i) {
    const double t = static_cast<double>(i) / kScan;
    if (h(t) >= 0.0) {
      hi = t;
      lo = static_cast<double>(i - 1) / kScan;
      break;
    }
  }
  if (hi >= 0.0) {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (h(mid) >= 0.0 ? hi : lo) = mid;
      const Point2 cand = p + hi * step;
      residual = distance(eval_inverse_source(cand, w), p);
      if (residual <= target_residual || hi - lo <= 0.0) break;
    }
    const Point2 cand = p + hi * step;
    residual = distance(eval_inverse_source(cand, w), p);
    if (residual <= tol) return cand;
  }
  std::ostringstream os;
  os << "forward_map_point did not converge for p=(" << p.x << "," << p.y << ") under "
     << w.describe() << " (residual " << residual << ")";
  throw WarpInversionError(os.str());
}

/// Pushes every landmark through the chain. A point whose total displacement
/// exceeds `epsilon` is marked changed (weight 1.0); others get weight 0.1.
/// Off-image points keep weight 0.
inline LandmarkSet warp_landmarks(const LandmarkSet& lms, const WarpChain& chain,
                                  double epsilon = 0.5) {
  if (!(epsilon > 0.0)) throw ConfigError("warp_landmarks: epsilon must be positive");
  LandmarkSet out = lms;
  for (auto& lm : out.points) {
    const Point2 start = lm.pos;
    for (const auto& w : chain) lm.pos = forward_map_point(lm.pos, w);
    lm.changed = distance(lm.pos, start) > epsilon;
    lm.weight = !lm.on_image ? 0.0 : (lm.changed ? kChangedWeight : kUnchangedWeight);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter sampling

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

enum class PlacementMode { kRandom, kLandmarkBased };

/// Ranges are expressed at `reference_size` and rescaled to the actual image.
struct WarpSamplerConfig {
  Interval center_range{50.0, 150.0};
  Interval sq_step_range{100.0, 200.0};
  Interval radius_range{50.0, 80.0};
  // Reserved; local warps have no strength parameter.
  Interval strength_range{150.0, 300.0};
  int repeat_n = 2;
  PlacementMode placement_mode = PlacementMode::kRandom;
  double landmark_jitter = 5.0;
  double reference_size = 224.0;

  void validate() const {
    auto ok = [](const Interval& r) { return r.lo > 0.0 && r.hi >= r.lo && std::isfinite(r.hi); };
    if (!ok(center_range) || !ok(sq_step_range) || !ok(radius_range))
      throw ConfigError("warp sampler: intervals must be nonempty and positive");
    if (repeat_n < 0) throw ConfigError("warp sampler: repeat_n must be >= 0");
    if (!(landmark_jitter >= 0.0)) throw ConfigError("warp sampler: landmark_jitter must be >= 0");
    if (!(reference_size > 0.0)) throw ConfigError("warp sampler: reference_size must be > 0");
  }

  friend bool operator==(const WarpSamplerConfig&, const WarpSamplerConfig&) = default;
};

/// Draws `repeat_n` warps for an image of side `image_size`.
///
/// In landmark-based mode the centre is a uniformly chosen on-image landmark
/// plus per-coordinate jitter. Step and radius are redrawn until |m - c| < r.
inline WarpChain sample_warp_chain(Rng& rng, const WarpSamplerConfig& cfg, int image_size,
                                   const LandmarkSet* lms = nullptr) {
  cfg.validate();
  if (image_size <= 0) throw ConfigError("warp sampler: image_size must be positive");
  std::vector<std::size_t> anchors;
  if (cfg.placement_mode == PlacementMode::kLandmarkBased && cfg.repeat_n > 0) {
    if (lms == nullptr) throw ConfigError("landmark-based warp placement requires landmarks");
    for (std::size_t i = 0; i < lms->size(); ++i)
      if ((*lms)[i].on_image) anchors.push_back(i);
    if (anchors.empty()) throw ConfigError("landmark-based warp placement: no on-image landmarks");
  }

  const double scale = image_size / cfg.reference_size;
  WarpChain chain;
  chain.reserve(cfg.repeat_n);
  for (int i = 0; i < cfg.repeat_n; ++i) {
    Point2 c;
    if (cfg.placement_mode == PlacementMode::kRandom) {
      c.x = scale * rng.uniform(cfg.center_range.lo, cfg.center_range.hi);
      c.y = scale * rng.uniform(cfg.center_range.lo, cfg.center_range.hi);
    } else {
      const Point2 anchor = (*lms)[anchors[rng.uniform_index(anchors.size())]].pos;
      const double j = scale * cfg.landmark_jitter;
      c.x = anchor.x + rng.uniform(-j, j);
      c.y = anchor.y + rng.uniform(-j, j);
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double sq_step = scale * scale * rng.uniform(cfg.sq_step_range.lo, cfg.sq_step_range.hi);
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double radius = scale * rng.uniform(cfg.radius_range.lo, cfg.radius_range.hi);
      const double len = std::sqrt(sq_step);
      if (len >= radius) continue;
      chain.push_back({c, {c.x + len * std::cos(angle), c.y + len * std::sin(angle)}, radius});
      accepted = true;
      break;
    }
    if (!accepted)
      throw ConfigError("warp sampler: 100 consecutive draws violated |m - c| < r_max; "
                        "step and radius ranges are incompatible");
  }
  return chain;
}

}  // namespace contrawarp

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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "contrawarp/common.hpp"
#include "contrawarp/image.hpp"
#include "contrawarp/landmarks.hpp"
#include "contrawarp/rng.hpp"
#include "contrawarp/warp.hpp"

namespace contrawarp {

struct GlobalTransformConfig {
  double flip_prob = 0.5;
  double brightness_jitter = 0.2;  // max additive delta
  double contrast_jitter = 0.2;    // max |log| of the contrast factor
  Interval crop_scale_range{0.6, 1.0};  // area fraction
  double rotation_range = 10.0;         // degrees, symmetric
  bool enable_crop = true;
  // Landmark index that takes the place of index i after a horizontal flip.
  // Empty means no left/right swap.
  std::vector<int> flip_permutation;

  void validate() const {
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must be in [0,1]");
    if (!(brightness_jitter >= 0.0) || !(contrast_jitter >= 0.0) || !(rotation_range >= 0.0))
      throw ConfigError("jitter ranges must be non-negative");
    if (!(crop_scale_range.lo > 0.0 && crop_scale_range.hi <= 1.0 &&
          crop_scale_range.lo <= crop_scale_range.hi))
      throw ConfigError("crop_scale_range must lie in (0, 1]");
  }

  friend bool operator==(const GlobalTransformConfig&, const GlobalTransformConfig&) = default;
};

/// Exact horizontal mirror. Landmark i of the result is landmark perm[i] of the
/// input, mirrored.
inline void flip_horizontal(ImageBuffer& img, LandmarkSet& lms, const std::vector<int>& perm) {
  const int w = img.width();
  const int ch = img.channels();
  for (int y = 0; y < img.height(); ++y) {
    auto row = img.row(y);
    for (int x = 0; x < w / 2; ++x)
      for (int c = 0; c < ch; ++c) std::swap(row[x * ch + c], row[(w - 1 - x) * ch + c]);
  }
  for (auto& lm : lms.points) lm.pos.x = (w - 1) - lm.pos.x;
  if (!perm.empty()) {
    if (perm.size() != lms.size()) throw ConfigError("flip_permutation size != landmark count");
    LandmarkSet swapped = lms;
    for (std::size_t i = 0; i < perm.size(); ++i) swapped[i] = lms[static_cast<std::size_t>(perm[i])];
    lms = std::move(swapped);
  }
}

/// Rotation by `degrees` about the image centre, as a point map.
inline Point2 rotate_point(Point2 p, double degrees, int width, int height) {
  const double t = degrees * std::numbers::pi / 180.0;
  const Point2 c{(width - 1) / 2.0, (height - 1) / 2.0};
  const Point2 d = p - c;
  return {c.x + std::cos(t) * d.x - std::sin(t) * d.y, c.y + std::sin(t) * d.x + std::cos(t) * d.y};
}

inline void rotate_landmarks(LandmarkSet& lms, double degrees, int width, int height) {
  for (auto& lm : lms.points) lm.pos = rotate_point(lm.pos, degrees, width, height);
}

/// Square crop window in continuous edge coordinates (pixel i spans [i, i+1)).
struct CropWindow {
  double left = 0.0;
  double top = 0.0;
  double size_x = 0.0;
  double size_y = 0.0;
};

/// Rotation about the centre followed by a resized crop, in one bilinear
/// resampling pass. Landmarks go through the same forward map.
inline ImageBuffer rotate_and_crop(const ImageBuffer& img, LandmarkSet& lms, double degrees,
                                   const CropWindow& crop) {
  const int w = img.width(), h = img.height();
  ImageBuffer out(w, h, img.channels());
  std::vector<float> px(img.channels());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Point2 q{crop.left + (x + 0.5) * crop.size_x / w - 0.5,
                     crop.top + (y + 0.5) * crop.size_y / h - 0.5};
      bilinear_sample(img, rotate_point(q, -degrees, w, h), px);
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = px[c];
    }
  }
  for (auto& lm : lms.points) {
    const Point2 q = rotate_point(lm.pos, degrees, w, h);
    lm.pos = {(q.x + 0.5 - crop.left) * w / crop.size_x - 0.5,
              (q.y + 0.5 - crop.top) * h / crop.size_y - 0.5};
  }
  return out;
}

/// v <- clamp((v - 0.5) * exp(log_contrast) + 0.5 + brightness, 0, 1)
inline void photometric_jitter(ImageBuffer& img, double brightness, double log_contrast) {
  if (brightness == 0.0 && log_contrast == 0.0) return;
  const double gain = std::exp(log_contrast);
  for (float& v : img.data())
    v = static_cast<float>(std::clamp((v - 0.5) * gain + 0.5 + brightness, 0.0, 1.0));
}

struct TransformedView {
  ImageBuffer image;
  LandmarkSet landmarks;
};

/// Flip, small rotation, optional random resized crop, then brightness and
/// contrast jitter. Output size equals input size; landmarks leaving the frame
/// are flagged off-image.
inline TransformedView global_transform(const ImageBuffer& img, const LandmarkSet& lms, Rng& rng,
                                        const GlobalTransformConfig& cfg, bool allow_crop) {
  cfg.validate();
  TransformedView v{img, lms};
  const bool flip = rng.bernoulli(cfg.flip_prob);
  const double angle = rng.uniform(-cfg.rotation_range, cfg.rotation_range);
  const double brightness = rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter);
  const double log_contrast = rng.uniform(-cfg.contrast_jitter, cfg.contrast_jitter);

  const int w = img.width(), h = img.height();
  CropWindow crop{0.0, 0.0, static_cast<double>(w), static_cast<double>(h)};
  bool cropped = false;
  if (allow_crop && cfg.enable_crop) {
    const double area = rng.uniform(cfg.crop_scale_range.lo, cfg.crop_scale_range.hi);
    const double side = std::sqrt(area);
    crop.size_x = side * w;
    crop.size_y = side * h;
    crop.left = rng.uniform(0.0, w - crop.size_x);
    crop.top = rng.uniform(0.0, h - crop.size_y);
    cropped = area < 1.0;
  }

  if (flip) flip_horizontal(v.image, v.landmarks, cfg.flip_permutation);
  if (angle != 0.0 || cropped) v.image = rotate_and_crop(v.image, v.landmarks, angle, crop);
  photometric_jitter(v.image, brightness, log_contrast);
  v.landmarks.clip_to(w, h);
  return v;
}

/// Training sample: two global views of one face and a locally warped copy of
/// the first.
struct ViewTriple {
  ImageBuffer x1, x2, x3;
  LandmarkSet lms1, lms3;
  WarpChain chain;
};

inline ViewTriple make_view_triple(const ImageBuffer& img, const LandmarkSet& lms, Rng& rng,
                                   const GlobalTransformConfig& gcfg,
                                   const WarpSamplerConfig& wcfg, double change_epsilon = 0.5) {
  ViewTriple t;
  auto v1 = global_transform(img, lms, rng, gcfg, /*allow_crop=*/false);
  auto v2 = global_transform(img, lms, rng, gcfg, /*allow_crop=*/true);
  t.x1 = std::move(v1.image);
  t.lms1 = std::move(v1.landmarks);
  t.x2 = std::move(v2.image);
  t.chain = sample_warp_chain(rng, wcfg, std::min(t.x1.width(), t.x1.height()), &t.lms1);
  t.x3 = apply_warp_chain(t.x1, t.chain);
  t.lms3 = warp_landmarks(t.lms1, t.chain, change_epsilon);
  t.lms3.clip_to(t.x3.width(), t.x3.height());
  // Both views weight the landmarks the warp moved.
  for (std::size_t i = 0; i < t.lms1.size(); ++i) {
    t.lms1[i].changed = t.lms3[i].changed;
    t.lms1[i].weight = t.lms1[i].on_image ? t.lms3[i].changed ? kChangedWeight : kUnchangedWeight
                                          : 0.0;
  }
  return t;
}

}  // namespace contrawarp

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
#include <cstddef>
#include <span>
#include <vector>

#include "contrawarp/common.hpp"

namespace contrawarp {

/// Row-major float raster with interleaved channels, values in [0, 1].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, float fill = 0.0f)
      : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0) throw ConfigError("image dimensions must be positive");
    if (channels != 1 && channels != 3) throw ConfigError("image must have 1 or 3 channels");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  float& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  std::span<float> row(int y) {
    return std::span<float>(data_).subspan(static_cast<std::size_t>(y) * width_ * channels_,
                                           static_cast<std::size_t>(width_) * channels_);
  }
  std::span<const float> row(int y) const {
    return std::span<const float>(data_).subspan(static_cast<std::size_t>(y) * width_ * channels_,
                                                 static_cast<std::size_t>(width_) * channels_);
  }

  bool same_shape(const ImageBuffer& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Bilinear interpolation of channel `c` at `p`, clamped to the pixel-centre
/// rectangle [0, w-1] x [0, h-1].
inline double bilinear_sample(const ImageBuffer& img, Point2 p, int c) {
  const double x = std::clamp(p.x, 0.0, static_cast<double>(img.width() - 1));
  const double y = std::clamp(p.y, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
  const double bottom = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
  return (1.0 - fy) * top + fy * bottom;
}

/// All channels at once; `out` must hold img.channels() values.
inline void bilinear_sample(const ImageBuffer& img, Point2 p, std::span<float> out) {
  for (int c = 0; c < img.channels(); ++c) out[c] = static_cast<float>(bilinear_sample(img, p, c));
}

inline ImageBuffer to_grayscale(const ImageBuffer& img) {
  if (img.channels() == 1) return img;
  ImageBuffer out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.at(x, y) = static_cast<float>(0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
                                        0.114 * img.at(x, y, 2));
  return out;
}

/// Area-average resize of a grayscale view to side x side, returned as doubles.
/// Exact box filter when the source side is an integer multiple of `side`.
inline std::vector<double> resize_area_gray(const ImageBuffer& img, int side) {
  const ImageBuffer gray = to_grayscale(img);
  std::vector<double> out(static_cast<std::size_t>(side) * side, 0.0);
  const double sx = static_cast<double>(gray.width()) / side;
  const double sy = static_cast<double>(gray.height()) / side;
  for (int oy = 0; oy < side; ++oy) {
    const double y0 = oy * sy, y1 = (oy + 1) * sy;
    for (int ox = 0; ox < side; ++ox) {
      const double x0 = ox * sx, x1 = (ox + 1) * sx;
      double acc = 0.0;
      for (int y = static_cast<int>(std::floor(y0)); y < static_cast<int>(std::ceil(y1)); ++y) {
        const double wy = std::min(y1, y + 1.0) - std::max(y0, static_cast<double>(y));
        if (wy <= 0.0) continue;
        for (int x = static_cast<int>(std::floor(x0)); x < static_cast<int>(std::ceil(x1)); ++x) {
          const double wx = std::min(x1, x + 1.0) - std::max(x0, static_cast<double>(x));
          if (wx <= 0.0) continue;
          acc += wx * wy * gray.at(x, y);
        }
      }
      out[static_cast<std::size_t>(oy) * side + ox] = acc / (sx * sy);
    }
  }
  return out;
}

}  // namespace contrawarp

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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "contrawarp/warp.hpp"
#include "test_support.hpp"

namespace contrawarp {
namespace {

using testing::max_abs_diff;
using testing::random_image;

const LocalWarp kExample{{100, 100}, {110, 100}, 50};

// Independent scalar evaluation of the pull map, written from the formula.
Point2 oracle_source(Point2 x, Point2 c, Point2 m, double r) {
  const double dx = x.x - c.x, dy = x.y - c.y;
  const double d2 = dx * dx + dy * dy;
  if (d2 >= r * r) return x;
  const double sx = m.x - c.x, sy = m.y - c.y;
  const double num = r * r - d2;
  const double f = num / (num + sx * sx + sy * sy);
  return {x.x - f * f * sx, x.y - f * f * sy};
}

double oracle_bilinear(const ImageBuffer& img, double x, double y, int c) {
  x = std::min(std::max(x, 0.0), img.width() - 1.0);
  y = std::min(std::max(y, 0.0), img.height() - 1.0);
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width() - 1), y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0, fy = y - y0;
  return (1 - fx) * (1 - fy) * img.at(x0, y0, c) + fx * (1 - fy) * img.at(x1, y0, c) +
         (1 - fx) * fy * img.at(x0, y1, c) + fx * fy * img.at(x1, y1, c);
}

LocalWarp random_warp(Rng& rng, int size) {
  WarpSamplerConfig cfg;
  cfg.repeat_n = 1;
  return sample_warp_chain(rng, cfg, size).front();
}

TEST(EvalInverseSource, BoundaryPointIsFixed) {
  const Point2 u = eval_inverse_source({150, 100}, kExample);
  EXPECT_EQ(u, (Point2{150, 100}));
}

TEST(EvalInverseSource, ZeroStepIsIdentity) {
  const LocalWarp w{{30, 40}, {30, 40}, 20};
  for (Point2 x : {Point2{30, 40}, Point2{35, 41}, Point2{0, 0}}) EXPECT_EQ(eval_inverse_source(x, w), x);
}

TEST(EvalInverseSource, CentreOfExampleWarp) {
  const Point2 u = eval_inverse_source({100, 100}, kExample);
  EXPECT_NEAR(u.x, 90.7544, 1e-4);
  EXPECT_DOUBLE_EQ(u.y, 100.0);
  const double f = 2500.0 / 2600.0;
  EXPECT_NEAR(u.x, 100.0 - f * f * 10.0, 1e-12);
}

TEST(EvalInverseSource, MatchesScalarOracle) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const LocalWarp w = random_warp(rng, 224);
    const Point2 x{rng.uniform(0, 224), rng.uniform(0, 224)};
    const Point2 a = eval_inverse_source(x, w), b = oracle_source(x, w.center, w.target, w.radius);
    EXPECT_NEAR(a.x, b.x, 1e-12);
    EXPECT_NEAR(a.y, b.y, 1e-12);
  }
}

TEST(BilinearSample, PixelCentreReturnsPixel) {
  Rng rng(1);
  const ImageBuffer img = random_image(rng, 5, 4, 3);
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(bilinear_sample(img, {2, 3}, c), img.at(2, 3, c));
}

TEST(BilinearSample, MidpointOfTwoPixels) {
  ImageBuffer img(2, 1, 1);
  img.at(1, 0) = 1.0f;
  EXPECT_DOUBLE_EQ(bilinear_sample(img, {0.5, 0}, 0), 0.5);
}

TEST(BilinearSample, TwoByTwoClosedForm) {
  ImageBuffer img(2, 2, 1);
  img.at(0, 0) = 0.0f;
  img.at(1, 0) = 1.0f;
  img.at(0, 1) = 0.5f;
  img.at(1, 1) = 0.25f;
  // (1-fx)(1-fy)*0 + fx(1-fy)*1 + (1-fx)fy*0.5 + fx*fy*0.25 with fx=0.25, fy=0.75
  EXPECT_DOUBLE_EQ(bilinear_sample(img, {0.25, 0.75}, 0), 0.390625);
}

TEST(BilinearSample, ClampsToEdge) {
  Rng rng(2);
  const ImageBuffer img = random_image(rng, 4, 4);
  EXPECT_DOUBLE_EQ(bilinear_sample(img, {-3, -7}, 0), img.at(0, 0));
  EXPECT_DOUBLE_EQ(bilinear_sample(img, {10, 1}, 0), img.at(3, 1));
}

TEST(ApplyWarp, ZeroStepIsBitExactIdentity) {
  Rng rng(3);
  const ImageBuffer img = random_image(rng, 32, 32, 3);
  EXPECT_EQ(apply_warp(img, {{16, 16}, {16, 16}, 10}), img);
}

TEST(ApplyWarp, ConstantImageStaysConstant) {
  const ImageBuffer img(40, 40, 3, 0.37f);
  const ImageBuffer out = apply_warp(img, {{20, 20}, {24, 22}, 12});
  EXPECT_LE(max_abs_diff(out, img), 1e-6);
}

TEST(ApplyWarp, GradientImageMatchesPerPixelOracle) {
  ImageBuffer img(8, 8, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) img.at(x, y) = static_cast<float>((x + 2.0 * y) / 21.0);
  const LocalWarp w{{4, 4}, {5, 4}, 3};
  const ImageBuffer out = apply_warp(img, w);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const Point2 u = oracle_source({double(x), double(y)}, w.center, w.target, w.radius);
      EXPECT_NEAR(out.at(x, y), oracle_bilinear(img, u.x, u.y, 0), 1e-6) << x << "," << y;
    }
}

TEST(ApplyWarp, RandomWarpsMatchOracleAndKeepOutsidePixels) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const ImageBuffer img = random_image(rng, 64, 48, trial % 2 ? 3 : 1);
    const LocalWarp w = random_warp(rng, 64);
    const ImageBuffer out = apply_warp(img, w);
    ASSERT_TRUE(out.same_shape(img));
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        for (int c = 0; c < img.channels(); ++c) {
          const Point2 p{double(x), double(y)};
          if (distance(p, w.center) >= w.radius) {
            ASSERT_EQ(out.at(x, y, c), img.at(x, y, c));
          } else {
            const Point2 u = oracle_source(p, w.center, w.target, w.radius);
            ASSERT_NEAR(out.at(x, y, c), oracle_bilinear(img, u.x, u.y, c), 1e-6);
          }
        }
  }
}

TEST(ApplyWarp, PreservesValueRange) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    ImageBuffer img(48, 48, 1);
    const float lo = static_cast<float>(rng.uniform(0, 0.4)), hi = static_cast<float>(rng.uniform(0.6, 1));
    for (float& v : img.data()) v = static_cast<float>(rng.uniform(lo, hi));
    const ImageBuffer out = apply_warp(img, random_warp(rng, 48));
    const auto [mn, mx] = std::minmax_element(img.data().begin(), img.data().end());
    for (float v : out.data()) {
      EXPECT_GE(v, *mn);
      EXPECT_LE(v, *mx);
    }
  }
}

TEST(ApplyWarp, ParallelMatchesSerialBitExactly) {
  Rng rng(6);
  for (int threads : {1, 2, 3, 8}) {
    const ImageBuffer img = random_image(rng, 97, 61, 3);
    const LocalWarp w = random_warp(rng, 80);
    EXPECT_EQ(apply_warp_parallel(img, w, threads), apply_warp(img, w));
  }
}

TEST(ApplyWarpChain, EmptyChainIsIdentity) {
  Rng rng(7);
  const ImageBuffer img = random_image(rng, 20, 20);
  EXPECT_EQ(apply_warp_chain(img, {}), img);
}

TEST(ApplyWarpChain, SingletonEqualsApplyWarp) {
  Rng rng(8);
  const ImageBuffer img = random_image(rng, 64, 64);
  const LocalWarp w = random_warp(rng, 64);
  EXPECT_EQ(apply_warp_chain(img, {w}), apply_warp(img, w));
}

TEST(ApplyWarpChain, DisjointWarpsCommute) {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const ImageBuffer img = random_image(rng, 128, 64);
    const double r1 = rng.uniform(8, 20), r2 = rng.uniform(8, 20);
    const double a1 = rng.uniform(0, 2 * std::numbers::pi), a2 = rng.uniform(0, 2 * std::numbers::pi);
    const double s1 = rng.uniform(0.2, 0.8) * r1, s2 = rng.uniform(0.2, 0.8) * r2;
    const Point2 c1{rng.uniform(20, 40), rng.uniform(20, 44)};
    const Point2 c2{c1.x + r1 + r2 + 4 + rng.uniform(0, 30), rng.uniform(20, 44)};
    const LocalWarp w1{c1, c1 + Point2{std::cos(a1), std::sin(a1)} * s1, r1};
    const LocalWarp w2{c2, c2 + Point2{std::cos(a2), std::sin(a2)} * s2, r2};
    EXPECT_EQ(apply_warp_chain(img, {w1, w2}), apply_warp_chain(img, {w2, w1}));
  }
}

TEST(WarpInvariants, CentreDisplacementExceedsHalfRadius) {
  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    const LocalWarp w = random_warp(rng, 224);
    const Point2 dir = w.step() * (1.0 / w.step().norm());
    const double at_centre = warp_displacement(w.center, w).norm();
    const double at_half = warp_displacement(w.center + dir * (w.radius / 2), w).norm();
    EXPECT_GT(at_centre, at_half);
  }
}

TEST(WarpInvariants, DisplacementVanishesAtTheRim) {
  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    const LocalWarp w = random_warp(rng, 224);
    const double s2 = w.step().squared_norm(), r = w.radius;
    const double angle = rng.uniform(0, 2 * std::numbers::pi);
    const Point2 dir{std::cos(angle), std::sin(angle)};
    double prev = warp_displacement(w.center, w).norm();
    for (double k : {0.5, 0.9, 0.99, 0.999, 0.9999}) {
      const double d = k * r;
      const double got = warp_displacement(w.center + dir * d, w).norm();
      const double num = r * r - d * d;
      const double f = num / (num + s2);
      EXPECT_NEAR(got, f * f * std::sqrt(s2), 1e-9);
      EXPECT_LT(got, prev);
      prev = got;
    }
    // At 0.9999 r every draw from the default ranges is below 0.01 px.
    EXPECT_LT(prev, 0.01);
  }
}

TEST(ForwardMapPoint, ZeroStepAndBoundaryAreFixed) {
  const LocalWarp still{{10, 10}, {10, 10}, 5};
  EXPECT_EQ(forward_map_point({11, 12}, still), (Point2{11, 12}));
  EXPECT_EQ(forward_map_point({150, 100}, kExample), (Point2{150, 100}));
  EXPECT_EQ(forward_map_point({0, 0}, kExample), (Point2{0, 0}));
}

TEST(ForwardMapPoint, RoundTripOnRandomDiskPoints) {
  Rng rng(13);
  for (int i = 0; i < 1000; ++i) {
    const LocalWarp w = random_warp(rng, 224);
    const double rho = w.radius * std::sqrt(rng.uniform()), angle = rng.uniform(0, 2 * std::numbers::pi);
    const Point2 p = w.center + Point2{std::cos(angle), std::sin(angle)} * rho;
    const Point2 x = forward_map_point(p, w);
    EXPECT_LE(distance(eval_inverse_source(x, w), p), 2e-4) << w.describe();
  }
}

TEST(ForwardMapPoint, HandlesTheFoldBehindTheCentre) {
  // Large radius, small step: the fixed-point iteration cycles here.
  const LocalWarp w{{0, 0}, {10, 0}, 80};
  for (double x = -79.9; x < -20; x += 0.7) {
    const Point2 p{x, 0.3};
    const Point2 q = forward_map_point(p, w);
    EXPECT_LE(distance(eval_inverse_source(q, w), p), 2e-4) << x;
  }
}

TEST(WarpLandmarks, EmptyChainKeepsPointsAndLowWeight) {
  const auto lms = LandmarkSet::from_points({{1, 2}, {30, 40}});
  const auto out = warp_landmarks(lms, {});
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].pos, lms[i].pos);
    EXPECT_DOUBLE_EQ(out[i].weight, 0.1);
    EXPECT_FALSE(out[i].changed);
  }
}

TEST(WarpLandmarks, CentreLandmarkMovesAlongStep) {
  const auto out = warp_landmarks(LandmarkSet::from_points({{100, 100}}), {kExample});
  const double approx = std::pow(2500.0 / 2600.0, 2) * 10.0;
  EXPECT_NEAR(out[0].pos.x - 100.0, approx, 0.05);
  EXPECT_DOUBLE_EQ(out[0].pos.y, 100.0);
  EXPECT_NEAR(eval_inverse_source(out[0].pos, kExample).x, 100.0, 1e-4);
  EXPECT_DOUBLE_EQ(out[0].weight, 1.0);
  EXPECT_TRUE(out[0].changed);
}

TEST(WarpLandmarks, OutsidePointUnmoved) {
  const auto out = warp_landmarks(LandmarkSet::from_points({{10, 10}}), {kExample});
  EXPECT_EQ(out[0].pos, (Point2{10, 10}));
  EXPECT_DOUBLE_EQ(out[0].weight, 0.1);
}

TEST(WarpLandmarks, OffImagePointsKeepZeroWeight) {
  auto lms = LandmarkSet::from_points({{100, 100}, {-5, 3}});
  lms.clip_to(200, 200);
  const auto out = warp_landmarks(lms, {kExample});
  EXPECT_DOUBLE_EQ(out[1].weight, 0.0);
}

TEST(SampleWarpChain, ZeroRepeatIsEmpty) {
  Rng rng(14);
  WarpSamplerConfig cfg;
  cfg.repeat_n = 0;
  EXPECT_TRUE(sample_warp_chain(rng, cfg, 224).empty());
}

TEST(SampleWarpChain, DefaultRangesAtReferenceSize) {
  Rng rng(15);
  const WarpSamplerConfig cfg;
  for (int i = 0; i < 2000; ++i)
    for (const auto& w : sample_warp_chain(rng, cfg, 224)) {
      EXPECT_GE(w.center.x, 50);
      EXPECT_LE(w.center.x, 150);
      EXPECT_GE(w.center.y, 50);
      EXPECT_LE(w.center.y, 150);
      EXPECT_GE(w.step().norm(), 10.0 - 1e-9);
      EXPECT_LE(w.step().norm(), std::sqrt(200.0) + 1e-9);
      EXPECT_GE(w.radius, 50);
      EXPECT_LE(w.radius, 80);
      EXPECT_TRUE(w.valid());
    }
}

TEST(SampleWarpChain, RangesScaleWithImageSize) {
  Rng rng(16);
  const WarpSamplerConfig cfg;
  const double s = 64.0 / 224.0;
  for (int i = 0; i < 500; ++i)
    for (const auto& w : sample_warp_chain(rng, cfg, 64)) {
      EXPECT_GE(w.center.x, 50 * s - 1e-9);
      EXPECT_LE(w.center.x, 150 * s + 1e-9);
      EXPECT_GE(w.step().squared_norm(), 100 * s * s - 1e-9);
      EXPECT_LE(w.step().squared_norm(), 200 * s * s + 1e-9);
      EXPECT_GE(w.radius, 50 * s - 1e-9);
      EXPECT_LE(w.radius, 80 * s + 1e-9);
    }
}

TEST(SampleWarpChain, SquaredStepIsUniform) {
  Rng rng(17);
  WarpSamplerConfig cfg;
  cfg.repeat_n = 1;
  int low_half = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) low_half += sample_warp_chain(rng, cfg, 224)[0].step().squared_norm() < 150.0;
  EXPECT_NEAR(static_cast<double>(low_half) / n, 0.5, 0.02);
}

TEST(SampleWarpChain, DeterministicForSeed) {
  Rng a(18), b(18);
  const WarpSamplerConfig cfg;
  EXPECT_EQ(sample_warp_chain(a, cfg, 224), sample_warp_chain(b, cfg, 224));
}

TEST(SampleWarpChain, LandmarkPlacementStaysNearLandmarks) {
  Rng rng(19);
  WarpSamplerConfig cfg;
  cfg.placement_mode = PlacementMode::kLandmarkBased;
  auto lms = LandmarkSet::from_points({{20, 30}, {40, 35}, {-10, 5}});
  lms.clip_to(64, 64);
  const double j = cfg.landmark_jitter * 64 / 224.0;
  for (int i = 0; i < 500; ++i)
    for (const auto& w : sample_warp_chain(rng, cfg, 64, &lms)) {
      bool near = false;
      for (int k = 0; k < 2; ++k)
        near |= std::abs(w.center.x - lms[k].pos.x) <= j && std::abs(w.center.y - lms[k].pos.y) <= j;
      EXPECT_TRUE(near);
    }
}

TEST(SampleWarpChain, RejectsBadConfigurations) {
  Rng rng(20);
  WarpSamplerConfig cfg;
  cfg.placement_mode = PlacementMode::kLandmarkBased;
  EXPECT_THROW(sample_warp_chain(rng, cfg, 64), ConfigError);
  WarpSamplerConfig tiny;
  tiny.radius_range = {5, 6};  // every step is longer than every radius
  EXPECT_THROW(sample_warp_chain(rng, tiny, 224), ConfigError);
  WarpSamplerConfig empty;
  empty.radius_range = {80, 50};
  EXPECT_THROW(sample_warp_chain(rng, empty, 224), ConfigError);
}

}  // namespace
}  // namespace contrawarp

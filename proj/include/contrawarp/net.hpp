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

// Encoder / projector / predictor with a dense landmark-heatmap head, the
// contrastive and landmark losses, and their analytic gradients.
//
// Gradient convention: every projected feature z enters a similarity only as
// a constant target. Gradients reach the encoder through the predictor
// outputs p and through the landmark head.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "contrawarp/augment.hpp"
#include "contrawarp/common.hpp"
#include "contrawarp/image.hpp"
#include "contrawarp/landmarks.hpp"
#include "contrawarp/rng.hpp"
#include "contrawarp/tensor.hpp"

namespace contrawarp {

struct NetConfig {
  int input_side = 32;
  std::vector<int> encoder_dims{256, 128};
  std::vector<int> projector_dims{64, 64};
  std::vector<int> predictor_dims{16, 64};
  int heatmap_side = 16;
  int num_landmarks = 12;
  double heatmap_sigma = 1.5;
  // Subtract the training-set mean image from every input.
  bool center_inputs = true;

  int input_dim() const { return input_side * input_side; }
  int feature_dim() const { return encoder_dims.back(); }
  int embed_dim() const { return projector_dims.back(); }
  int heatmap_cells() const { return heatmap_side * heatmap_side; }

  void validate() const {
    if (input_side <= 0 || heatmap_side <= 0 || num_landmarks <= 0)
      throw ConfigError("net: sizes must be positive");
    if (encoder_dims.empty() || projector_dims.empty() || predictor_dims.empty())
      throw ConfigError("net: every block needs at least one layer");
    if (predictor_dims.back() != projector_dims.back())
      throw ConfigError("net: predictor output must match projector output");
    if (!(heatmap_sigma > 0.0)) throw ConfigError("net: heatmap_sigma must be positive");
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

struct NetParams {
  NetConfig config;
  Mlp encoder;
  Mlp projector;
  Mlp predictor;
  Mlp landmark_head;
  // Per-pixel input offset; not trained.
  std::vector<double> input_mean;

  /// Zero-valued parameters of the right shapes (also the gradient container).
  static NetParams zeros(const NetConfig& cfg) {
    cfg.validate();
    auto with = [](int first, const std::vector<int>& rest) {
      std::vector<int> d{first};
      d.insert(d.end(), rest.begin(), rest.end());
      return d;
    };
    NetParams p;
    p.config = cfg;
    p.encoder = Mlp(with(cfg.input_dim(), cfg.encoder_dims), /*relu_on_last=*/true);
    p.projector = Mlp(with(cfg.feature_dim(), cfg.projector_dims), false);
    p.predictor = Mlp(with(cfg.embed_dim(), cfg.predictor_dims), false);
    p.landmark_head = Mlp({cfg.feature_dim(), cfg.num_landmarks * cfg.heatmap_cells()}, false);
    p.input_mean.assign(static_cast<std::size_t>(cfg.input_dim()), 0.0);
    return p;
  }

  static NetParams create(const NetConfig& cfg, Rng& rng) {
    NetParams p = zeros(cfg);
    p.encoder.init(rng);
    p.projector.init(rng);
    p.predictor.init(rng);
    p.landmark_head.init(rng, 0.1);
    return p;
  }

  NetParams zeros_like() const { return zeros(config); }

  std::size_t parameter_count() const {
    return encoder.parameter_count() + projector.parameter_count() +
           predictor.parameter_count() + landmark_head.parameter_count();
  }

  template <typename F>
  void for_each_parameter(F&& f) {
    encoder.for_each_parameter(f);
    projector.for_each_parameter(f);
    predictor.for_each_parameter(f);
    landmark_head.for_each_parameter(f);
  }

  std::vector<Mlp*> blocks() { return {&encoder, &projector, &predictor, &landmark_head}; }
  std::vector<const Mlp*> blocks() const {
    return {&encoder, &projector, &predictor, &landmark_head};
  }

  friend bool operator==(const NetParams&, const NetParams&) = default;
};

using NetGrads = NetParams;

/// Network input: grayscale, area-resized to input_side^2, centred on 0.
inline void encode_input(const ImageBuffer& img, int side, std::span<double> out) {
  const auto v = resize_area_gray(img, side);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - 0.5;
}

inline Matrix encode_inputs(std::span<const ImageBuffer> imgs, int side) {
  Matrix x(static_cast<int>(imgs.size()), side * side);
  for (std::size_t b = 0; b < imgs.size(); ++b) encode_input(imgs[b], side, x.row(static_cast<int>(b)));
  return x;
}

/// Sets input_mean to the mean encoded image (or zero when centring is off).
inline void fit_input_mean(NetParams& net, std::span<const ImageBuffer> imgs) {
  auto& m = net.input_mean;
  m.assign(static_cast<std::size_t>(net.config.input_dim()), 0.0);
  if (!net.config.center_inputs || imgs.empty()) return;
  std::vector<double> row(m.size());
  for (const auto& img : imgs) {
    encode_input(img, net.config.input_side, row);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += row[i];
  }
  for (double& v : m) v /= static_cast<double>(imgs.size());
}

inline Matrix centered(const NetParams& net, Matrix x) {
  for (int r = 0; r < x.rows; ++r) {
    auto row = x.row(r);
    for (std::size_t i = 0; i < row.size(); ++i) row[i] -= net.input_mean[i];
  }
  return x;
}

struct ViewForward {
  Matrix features;  // encoder output
  Matrix z;         // projector output
  Matrix p;         // predictor output
  Matrix heatmaps;  // B x (K * cells); empty when the head was skipped
  MlpCache enc, proj, pred, head;
};

inline ViewForward forward(const NetParams& net, const Matrix& x, bool with_head = true) {
  if (x.cols != net.config.input_dim())
    throw ConfigError("forward: input has " + std::to_string(x.cols) + " values, expected " +
                      std::to_string(net.config.input_dim()));
  ViewForward v;
  v.features = net.encoder.forward(centered(net, x), &v.enc);
  v.z = net.projector.forward(v.features, &v.proj);
  v.p = net.predictor.forward(v.z, &v.pred);
  if (with_head) v.heatmaps = net.landmark_head.forward(v.features, &v.head);
  return v;
}

inline ViewForward forward(const NetParams& net, const ImageBuffer& img, bool with_head = true) {
  return forward(net, encode_inputs(std::span(&img, 1), net.config.input_side), with_head);
}

/// Frozen-encoder features for a set of images, one row each.
inline Matrix extract_features(const NetParams& net, std::span<const ImageBuffer> imgs,
                               int chunk = 256) {
  Matrix out(static_cast<int>(imgs.size()), net.config.feature_dim());
  for (std::size_t s = 0; s < imgs.size(); s += chunk) {
    const auto part = imgs.subspan(s, std::min<std::size_t>(chunk, imgs.size() - s));
    const Matrix f = net.encoder.forward(centered(net, encode_inputs(part, net.config.input_side)));
    std::copy(f.data.begin(), f.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(s) * out.cols);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Similarities

inline constexpr double kNormGuard = 1e-12;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Cosine with the norm guard added to both norms.
inline double cosine(std::span<const double> p, std::span<const double> z) {
  return dot(p, z) / ((l2_norm(p) + kNormGuard) * (l2_norm(z) + kNormGuard));
}

/// d cosine(p, z) / d p with z held constant, scaled by `scale` and added to `grad`.
inline void add_cosine_grad(std::span<const double> p, std::span<const double> z, double scale,
                            std::span<double> grad) {
  const double pn = l2_norm(p);
  const double n = pn + kNormGuard;
  const double zn = l2_norm(z) + kNormGuard;
  const double pz = dot(p, z) / zn;
  const double radial = pn > 0.0 ? pz / (n * n * pn) : 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) grad[i] += scale * (z[i] / (zn * n) - radial * p[i]);
}

/// Symmetric similarity 0.5 * (cos(p_i, z_j) + cos(p_j, z_i)).
inline double sym_cosine_sim(std::span<const double> p_i, std::span<const double> z_j,
                             std::span<const double> p_j, std::span<const double> z_i) {
  return 0.5 * (cosine(p_i, z_j) + cosine(p_j, z_i));
}

inline double sym_cosine_sim(const ViewForward& a, const ViewForward& b, int row) {
  return sym_cosine_sim(a.p.row(row), b.z.row(row), b.p.row(row), a.z.row(row));
}

/// Batch mean of -sim(1, 2).
inline double loss_cont12(std::span<const double> sims) {
  if (sims.empty()) return 0.0;
  double s = 0.0;
  for (double v : sims) s -= v;
  return s / static_cast<double>(sims.size());
}

/// Batch mean of max(sim(1, 3), s_t), clamped per sample.
inline double loss_cont13(std::span<const double> sims, double s_t) {
  if (sims.empty()) return 0.0;
  double s = 0.0;
  for (double v : sims) s += std::max(v, s_t);
  return s / static_cast<double>(sims.size());
}

// ---------------------------------------------------------------------------
// Landmark heatmaps

struct HeatmapStack {
  int channels = 0;
  int height = 0;
  int width = 0;
  double sigma = 1.5;
  std::vector<double> values;  // channel-major, then row-major

  HeatmapStack() = default;
  HeatmapStack(int k, int h, int w, double s)
      : channels(k), height(h), width(w), sigma(s), values(static_cast<std::size_t>(k) * h * w) {}

  int cells() const { return height * width; }
  double& at(int k, int y, int x) {
    return values[(static_cast<std::size_t>(k) * height + y) * width + x];
  }
  double at(int k, int y, int x) const {
    return values[(static_cast<std::size_t>(k) * height + y) * width + x];
  }
  std::span<const double> channel(int k) const {
    return std::span<const double>(values).subspan(static_cast<std::size_t>(k) * cells(), cells());
  }
};

/// Landmark position in heatmap-cell coordinates.
inline Point2 to_heatmap_coords(Point2 p, int img_w, int img_h, int out_w, int out_h) {
  return {(p.x + 0.5) * out_w / img_w - 0.5, (p.y + 0.5) * out_h / img_h - 0.5};
}

/// Gaussian target per landmark, normalised so the peak cell is exactly 1.
/// Off-image landmarks get an all-zero channel.
inline HeatmapStack render_target_heatmaps(const LandmarkSet& lms, int img_w, int img_h,
                                           int out_h, int out_w, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("render_target_heatmaps: sigma must be positive");
  HeatmapStack hm(static_cast<int>(lms.size()), out_h, out_w, sigma);
  for (int k = 0; k < hm.channels; ++k) {
    const auto& lm = lms[static_cast<std::size_t>(k)];
    if (!lm.on_image) continue;
    const Point2 c = to_heatmap_coords(lm.pos, img_w, img_h, out_w, out_h);
    double d2_min = std::numeric_limits<double>::infinity();
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x)
        d2_min = std::min(d2_min, squared_distance({double(x), double(y)}, c));
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        const double d2 = squared_distance({double(x), double(y)}, c);
        hm.at(k, y, x) = std::exp(-(d2 - d2_min) / (2.0 * sigma * sigma));
      }
  }
  return hm;
}

/// (1/K) sum_k MSE(w_k * pred_k, w_k * target_k). With `linear_weights` the
/// weight multiplies each channel's MSE instead (w rather than w^2).
inline double weighted_landmark_mse(std::span<const double> pred, std::span<const double> target,
                                    std::span<const double> weights, int cells,
                                    bool linear_weights = false) {
  const auto k_count = weights.size();
  if (pred.size() != target.size() || pred.size() != k_count * static_cast<std::size_t>(cells))
    throw ConfigError("weighted_landmark_mse: shape mismatch");
  if (k_count == 0) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    double se = 0.0;
    for (int c = 0; c < cells; ++c) {
      const double r = pred[k * cells + c] - target[k * cells + c];
      se += r * r;
    }
    const double w = linear_weights ? weights[k] : weights[k] * weights[k];
    total += w * se / cells;
  }
  return total / static_cast<double>(k_count);
}

inline double weighted_landmark_mse(const HeatmapStack& pred, const HeatmapStack& target,
                                    std::span<const double> weights, bool linear_weights = false) {
  if (pred.channels != target.channels || pred.height != target.height ||
      pred.width != target.width || static_cast<int>(weights.size()) != pred.channels)
    throw ConfigError("weighted_landmark_mse: shape mismatch");
  return weighted_landmark_mse(pred.values, target.values, weights, pred.cells(), linear_weights);
}

// ---------------------------------------------------------------------------
// Joint loss

struct LossConfig {
  double s_t = 0.6;
  double lambda = 1.0;
  bool use_cont13 = true;
  bool linear_landmark_weights = false;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct LossReport {
  double l_cont12 = 0.0;
  double l_cont13 = 0.0;
  double l_landmark1 = 0.0;
  double l_landmark3 = 0.0;
  double total = 0.0;
  double sim12 = 0.0;
  double sim13 = 0.0;
};

inline LossReport joint_loss(double l_cont12, double l_cont13, double l_landmark1,
                             double l_landmark3, double lambda, double sim12 = 0.0,
                             double sim13 = 0.0) {
  LossReport r{l_cont12, l_cont13, l_landmark1, l_landmark3, 0.0, sim12, sim13};
  r.total = l_cont12 + l_cont13 + lambda * (l_landmark1 + l_landmark3);
  return r;
}

/// Network-ready tensors for a mini-batch of view triples.
struct TrainingBatch {
  Matrix x1, x2, x3;
  Matrix target1, target3;  // B x (K * cells)
  Matrix weight1, weight3;  // B x K

  int size() const { return x1.rows; }
};

inline TrainingBatch make_batch(std::span<const ViewTriple> triples, const NetConfig& cfg) {
  const int b = static_cast<int>(triples.size());
  const int k = cfg.num_landmarks;
  const int cells = cfg.heatmap_cells();
  TrainingBatch out{Matrix(b, cfg.input_dim()), Matrix(b, cfg.input_dim()),
                    Matrix(b, cfg.input_dim()), Matrix(b, k * cells), Matrix(b, k * cells),
                    Matrix(b, k), Matrix(b, k)};
  for (int i = 0; i < b; ++i) {
    const auto& t = triples[i];
    if (static_cast<int>(t.lms1.size()) != k || static_cast<int>(t.lms3.size()) != k)
      throw ConfigError("make_batch: landmark count does not match the network's K");
    encode_input(t.x1, cfg.input_side, out.x1.row(i));
    encode_input(t.x2, cfg.input_side, out.x2.row(i));
    encode_input(t.x3, cfg.input_side, out.x3.row(i));
    const auto h1 = render_target_heatmaps(t.lms1, t.x1.width(), t.x1.height(), cfg.heatmap_side,
                                           cfg.heatmap_side, cfg.heatmap_sigma);
    const auto h3 = render_target_heatmaps(t.lms3, t.x3.width(), t.x3.height(), cfg.heatmap_side,
                                           cfg.heatmap_side, cfg.heatmap_sigma);
    std::copy(h1.values.begin(), h1.values.end(), out.target1.row(i).begin());
    std::copy(h3.values.begin(), h3.values.end(), out.target3.row(i).begin());
    for (int j = 0; j < k; ++j) {
      out.weight1(i, j) = t.lms1[j].weight;
      out.weight3(i, j) = t.lms3[j].weight;
    }
  }
  return out;
}

/// Similarity targets. Normally the z of the same forward pass; a gradient
/// check pins them to make the stop-gradient objective an ordinary function.
struct FrozenTargets {
  Matrix z1, z2, z3;
};

struct StepResult {
  LossReport report;
  NetGrads grads;
  FrozenTargets targets;
  std::vector<double> sim13_per_sample;
  Matrix z1;
};

namespace detail {

inline double landmark_loss_and_grad(const Matrix& pred, const Matrix& target,
                                     const Matrix& weights, int cells, double scale,
                                     bool linear_weights, Matrix* dpred) {
  const int b_count = pred.rows;
  const int k_count = weights.cols;
  double total = 0.0;
  for (int b = 0; b < b_count; ++b) {
    total += weighted_landmark_mse(pred.row(b), target.row(b), weights.row(b), cells, linear_weights);
    if (!dpred) continue;
    for (int k = 0; k < k_count; ++k) {
      const double w = linear_weights ? weights(b, k) : weights(b, k) * weights(b, k);
      const double g = scale * w * 2.0 / (static_cast<double>(cells) * k_count * b_count);
      for (int c = 0; c < cells; ++c) {
        const int idx = k * cells + c;
        (*dpred)(b, idx) = g * (pred(b, idx) - target(b, idx));
      }
    }
  }
  return total / b_count;
}

}  // namespace detail

/// Joint loss over a batch and, when `compute_grads`, its gradient with respect
/// to every parameter under the stop-gradient convention. Samples whose
/// sim(1, 3) does not exceed s_t contribute nothing to the gradient.
inline StepResult loss_and_gradients(const NetParams& net, const TrainingBatch& batch,
                                     const LossConfig& cfg, const FrozenTargets* frozen = nullptr,
                                     bool compute_grads = true) {
  const int bsz = batch.size();
  if (bsz <= 0) throw ConfigError("loss_and_gradients: empty batch");
  const auto v1 = forward(net, batch.x1, true);
  const auto v2 = forward(net, batch.x2, false);
  const auto v3 = forward(net, batch.x3, true);

  StepResult res;
  res.targets = frozen ? *frozen : FrozenTargets{v1.z, v2.z, v3.z};
  const auto& t = res.targets;
  res.z1 = v1.z;

  const int d = net.config.embed_dim();
  Matrix dp1(bsz, d), dp2(bsz, d), dp3(bsz, d);
  std::vector<double> sims12(bsz), sims13(bsz);
  const double half_b = 0.5 / bsz;
  for (int b = 0; b < bsz; ++b) {
    sims12[b] = sym_cosine_sim(v1.p.row(b), t.z2.row(b), v2.p.row(b), t.z1.row(b));
    sims13[b] = sym_cosine_sim(v1.p.row(b), t.z3.row(b), v3.p.row(b), t.z1.row(b));
    if (!compute_grads) continue;
    add_cosine_grad(v1.p.row(b), t.z2.row(b), -half_b, dp1.row(b));
    add_cosine_grad(v2.p.row(b), t.z1.row(b), -half_b, dp2.row(b));
    if (cfg.use_cont13 && sims13[b] > cfg.s_t) {
      add_cosine_grad(v1.p.row(b), t.z3.row(b), half_b, dp1.row(b));
      add_cosine_grad(v3.p.row(b), t.z1.row(b), half_b, dp3.row(b));
    }
  }

  const int cells = net.config.heatmap_cells();
  const int hm_cols = net.config.num_landmarks * cells;
  Matrix dh1(bsz, hm_cols), dh3(bsz, hm_cols);
  const bool head_grads = compute_grads && cfg.lambda != 0.0;
  const double lm1 = detail::landmark_loss_and_grad(v1.heatmaps, batch.target1, batch.weight1,
                                                    cells, cfg.lambda, cfg.linear_landmark_weights,
                                                    head_grads ? &dh1 : nullptr);
  const double lm3 = detail::landmark_loss_and_grad(v3.heatmaps, batch.target3, batch.weight3,
                                                    cells, cfg.lambda, cfg.linear_landmark_weights,
                                                    head_grads ? &dh3 : nullptr);

  double mean12 = 0.0, mean13 = 0.0;
  for (int b = 0; b < bsz; ++b) {
    mean12 += sims12[b];
    mean13 += sims13[b];
  }
  mean12 /= bsz;
  mean13 /= bsz;
  const double l13 = cfg.use_cont13 ? loss_cont13(sims13, cfg.s_t) : 0.0;
  res.report = joint_loss(loss_cont12(sims12), l13, lm1, lm3, cfg.lambda, mean12, mean13);
  res.sim13_per_sample = std::move(sims13);
  if (!compute_grads) return res;

  res.grads = net.zeros_like();
  auto& g = res.grads;
  auto backprop_view = [&](const ViewForward& v, Matrix& dp, Matrix* dheat) {
    const Matrix dz = net.predictor.backward(v.pred, std::move(dp), g.predictor, true);
    Matrix dfeat = net.projector.backward(v.proj, dz, g.projector, true);
    if (dheat) {
      const Matrix dh = net.landmark_head.backward(v.head, std::move(*dheat), g.landmark_head, true);
      for (std::size_t i = 0; i < dfeat.data.size(); ++i) dfeat.data[i] += dh.data[i];
    }
    net.encoder.backward(v.enc, std::move(dfeat), g.encoder, false);
  };
  backprop_view(v1, dp1, head_grads ? &dh1 : nullptr);
  backprop_view(v2, dp2, nullptr);
  backprop_view(v3, dp3, head_grads ? &dh3 : nullptr);
  return res;
}

}  // namespace contrawarp

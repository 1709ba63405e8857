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

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "contrawarp/common.hpp"
#include "contrawarp/rng.hpp"

namespace contrawarp {

/// Dense row-major matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  std::span<double> row(int r) {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// y = x W + b, optionally followed by ReLU. W is stored [in][out].
struct DenseLayer {
  int in = 0;
  int out = 0;
  bool relu = false;
  std::vector<double> weight;
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(int in_dim, int out_dim, bool use_relu)
      : in(in_dim), out(out_dim), relu(use_relu),
        weight(static_cast<std::size_t>(in_dim) * out_dim, 0.0), bias(out_dim, 0.0) {}

  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Activations kept by Mlp::forward for the backward pass.
struct MlpCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
};

/// Stack of dense layers. A zero-initialised Mlp of the same shape doubles as
/// the gradient container.
class Mlp {
 public:
  Mlp() = default;

  /// dims = {in, h1, ..., out}; ReLU after every layer except possibly the last.
  Mlp(const std::vector<int>& dims, bool relu_on_last) {
    if (dims.size() < 2) throw ConfigError("Mlp needs at least an input and an output size");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      if (dims[i] <= 0 || dims[i + 1] <= 0) throw ConfigError("Mlp layer sizes must be positive");
      const bool last = i + 2 == dims.size();
      layers_.emplace_back(dims[i], dims[i + 1], !last || relu_on_last);
    }
  }

  int input_dim() const { return layers_.front().in; }
  int output_dim() const { return layers_.back().out; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// He-normal weights scaled by `gain`, zero biases.
  void init(Rng& rng, double gain = 1.0) {
    for (auto& l : layers_) {
      const double sd = gain * std::sqrt((l.relu ? 2.0 : 1.0) / l.in);
      for (double& w : l.weight) w = sd * rng.normal();
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  }

  Mlp zeros_like() const {
    Mlp z = *this;
    for (auto& l : z.layers_) {
      std::fill(l.weight.begin(), l.weight.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    return z;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.parameter_count();
    return n;
  }

  /// Visits every parameter scalar in a fixed order.
  template <typename F>
  void for_each_parameter(F&& f) {
    for (auto& l : layers_) {
      for (double& w : l.weight) f(w);
      for (double& b : l.bias) f(b);
    }
  }

  Matrix forward(const Matrix& x, MlpCache* cache = nullptr) const {
    if (x.cols != input_dim()) throw ConfigError("Mlp::forward: input width mismatch");
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    Matrix cur = x;
    for (const auto& l : layers_) {
      Matrix y(cur.rows, l.out);
      for (int b = 0; b < cur.rows; ++b) {
        double* yr = y.row(b).data();
        for (int o = 0; o < l.out; ++o) yr[o] = l.bias[o];
        const double* xr = cur.row(b).data();
        for (int i = 0; i < l.in; ++i) {
          const double xi = xr[i];
          if (xi == 0.0) continue;
          const double* wr = l.weight.data() + static_cast<std::size_t>(i) * l.out;
          for (int o = 0; o < l.out; ++o) yr[o] += xi * wr[o];
        }
      }
      if (cache) {
        cache->inputs.push_back(std::move(cur));
        cache->pre.push_back(y);
      }
      if (l.relu)
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
      cur = std::move(y);
    }
    return cur;
  }

  /// Accumulates parameter gradients into `grads` and returns dL/dx (empty
  /// when `want_input_grad` is false).
  Matrix backward(const MlpCache& cache, Matrix dout, Mlp& grads, bool want_input_grad) const {
    for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
      const auto& l = layers_[li];
      auto& g = grads.layers_[li];
      const Matrix& pre = cache.pre[li];
      const Matrix& in = cache.inputs[li];
      if (l.relu)
        for (std::size_t k = 0; k < dout.data.size(); ++k)
          if (pre.data[k] <= 0.0) dout.data[k] = 0.0;
      for (int b = 0; b < dout.rows; ++b) {
        const double* dr = dout.row(b).data();
        for (int o = 0; o < l.out; ++o) g.bias[o] += dr[o];
        const double* xr = in.row(b).data();
        for (int i = 0; i < l.in; ++i) {
          const double xi = xr[i];
          if (xi == 0.0) continue;
          double* gw = g.weight.data() + static_cast<std::size_t>(i) * l.out;
          for (int o = 0; o < l.out; ++o) gw[o] += xi * dr[o];
        }
      }
      if (li == 0 && !want_input_grad) return {};
      Matrix dx(dout.rows, l.in);
      for (int b = 0; b < dout.rows; ++b) {
        const double* dr = dout.row(b).data();
        double* dxr = dx.row(b).data();
        for (int i = 0; i < l.in; ++i) {
          const double* wr = l.weight.data() + static_cast<std::size_t>(i) * l.out;
          double acc = 0.0;
          for (int o = 0; o < l.out; ++o) acc += dr[o] * wr[o];
          dxr[i] = acc;
        }
      }
      dout = std::move(dx);
    }
    return dout;
  }

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

}  // namespace contrawarp

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

// Frozen-feature evaluation: k-NN under cosine distance, a linear probe, and
// triplet retrieval accuracy.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "contrawarp/common.hpp"
#include "contrawarp/pnm.hpp"
#include "contrawarp/rng.hpp"
#include "contrawarp/tensor.hpp"

namespace contrawarp {

struct FeatureRow {
  std::string id;
  std::optional<int> label;
  std::vector<double> values;

  friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

struct FeatureTable {
  int dim = 0;
  std::vector<FeatureRow> rows;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }

  void add(std::string id, std::optional<int> label, std::vector<double> values) {
    if (rows.empty() && dim == 0) dim = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != dim)
      throw ConfigError("feature table: row '" + id + "' has dimension " +
                        std::to_string(values.size()) + ", table has " + std::to_string(dim));
    rows.push_back({std::move(id), label, std::move(values)});
  }

  /// Consistent dimension, finite values.
  void validate() const {
    for (const auto& r : rows) {
      if (static_cast<int>(r.values.size()) != dim)
        throw ConfigError("feature table: inconsistent dimension at row '" + r.id + "'");
      for (double v : r.values)
        if (!std::isfinite(v)) throw ConfigError("feature table: non-finite value in row '" + r.id + "'");
    }
  }

  void require_labels(const char* what) const {
    for (const auto& r : rows)
      if (!r.label || *r.label < 0)
        throw ConfigError(std::string(what) + ": row '" + r.id + "' has no label");
  }

  friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
};

inline FeatureTable make_feature_table(const Matrix& features, const std::vector<std::string>& ids,
                                       const std::vector<std::optional<int>>& labels) {
  FeatureTable t;
  t.dim = features.cols;
  for (int i = 0; i < features.rows; ++i) {
    const auto r = features.row(i);
    t.rows.push_back({ids.at(i), labels.at(i), std::vector<double>(r.begin(), r.end())});
  }
  return t;
}

// ---------------------------------------------------------------------------
// File format: header "id,label,dim=<d>", then "id,label,v0,...,v{d-1}".
// An absent label is an empty field.

inline std::string encode_feature_table(const FeatureTable& t) {
  std::string out = "id,label,dim=" + std::to_string(t.dim) + "\n";
  char buf[40];
  for (const auto& r : t.rows) {
    out += r.id;
    out += ',';
    if (r.label) out += std::to_string(*r.label);
    for (double v : r.values) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    f(line, pos);
    pos = end + 1;
  }
}

template <typename T>
T parse_number(std::string_view s, std::size_t offset, const char* what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError(std::string("expected ") + what + ", got '" + std::string(s) + "'", offset);
  return v;
}

}  // namespace detail

inline FeatureTable decode_feature_table(std::string_view text) {
  FeatureTable t;
  bool header = true;
  detail::for_each_line(text, [&](std::string_view line, std::size_t offset) {
    if (line.empty()) return;
    const auto f = detail::split_csv(line);
    if (header) {
      if (f.size() != 3 || f[0] != "id" || f[1] != "label" || f[2].substr(0, 4) != "dim=")
        throw ParseError("feature table: header must be 'id,label,dim=<d>'", offset);
      t.dim = detail::parse_number<int>(f[2].substr(4), offset, "dimension");
      header = false;
      return;
    }
    if (static_cast<int>(f.size()) != t.dim + 2)
      throw ParseError("feature table: expected " + std::to_string(t.dim + 2) + " fields", offset);
    FeatureRow row{std::string(f[0]), std::nullopt, {}};
    if (!f[1].empty()) row.label = detail::parse_number<int>(f[1], offset, "label");
    row.values.reserve(t.dim);
    for (int i = 0; i < t.dim; ++i)
      row.values.push_back(detail::parse_number<double>(f[i + 2], offset, "feature value"));
    t.rows.push_back(std::move(row));
  });
  if (header) throw ParseError("feature table: missing header", 0);
  return t;
}

inline FeatureTable read_feature_table(const std::filesystem::path& p) {
  try {
    return decode_feature_table(read_file(p));
  } catch (const ParseError& e) {
    throw ParseError(p.string() + ": " + e.message(), e.offset());
  }
}

inline void write_feature_table(const std::filesystem::path& p, const FeatureTable& t) {
  write_file(p, encode_feature_table(t));
}

// ---------------------------------------------------------------------------
// Distances

inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return 1.0 - ab / ((std::sqrt(aa) + 1e-12) * (std::sqrt(bb) + 1e-12));
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// k-NN

/// Majority vote among the k nearest training rows (cosine distance, ties in
/// distance resolved by row order). Vote ties go to the class with the smaller
/// summed distance, then the smaller class index.
inline int knn_predict(const FeatureTable& train, std::span<const double> query, int k) {
  std::vector<std::pair<double, std::size_t>> d(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) d[i] = {cosine_distance(query, train.rows[i].values), i};
  std::partial_sort(d.begin(), d.begin() + k, d.end());
  std::map<int, std::pair<int, double>> votes;  // class -> (count, summed distance)
  for (int j = 0; j < k; ++j) {
    auto& v = votes[*train.rows[d[j].second].label];
    v.first += 1;
    v.second += d[j].first;
  }
  int best = -1;
  std::pair<int, double> best_v{-1, 0.0};
  for (const auto& [cls, v] : votes) {
    if (v.first > best_v.first || (v.first == best_v.first && v.second < best_v.second)) {
      best = cls;
      best_v = v;
    }
  }
  return best;
}

/// Top-1 accuracy of k-NN classification of `test` against `train`.
inline double knn_eval(const FeatureTable& train, const FeatureTable& test, int k) {
  if (train.empty() || test.empty()) throw ConfigError("knn_eval: empty feature table");
  if (k < 1 || static_cast<std::size_t>(k) > train.size())
    throw ConfigError("knn_eval: k must be in [1, train size]");
  if (train.dim != test.dim) throw ConfigError("knn_eval: dimension mismatch");
  train.require_labels("knn_eval");
  test.require_labels("knn_eval");
  std::size_t correct = 0;
  for (const auto& row : test.rows)
    if (knn_predict(train, row.values, k) == *row.label) ++correct;
  return static_cast<double>(correct) / test.size();
}

// ---------------------------------------------------------------------------
// Linear probe

struct ProbeConfig {
  int iterations = 500;
  double lr = 0.1;
  std::uint64_t seed = 0;
  double init_scale = 0.01;
};

/// Single dense softmax layer over standardised features.
class LinearProbe {
 public:
  /// Mean softmax cross-entropy of (x W + b) against `labels`; gradients
  /// written to dW (dim x classes) and db.
  static double loss_and_grad(const Matrix& x, const std::vector<int>& labels, const Matrix& w,
                              const std::vector<double>& b, Matrix* dw, std::vector<double>* db) {
    const int n = x.rows, d = x.cols, c = w.cols;
    if (dw) *dw = Matrix(d, c);
    if (db) db->assign(c, 0.0);
    double loss = 0.0;
    std::vector<double> logits(c);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < c; ++j) logits[j] = b[j];
      for (int f = 0; f < d; ++f) {
        const double xv = x(i, f);
        for (int j = 0; j < c; ++j) logits[j] += xv * w(f, j);
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (int j = 0; j < c; ++j) z += std::exp(logits[j] - mx);
      loss += std::log(z) + mx - logits[labels[i]];
      if (!dw) continue;
      for (int j = 0; j < c; ++j) {
        const double g = (std::exp(logits[j] - mx) / z - (j == labels[i] ? 1.0 : 0.0)) / n;
        (*db)[j] += g;
        for (int f = 0; f < d; ++f) (*dw)(f, j) += x(i, f) * g;
      }
    }
    return loss / n;
  }

  void fit(const FeatureTable& train, const ProbeConfig& cfg) {
    if (train.empty()) throw ConfigError("linear_probe: empty training table");
    train.require_labels("linear_probe");
    const int d = train.dim;
    classes_ = 0;
    for (const auto& r : train.rows) classes_ = std::max(classes_, *r.label + 1);
    mean_.assign(d, 0.0);
    scale_.assign(d, 0.0);
    for (const auto& r : train.rows)
      for (int f = 0; f < d; ++f) mean_[f] += r.values[f];
    for (double& m : mean_) m /= train.size();
    for (const auto& r : train.rows)
      for (int f = 0; f < d; ++f) scale_[f] += (r.values[f] - mean_[f]) * (r.values[f] - mean_[f]);
    for (double& s : scale_) {
      s = std::sqrt(s / train.size());
      s = s > 1e-12 ? 1.0 / s : 1.0;
    }
    const Matrix x = standardize(train);
    std::vector<int> labels;
    for (const auto& r : train.rows) labels.push_back(*r.label);

    Rng rng(derive_seed(cfg.seed, 0x70726f6265ULL));
    w_ = Matrix(d, classes_);
    for (double& v : w_.data) v = cfg.init_scale * rng.normal();
    b_.assign(classes_, 0.0);
    Matrix dw;
    std::vector<double> db;
    for (int it = 0; it < cfg.iterations; ++it) {
      const double loss = loss_and_grad(x, labels, w_, b_, &dw, &db);
      if (!std::isfinite(loss))
        throw NumericError("linear_probe: loss became non-finite at iteration " + std::to_string(it));
      for (std::size_t i = 0; i < w_.data.size(); ++i) w_.data[i] -= cfg.lr * dw.data[i];
      for (int j = 0; j < classes_; ++j) b_[j] -= cfg.lr * db[j];
    }
  }

  /// Predicted class per row; labels of `table` are not read.
  std::vector<int> predict(const FeatureTable& table) const {
    const Matrix x = standardize(table);
    std::vector<int> out(table.size());
    for (int i = 0; i < x.rows; ++i) {
      int best = 0;
      double best_v = -INFINITY;
      for (int j = 0; j < classes_; ++j) {
        double v = b_[j];
        for (int f = 0; f < x.cols; ++f) v += x(i, f) * w_(f, j);
        if (v > best_v) {
          best_v = v;
          best = j;
        }
      }
      out[i] = best;
    }
    return out;
  }

  int classes() const { return classes_; }

 private:
  Matrix standardize(const FeatureTable& t) const {
    if (t.dim != static_cast<int>(mean_.size())) throw ConfigError("linear_probe: dimension mismatch");
    Matrix x(static_cast<int>(t.size()), t.dim);
    for (int i = 0; i < x.rows; ++i)
      for (int f = 0; f < t.dim; ++f) x(i, f) = (t.rows[i].values[f] - mean_[f]) * scale_[f];
    return x;
  }

  int classes_ = 0;
  std::vector<double> mean_, scale_;
  Matrix w_;
  std::vector<double> b_;
};

inline double accuracy(const std::vector<int>& predicted, const FeatureTable& truth) {
  truth.require_labels("accuracy");
  if (predicted.size() != truth.size()) throw ConfigError("accuracy: size mismatch");
  if (truth.empty()) throw ConfigError("accuracy: empty table");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) ok += predicted[i] == *truth.rows[i].label;
  return static_cast<double>(ok) / truth.size();
}

/// Trains on `train` only; test labels are read solely for scoring.
inline double linear_probe(const FeatureTable& train, const FeatureTable& test,
                           const ProbeConfig& cfg = {}) {
  LinearProbe probe;
  probe.fit(train, cfg);
  return accuracy(probe.predict(test), test);
}

// ---------------------------------------------------------------------------
// Triplets

/// (a, b) is the designated most-similar pair.
struct Triplet {
  std::string a, b, c;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

enum class DistanceMetric { kL2, kCosine };

inline std::string encode_triplets(const std::vector<Triplet>& ts) {
  std::string out;
  for (const auto& t : ts) out += t.a + "," + t.b + "," + t.c + "\n";
  return out;
}

inline std::vector<Triplet> decode_triplets(std::string_view text) {
  std::vector<Triplet> out;
  detail::for_each_line(text, [&](std::string_view line, std::size_t offset) {
    if (line.empty()) return;
    const auto f = detail::split_csv(line);
    if (f.size() != 3) throw ParseError("triplet file: expected 'a,b,c'", offset);
    out.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2])});
  });
  return out;
}

inline std::vector<Triplet> read_triplets(const std::filesystem::path& p) {
  try {
    return decode_triplets(read_file(p));
  } catch (const ParseError& e) {
    throw ParseError(p.string() + ": " + e.message(), e.offset());
  }
}

/// Fraction of triplets with d(a,b) < d(a,c) and d(a,b) < d(b,c). Ties count
/// as incorrect.
inline double triplet_accuracy(const FeatureTable& features, const std::vector<Triplet>& triplets,
                               DistanceMetric metric) {
  if (triplets.empty()) throw ConfigError("triplet_accuracy: no triplets");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < features.size(); ++i) index.emplace(features.rows[i].id, i);
  auto lookup = [&](const std::string& id) -> const std::vector<double>& {
    const auto it = index.find(id);
    if (it == index.end()) throw ConfigError("triplet_accuracy: unknown id '" + id + "'");
    return features.rows[it->second].values;
  };
  auto dist = [&](const std::vector<double>& x, const std::vector<double>& y) {
    return metric == DistanceMetric::kL2 ? l2_distance(x, y) : cosine_distance(x, y);
  };
  std::size_t correct = 0;
  for (const auto& t : triplets) {
    const auto& a = lookup(t.a);
    const auto& b = lookup(t.b);
    const auto& c = lookup(t.c);
    const double ab = dist(a, b);
    if (ab < dist(a, c) && ab < dist(b, c)) ++correct;
  }
  return static_cast<double>(correct) / triplets.size();
}

}  // namespace contrawarp

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

// Toy-face corpus: in-memory generation and the on-disk directory layout
//
//   images/NNNNN.pgm  landmarks/NNNNN.txt  labels.csv  params.csv
//   triplets.csv      manifest.json

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "contrawarp/common.hpp"
#include "contrawarp/eval.hpp"
#include "contrawarp/parallel.hpp"
#include "contrawarp/pnm.hpp"
#include "contrawarp/rng.hpp"
#include "contrawarp/toy_face.hpp"

namespace contrawarp {

struct FaceSample {
  std::string id;
  ImageBuffer image;
  LandmarkSet landmarks;
  int label = -1;
  ToyFaceParams params;
};

struct DatasetConfig {
  int n = 1000;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  int image_size = 64;
  int triplet_count = 2000;
  double noise_sd = 0.02;
  double max_offset = 1.5;

  void validate() const {
    if (n < 10) throw ConfigError("dataset: n must be >= 10");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw ConfigError("dataset: train_fraction must be in (0, 1)");
    if (image_size < 32) throw ConfigError("dataset: image_size must be >= 32");
    if (triplet_count < 0) throw ConfigError("dataset: triplet_count must be >= 0");
  }

  int train_count() const { return static_cast<int>(std::lround(n * train_fraction)); }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DatasetConfig, n, seed, train_fraction, image_size,
                                                triplet_count, noise_sd, max_offset)

inline std::string sample_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return buf;
}

/// Sample `index` of the corpus; depends only on (seed, index, config).
inline FaceSample generate_sample(const DatasetConfig& cfg, int index) {
  Rng rng(derive_seed(cfg.seed, 0x66616365ULL, static_cast<std::uint64_t>(index)));
  const auto params = ToyFaceParams::sample(rng, cfg.max_offset);
  ToyFaceRenderConfig rcfg;
  rcfg.noise_sd = cfg.noise_sd;
  auto face = gen_toy_face(params, cfg.image_size, rng, rcfg);
  return {sample_id(index), std::move(face.image), std::move(face.landmarks),
          static_cast<int>(face.label), params};
}

inline std::vector<FaceSample> generate_samples(const DatasetConfig& cfg, int threads = 1) {
  cfg.validate();
  std::vector<FaceSample> out(cfg.n);
  parallel_for(cfg.n, threads, [&](int i) { out[i] = generate_sample(cfg, i); });
  return out;
}

/// Random triplets from `pool`, ordered so (a, b) is the pair closest in mouth
/// curvature. Draws without a strict minimum are discarded.
inline std::vector<Triplet> make_triplets(const std::vector<FaceSample>& pool, int count,
                                          std::uint64_t seed) {
  std::vector<Triplet> out;
  if (pool.size() < 3 || count <= 0) return out;
  Rng rng(derive_seed(seed, 0x747269ULL));
  while (static_cast<int>(out.size()) < count) {
    const auto i = rng.uniform_index(pool.size());
    const auto j = rng.uniform_index(pool.size());
    const auto k = rng.uniform_index(pool.size());
    if (i == j || j == k || i == k) continue;
    const FaceSample* s[3] = {&pool[i], &pool[j], &pool[k]};
    auto dc = [&](int x, int y) {
      return std::abs(s[x]->params.mouth_curvature - s[y]->params.mouth_curvature);
    };
    const double d01 = dc(0, 1), d02 = dc(0, 2), d12 = dc(1, 2);
    if (d01 < d02 && d01 < d12)
      out.push_back({s[0]->id, s[1]->id, s[2]->id});
    else if (d02 < d01 && d02 < d12)
      out.push_back({s[0]->id, s[2]->id, s[1]->id});
    else if (d12 < d01 && d12 < d02)
      out.push_back({s[1]->id, s[2]->id, s[0]->id});
  }
  return out;
}

struct Dataset {
  DatasetConfig config;
  std::vector<FaceSample> train;
  std::vector<FaceSample> test;
  std::vector<Triplet> triplets;  // over test ids
};

inline Dataset build_dataset(const DatasetConfig& cfg, int threads = 1) {
  auto all = generate_samples(cfg, threads);
  Dataset ds;
  ds.config = cfg;
  const int n_train = cfg.train_count();
  ds.train.assign(std::make_move_iterator(all.begin()),
                  std::make_move_iterator(all.begin() + n_train));
  ds.test.assign(std::make_move_iterator(all.begin() + n_train), std::make_move_iterator(all.end()));
  ds.triplets = make_triplets(ds.test, cfg.triplet_count, cfg.seed);
  return ds;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  fs::create_directories(dir / "landmarks", ec);
  if (ec) throw IoError("cannot create " + (dir / "landmarks").string() + ": " + ec.message());

  std::string labels = "id,label\n";
  std::string params =
      "id,mouth_curvature,brow_angle,eye_openness,offset_x,offset_y,identity_shade\n";
  char buf[256];
  nlohmann::json train_ids = nlohmann::json::array(), test_ids = nlohmann::json::array();
  for (const auto* split : {&ds.train, &ds.test}) {
    for (const auto& s : *split) {
      write_image(dir / "images" / (s.id + ".pgm"), s.image);
      write_landmarks(dir / "landmarks" / (s.id + ".txt"), s.landmarks);
      labels += s.id + "," + std::to_string(s.label) + "\n";
      std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.id.c_str(),
                    s.params.mouth_curvature, s.params.brow_angle, s.params.eye_openness,
                    s.params.head_offset.x, s.params.head_offset.y, s.params.identity_shade);
      params += buf;
      (split == &ds.train ? train_ids : test_ids).push_back(s.id);
    }
  }
  write_file(dir / "labels.csv", labels);
  write_file(dir / "params.csv", params);
  write_file(dir / "triplets.csv", encode_triplets(ds.triplets));

  nlohmann::json manifest;
  manifest["seed"] = ds.config.seed;
  manifest["config"] = ds.config;
  manifest["classes"] = {"negative", "neutral", "positive"};
  manifest["counts"] = {{"total", ds.train.size() + ds.test.size()},
                        {"train", ds.train.size()},
                        {"test", ds.test.size()},
                        {"triplets", ds.triplets.size()}};
  manifest["train"] = train_ids;
  manifest["test"] = test_ids;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

/// Generates and writes the corpus; returns it as well.
inline Dataset gen_dataset(const DatasetConfig& cfg, const std::filesystem::path& dir,
                           int threads = 1) {
  auto ds = build_dataset(cfg, threads);
  write_dataset(ds, dir);
  return ds;
}

/// Reads a directory written by write_dataset. Generator parameters are not
/// reloaded; `params` of the samples stays default.
inline Dataset load_dataset(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what(), e.byte);
  }
  Dataset ds;
  ds.config = manifest.at("config").get<DatasetConfig>();

  std::unordered_map<std::string, int> labels;
  bool header = true;
  const std::string label_text = read_file(dir / "labels.csv");
  detail::for_each_line(label_text, [&](std::string_view line, std::size_t offset) {
    if (line.empty()) return;
    if (header) {
      header = false;
      return;
    }
    const auto f = detail::split_csv(line);
    if (f.size() != 2) throw ParseError((dir / "labels.csv").string() + ": expected 'id,label'", offset);
    labels[std::string(f[0])] = detail::parse_number<int>(f[1], offset, "label");
  });

  auto load = [&](const nlohmann::json& ids, std::vector<FaceSample>& out) {
    for (const auto& j : ids) {
      FaceSample s;
      s.id = j.get<std::string>();
      s.image = read_image(dir / "images" / (s.id + ".pgm"));
      s.landmarks = read_landmarks(dir / "landmarks" / (s.id + ".txt"));
      s.landmarks.clip_to(s.image.width(), s.image.height());
      const auto it = labels.find(s.id);
      s.label = it == labels.end() ? -1 : it->second;
      out.push_back(std::move(s));
    }
  };
  load(manifest.at("train"), ds.train);
  load(manifest.at("test"), ds.test);
  if (std::filesystem::exists(dir / "triplets.csv")) ds.triplets = read_triplets(dir / "triplets.csv");
  return ds;
}

}  // namespace contrawarp

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

// SGD pretraining over view triples, checkpoint container and metrics log.
//
// Random streams, all derived from TrainConfig::seed:
//   init    -> parameter initialisation
//   shuffle -> epoch orderings (its state is checkpointed)
//   augment -> one child stream per (epoch, sample index)
// so changing the batch size never perturbs augmentation draws.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "contrawarp/augment.hpp"
#include "contrawarp/config_json.hpp"
#include "contrawarp/dataset.hpp"
#include "contrawarp/net.hpp"
#include "contrawarp/parallel.hpp"
#include "contrawarp/pnm.hpp"
#include "contrawarp/rng.hpp"
#include "contrawarp/tensor.hpp"

namespace contrawarp {

struct TrainConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 64;
  int epochs = 1;
  double s_t = 0.6;
  double lambda = 1.0;
  bool use_cont13 = true;
  bool linear_landmark_weights = false;
  std::uint64_t seed = 0;
  double change_epsilon = 0.5;
  WarpSamplerConfig warp_cfg;
  GlobalTransformConfig global_cfg;
  NetConfig net;

  LossConfig loss() const { return {s_t, lambda, use_cont13, linear_landmark_weights}; }

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(s_t >= -1.0 && s_t <= 1.0)) throw ConfigError("train: s_t must lie in [-1, 1]");
    if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
    warp_cfg.validate();
    global_cfg.validate();
    net.validate();
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, lr, momentum, weight_decay,
                                                batch_size, epochs, s_t, lambda, use_cont13,
                                                linear_landmark_weights, seed, change_epsilon,
                                                warp_cfg, global_cfg, net)

/// Defaults for the toy corpus: 64 x 64 faces, 12 landmarks, landmark-based placement.
inline TrainConfig toy_train_config() {
  TrainConfig cfg;
  cfg.global_cfg.flip_permutation = toy_flip_permutation();
  cfg.warp_cfg.placement_mode = PlacementMode::kLandmarkBased;
  cfg.net.num_landmarks = kToyLandmarkCount;
  return cfg;
}

/// Mean over dimensions of the per-dimension standard deviation of the
/// L2-normalised rows. About 1/sqrt(d) when healthy, 0 when collapsed.
inline double collapse_metric(const Matrix& z) {
  if (z.rows < 2) throw ConfigError("collapse_metric: need at least two rows");
  Matrix n = z;
  for (int b = 0; b < n.rows; ++b) {
    auto r = n.row(b);
    const double norm = l2_norm(r) + kNormGuard;
    for (double& v : r) v /= norm;
  }
  double total = 0.0;
  for (int c = 0; c < n.cols; ++c) {
    double mean = 0.0;
    for (int b = 0; b < n.rows; ++b) mean += n(b, c);
    mean /= n.rows;
    double var = 0.0;
    for (int b = 0; b < n.rows; ++b) var += (n(b, c) - mean) * (n(b, c) - mean);
    total += std::sqrt(var / n.rows);
  }
  return total / n.cols;
}

struct StepLog {
  long step = 0;
  int epoch = 0;
  LossReport loss;
  double collapse = 0.0;
};

inline nlohmann::json to_json_value(const StepLog& s) {
  return {{"step", s.step},
          {"epoch", s.epoch},
          {"l_cont12", s.loss.l_cont12},
          {"l_cont13", s.loss.l_cont13},
          {"l_landmark1", s.loss.l_landmark1},
          {"l_landmark3", s.loss.l_landmark3},
          {"total", s.loss.total},
          {"sim12", s.loss.sim12},
          {"sim13", s.loss.sim13},
          {"collapse", s.collapse}};
}

inline StepLog step_log_from_json(const nlohmann::json& j) {
  StepLog s;
  s.step = j.at("step").get<long>();
  s.epoch = j.at("epoch").get<int>();
  s.loss = {j.at("l_cont12"), j.at("l_cont13"), j.at("l_landmark1"), j.at("l_landmark3"),
            j.at("total"),    j.at("sim12"),    j.at("sim13")};
  s.collapse = j.at("collapse").get<double>();
  return s;
}

struct Checkpoint {
  NetParams params;
  NetParams momentum;
  TrainConfig config;
  int epoch = 0;  // completed epochs
  std::string rng_state;
  std::vector<StepLog> history;  // last step of every completed epoch
};

// ---------------------------------------------------------------------------
// Binary container:
//   "CWCK" | u32 version | sections...
//   section = 4-byte tag | u64 payload length | payload
//   CONF: canonical JSON text of TrainConfig
//   PARM, MOMT: u32 count, then per tensor: u32 name length, name,
//               u32 rank, u64 dims[rank], f64 values (little-endian)
//   RNGS: shuffle-stream state bytes
//   META: JSON {"epoch", "history"}

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in, std::size_t base = 0) : in_(in), base_(base) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t offset() const { return base_ + pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw ParseError("checkpoint truncated", base_ + in_.size());
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
  std::size_t base_;
};

inline void each_tensor(NetParams& p,
                        const std::function<void(const std::string&, std::vector<std::uint64_t>,
                                                 std::vector<double>&)>& f) {
  const char* names[] = {"encoder", "projector", "predictor", "landmark_head"};
  auto blocks = p.blocks();
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    auto& layers = blocks[bi]->layers();
    for (std::size_t li = 0; li < layers.size(); ++li) {
      auto& l = layers[li];
      const std::string base = std::string(names[bi]) + "." + std::to_string(li);
      f(base + ".weight", {static_cast<std::uint64_t>(l.in), static_cast<std::uint64_t>(l.out)},
        l.weight);
      f(base + ".bias", {static_cast<std::uint64_t>(l.out)}, l.bias);
    }
  }
  f("input.mean", {static_cast<std::uint64_t>(p.input_mean.size())}, p.input_mean);
}

inline std::string encode_tensors(const NetParams& params) {
  ByteWriter w;
  NetParams p = params;
  std::uint32_t count = 0;
  each_tensor(p, [&](const std::string&, std::vector<std::uint64_t>, std::vector<double>&) { ++count; });
  w.u32(count);
  each_tensor(p, [&](const std::string& name, std::vector<std::uint64_t> dims, std::vector<double>& v) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) w.u64(d);
    for (double x : v) w.f64(x);
  });
  return w.take();
}

inline void decode_tensors(ByteReader& r, NetParams& p) {
  const std::uint32_t count = r.u32();
  std::uint32_t seen = 0;
  each_tensor(p, [&](const std::string& name, std::vector<std::uint64_t> dims, std::vector<double>& v) {
    if (seen++ >= count) throw ParseError("checkpoint: missing tensor " + name, r.offset());
    const auto name_len = r.u32();
    if (r.bytes(name_len) != name)
      throw ParseError("checkpoint: expected tensor " + name, r.offset());
    const auto rank = r.u32();
    if (rank != dims.size()) throw ParseError("checkpoint: rank mismatch for " + name, r.offset());
    for (auto d : dims)
      if (r.u64() != d) throw ParseError("checkpoint: shape mismatch for " + name, r.offset());
    for (double& x : v) x = r.f64();
  });
  if (seen != count) throw ParseError("checkpoint: unexpected extra tensors", r.offset());
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.bytes("CWCK");
  w.u32(kCheckpointVersion);
  auto section = [&](std::string_view tag, std::string_view payload) {
    w.bytes(tag);
    w.u64(payload.size());
    w.bytes(payload);
  };
  section("CONF", nlohmann::json(ck.config).dump());
  section("PARM", detail::encode_tensors(ck.params));
  section("MOMT", detail::encode_tensors(ck.momentum));
  section("RNGS", ck.rng_state);
  nlohmann::json meta{{"epoch", ck.epoch}, {"history", nlohmann::json::array()}};
  for (const auto& h : ck.history) meta["history"].push_back(to_json_value(h));
  section("META", meta.dump());
  return w.take();
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(4) != "CWCK") throw ParseError("not a checkpoint (bad magic)", 0);
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
  Checkpoint ck;
  bool have_conf = false, have_parm = false, have_momt = false;
  while (!r.done()) {
    const std::string tag(r.bytes(4));
    const auto len = r.u64();
    const std::size_t start = r.offset();
    const auto payload = r.bytes(len);
    detail::ByteReader sub(payload, start);
    if (tag == "CONF") {
      try {
        ck.config = nlohmann::json::parse(payload).get<TrainConfig>();
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint config: ") + e.what(), start);
      }
      ck.params = NetParams::zeros(ck.config.net);
      ck.momentum = ck.params;
      have_conf = true;
    } else if (tag == "PARM" || tag == "MOMT") {
      if (!have_conf) throw ParseError("checkpoint: tensors before config", start);
      detail::decode_tensors(sub, tag == "PARM" ? ck.params : ck.momentum);
      (tag == "PARM" ? have_parm : have_momt) = true;
    } else if (tag == "RNGS") {
      ck.rng_state = std::string(payload);
    } else if (tag == "META") {
      try {
        const auto meta = nlohmann::json::parse(payload);
        ck.epoch = meta.at("epoch").get<int>();
        for (const auto& h : meta.at("history")) ck.history.push_back(step_log_from_json(h));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint meta: ") + e.what(), start);
      }
    }
    // Unknown sections are skipped.
  }
  if (!have_conf || !have_parm) throw ParseError("checkpoint: missing config or parameters", bytes.size());
  if (!have_momt) ck.momentum = ck.params.zeros_like();
  return ck;
}

inline Checkpoint read_checkpoint(const std::filesystem::path& p) {
  try {
    return decode_checkpoint(read_file(p));
  } catch (const ParseError& e) {
    throw ParseError(p.string() + ": " + e.message(), e.offset());
  }
}

inline void write_checkpoint(const std::filesystem::path& p, const Checkpoint& ck) {
  write_file(p, encode_checkpoint(ck));
}

// ---------------------------------------------------------------------------
// Optimiser

/// SGD with momentum and decoupled-from-loss L2 decay:
///   g += wd * theta;  v = mu * v + g;  theta -= lr * v
inline void sgd_step(NetParams& params, NetParams& momentum, const NetGrads& grads,
                     const TrainConfig& cfg) {
  auto pb = params.blocks();
  auto mb = momentum.blocks();
  const auto gb = grads.blocks();
  auto update = [&](std::vector<double>& theta, std::vector<double>& v, const std::vector<double>& g) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = cfg.momentum * v[i] + (g[i] + cfg.weight_decay * theta[i]);
      theta[i] -= cfg.lr * v[i];
    }
  };
  for (std::size_t b = 0; b < pb.size(); ++b) {
    auto& pl = pb[b]->layers();
    auto& ml = mb[b]->layers();
    const auto& gl = gb[b]->layers();
    for (std::size_t l = 0; l < pl.size(); ++l) {
      update(pl[l].weight, ml[l].weight, gl[l].weight);
      update(pl[l].bias, ml[l].bias, gl[l].bias);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> steps;
};

struct PretrainOptions {
  std::filesystem::path out_dir;  // empty: nothing written
  const Checkpoint* resume = nullptr;
  int threads = 1;
  bool per_epoch_checkpoints = true;
  std::function<void(const StepLog&)> on_step;
};

inline std::string checkpoint_name(int epoch) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "checkpoint_epoch_%04d.cwck", epoch);
  return buf;
}

/// Epoch-0 state: seeded initialisation, input mean fitted on `data`, zero
/// momentum and a fresh shuffle stream.
inline Checkpoint init_checkpoint(std::span<const FaceSample> data, const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint ck;
  Rng init_rng(derive_seed(cfg.seed, 1));
  ck.params = NetParams::create(cfg.net, init_rng);
  std::vector<ImageBuffer> imgs;
  imgs.reserve(data.size());
  for (const auto& s : data) imgs.push_back(s.image);
  fit_input_mean(ck.params, imgs);
  ck.momentum = ck.params.zeros_like();
  ck.config = cfg;
  ck.epoch = 0;
  ck.rng_state = Rng(derive_seed(cfg.seed, 2)).serialize();
  return ck;
}

/// Runs `cfg.epochs` epochs (counting those already in `opts.resume`) of
/// shuffled mini-batches; the final partial batch of each epoch is dropped.
inline PretrainResult pretrain(std::span<const FaceSample> data, const TrainConfig& cfg,
                               const PretrainOptions& opts = {}) {
  cfg.validate();
  if (data.empty()) throw ConfigError("pretrain: empty dataset");
  if (static_cast<int>(data.size()) < cfg.batch_size)
    throw ConfigError("pretrain: dataset smaller than one batch");
  for (const auto& s : data)
    if (static_cast<int>(s.landmarks.size()) != cfg.net.num_landmarks)
      throw ConfigError("pretrain: sample " + s.id + " has " + std::to_string(s.landmarks.size()) +
                        " landmarks, network expects " + std::to_string(cfg.net.num_landmarks));

  PretrainResult result;
  Checkpoint& ck = result.checkpoint;
  if (opts.resume) {
    ck = *opts.resume;
    if (!(ck.params.config == cfg.net)) throw ConfigError("pretrain: resume checkpoint has a different network");
    ck.config = cfg;
  } else {
    ck = init_checkpoint(data, cfg);
  }
  Rng shuffle_rng;
  shuffle_rng.deserialize(ck.rng_state);

  std::ofstream metrics;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    write_file(opts.out_dir / "config.json", nlohmann::json(cfg).dump(2) + "\n");
    const auto path = opts.out_dir / "metrics.jsonl";
    metrics.open(path, opts.resume ? std::ios::app : std::ios::trunc);
    if (!metrics) throw IoError("cannot open " + path.string());
  }

  const int n = static_cast<int>(data.size());
  const int steps_per_epoch = n / cfg.batch_size;
  const LossConfig loss_cfg = cfg.loss();
  std::vector<int> order(n);
  std::vector<ViewTriple> triples(cfg.batch_size);

  for (int epoch = ck.epoch; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, 3, static_cast<std::uint64_t>(epoch));
    StepLog last;
    for (int s = 0; s < steps_per_epoch; ++s) {
      parallel_for(cfg.batch_size, opts.threads, [&](int i) {
        const int idx = order[s * cfg.batch_size + i];
        Rng rng(derive_seed(epoch_seed, static_cast<std::uint64_t>(idx)));
        triples[i] = make_view_triple(data[idx].image, data[idx].landmarks, rng, cfg.global_cfg,
                                      cfg.warp_cfg, cfg.change_epsilon);
      });
      const TrainingBatch batch = make_batch(triples, cfg.net);
      StepResult res = loss_and_gradients(ck.params, batch, loss_cfg);

      StepLog log{static_cast<long>(epoch) * steps_per_epoch + s, epoch, res.report,
                  collapse_metric(res.z1)};
      const std::pair<const char*, double> parts[] = {
          {"l_cont12", log.loss.l_cont12},       {"l_cont13", log.loss.l_cont13},
          {"l_landmark1", log.loss.l_landmark1}, {"l_landmark3", log.loss.l_landmark3},
          {"total", log.loss.total}};
      for (const auto& [name, v] : parts)
        if (!std::isfinite(v))
          throw NumericError("pretrain: non-finite " + std::string(name) + " at step " +
                             std::to_string(log.step) + " (epoch " + std::to_string(epoch) + ")");

      sgd_step(ck.params, ck.momentum, res.grads, cfg);
      if (metrics.is_open()) metrics << to_json_value(log).dump() << "\n";
      if (opts.on_step) opts.on_step(log);
      result.steps.push_back(log);
      last = log;
    }
    ck.epoch = epoch + 1;
    ck.rng_state = shuffle_rng.serialize();
    ck.history.push_back(last);
    if (!opts.out_dir.empty() && opts.per_epoch_checkpoints)
      write_checkpoint(opts.out_dir / checkpoint_name(ck.epoch), ck);
  }
  if (!opts.out_dir.empty()) {
    metrics.flush();
    write_checkpoint(opts.out_dir / "final.cwck", ck);
  }
  return result;
}

/// Encoder features of `samples` as a FeatureTable (ids and labels attached).
inline FeatureTable extract_feature_table(const NetParams& net, std::span<const FaceSample> samples) {
  std::vector<ImageBuffer> imgs;
  std::vector<std::string> ids;
  std::vector<std::optional<int>> labels;
  for (const auto& s : samples) {
    imgs.push_back(s.image);
    ids.push_back(s.id);
    labels.push_back(s.label >= 0 ? std::optional<int>(s.label) : std::nullopt);
  }
  return make_feature_table(extract_features(net, imgs), ids, labels);
}

}  // namespace contrawarp

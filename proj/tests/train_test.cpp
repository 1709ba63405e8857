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
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "contrawarp/train.hpp"

namespace contrawarp {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("contrawarp_train_test_" + name);
  fs::remove_all(dir);
  return dir;
}

const std::vector<FaceSample>& small_corpus() {
  static const std::vector<FaceSample> data = [] {
    DatasetConfig cfg;
    cfg.n = 48;
    cfg.seed = 3;
    return generate_samples(cfg);
  }();
  return data;
}

TrainConfig small_config() {
  TrainConfig cfg = toy_train_config();
  cfg.batch_size = 16;
  cfg.epochs = 2;
  cfg.seed = 9;
  return cfg;
}

TEST(CollapseMetric, Examples) {
  Matrix same(8, 4, 0.0);
  for (int r = 0; r < 8; ++r) {
    same(r, 0) = 1.0;
    same(r, 2) = -2.0;
  }
  EXPECT_NEAR(collapse_metric(same), 0.0, 1e-12);

  Matrix basis(4, 4, 0.0);
  for (int i = 0; i < 4; ++i) basis(i, i) = 3.0;
  // Each column holds one 1 among four rows: std = sqrt(3)/4.
  EXPECT_NEAR(collapse_metric(basis), std::sqrt(3.0) / 4.0, 1e-12);
  EXPECT_THROW(collapse_metric(Matrix(1, 4)), ConfigError);
}

TEST(CollapseMetric, IsotropicRowsScoreNearInverseSqrtDim) {
  Rng rng(1);
  Matrix z(4000, 64);
  for (double& v : z.data) v = rng.normal();
  EXPECT_NEAR(collapse_metric(z), 1.0 / 8.0, 0.005);
}

TEST(Sgd, MatchesUpdateRule) {
  NetConfig nc;
  nc.input_side = 2;
  nc.encoder_dims = {2};
  nc.projector_dims = {2};
  nc.predictor_dims = {2};
  nc.heatmap_side = 1;
  nc.num_landmarks = 1;
  Rng rng(2);
  NetParams p = NetParams::create(nc, rng);
  NetParams v = p.zeros_like();
  NetGrads g = p.zeros_like();
  g.for_each_parameter([&](double& x) { x = rng.normal(); });
  v.for_each_parameter([&](double& x) { x = rng.normal(); });
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.momentum = 0.9;
  cfg.weight_decay = 1e-4;
  NetParams p0 = p, v0 = v;
  sgd_step(p, v, g, cfg);
  std::vector<double> th0, vv0, gg, th1, vv1;
  p0.for_each_parameter([&](double& x) { th0.push_back(x); });
  v0.for_each_parameter([&](double& x) { vv0.push_back(x); });
  g.for_each_parameter([&](double& x) { gg.push_back(x); });
  p.for_each_parameter([&](double& x) { th1.push_back(x); });
  v.for_each_parameter([&](double& x) { vv1.push_back(x); });
  for (std::size_t i = 0; i < th0.size(); ++i) {
    const double want_v = 0.9 * vv0[i] + (gg[i] + 1e-4 * th0[i]);
    EXPECT_DOUBLE_EQ(vv1[i], want_v);
    EXPECT_DOUBLE_EQ(th1[i], th0[i] - 0.05 * want_v);
  }
  EXPECT_EQ(p.input_mean, p0.input_mean);
}

TEST(Checkpoint, RoundTripsExactly) {
  const auto ck = init_checkpoint(small_corpus(), small_config());
  const std::string bytes = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.momentum, ck.momentum);
  EXPECT_EQ(back.epoch, ck.epoch);
  EXPECT_EQ(back.rng_state, ck.rng_state);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  const std::string bytes = encode_checkpoint(init_checkpoint(small_corpus(), small_config()));
  std::string bad = bytes;
  bad[0] = 'X';
  try {
    decode_checkpoint(bad);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  for (std::size_t cut : {std::size_t{3}, std::size_t{6}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(decode_checkpoint(std::string_view(bytes).substr(0, cut)), ParseError) << cut;
}

TEST(Pretrain, ZeroLearningRateIsRejected) {
  TrainConfig cfg = small_config();
  cfg.lr = 0.0;
  EXPECT_THROW(pretrain(small_corpus(), cfg), ConfigError);
}

TEST(Sgd, ZeroLearningRateLeavesParametersUnchanged) {
  TrainConfig cfg = small_config();
  cfg.lr = 0.0;
  const auto data = small_corpus();
  Checkpoint ck = init_checkpoint(data, small_config());
  const NetParams before = ck.params;
  Rng rng(4);
  std::vector<ViewTriple> triples;
  for (int i = 0; i < 8; ++i)
    triples.push_back(make_view_triple(data[i].image, data[i].landmarks, rng, cfg.global_cfg, cfg.warp_cfg));
  const TrainingBatch batch = make_batch(triples, cfg.net);
  for (int step = 0; step < 5; ++step) {
    const auto res = loss_and_gradients(ck.params, batch, cfg.loss());
    sgd_step(ck.params, ck.momentum, res.grads, cfg);
  }
  EXPECT_EQ(ck.params, before);
}

TEST(Pretrain, DeterministicForSeed) {
  const auto a = pretrain(small_corpus(), small_config());
  const auto b = pretrain(small_corpus(), small_config());
  EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
  ASSERT_EQ(a.steps.size(), 2u * (48 / 16));
  for (std::size_t i = 0; i < a.steps.size(); ++i)
    EXPECT_EQ(a.steps[i].loss.total, b.steps[i].loss.total);
  TrainConfig other = small_config();
  other.seed = 10;
  EXPECT_NE(encode_checkpoint(pretrain(small_corpus(), other).checkpoint),
            encode_checkpoint(a.checkpoint));
}

TEST(Pretrain, ResumeMatchesUninterruptedRun) {
  TrainConfig cfg = small_config();
  cfg.epochs = 3;
  const auto full = pretrain(small_corpus(), cfg);
  TrainConfig first = cfg;
  first.epochs = 1;
  const auto part = pretrain(small_corpus(), first);
  const Checkpoint restored = decode_checkpoint(encode_checkpoint(part.checkpoint));
  PretrainOptions opts;
  opts.resume = &restored;
  const auto rest = pretrain(small_corpus(), cfg, opts);
  EXPECT_EQ(rest.checkpoint.params, full.checkpoint.params);
  EXPECT_EQ(rest.checkpoint.momentum, full.checkpoint.momentum);
  EXPECT_EQ(rest.checkpoint.epoch, 3);
  ASSERT_EQ(rest.checkpoint.history.size(), 3u);
}

TEST(Pretrain, ThreadCountDoesNotChangeResult) {
  PretrainOptions opts;
  opts.threads = 3;
  const auto a = pretrain(small_corpus(), small_config());
  const auto b = pretrain(small_corpus(), small_config(), opts);
  EXPECT_EQ(a.checkpoint.params, b.checkpoint.params);
}

TEST(Pretrain, WritesMetricsAndCheckpoints) {
  const auto dir = fresh_dir("outputs");
  PretrainOptions opts;
  opts.out_dir = dir;
  const auto r = pretrain(small_corpus(), small_config(), opts);
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  EXPECT_TRUE(fs::exists(dir / "final.cwck"));
  EXPECT_TRUE(fs::exists(dir / checkpoint_name(1)));
  EXPECT_TRUE(fs::exists(dir / checkpoint_name(2)));
  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const StepLog s = step_log_from_json(nlohmann::json::parse(line));
    ASSERT_LT(n, r.steps.size());
    EXPECT_EQ(s.step, r.steps[n].step);
    EXPECT_NEAR(s.loss.total, r.steps[n].loss.total, 1e-12 * (1 + std::abs(s.loss.total)));
    for (double v : {s.loss.l_cont12, s.loss.l_cont13, s.loss.l_landmark1, s.loss.l_landmark3, s.collapse})
      EXPECT_TRUE(std::isfinite(v));
    ++n;
  }
  EXPECT_EQ(n, r.steps.size());
  EXPECT_EQ(read_checkpoint(dir / "final.cwck").params, r.checkpoint.params);
  fs::remove_all(dir);
}

TEST(Pretrain, NonFiniteLossAborts) {
  TrainConfig cfg = small_config();
  cfg.lr = 1e200;
  try {
    pretrain(small_corpus(), cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("at step"), std::string::npos) << e.what();
  }
}

TEST(Pretrain, RejectsMismatchedLandmarkCount) {
  auto data = small_corpus();
  data[5].landmarks.points.pop_back();
  EXPECT_THROW(pretrain(data, small_config()), ConfigError);
}

TEST(Pretrain, TwoHundredDefaultStepsAlignPositiveViews) {
  DatasetConfig dcfg;
  dcfg.n = 1280;
  dcfg.seed = 3;
  const auto data = generate_samples(dcfg);
  TrainConfig cfg = toy_train_config();
  cfg.epochs = 10;  // 20 batches of 64 per epoch
  cfg.seed = 5;
  const auto r = pretrain(data, cfg);
  ASSERT_EQ(r.steps.size(), 200u);
  EXPECT_GT(r.steps.front().loss.l_cont12, -0.9);
  EXPECT_GE(r.steps.back().loss.sim12, 0.8);
  EXPECT_LT(r.steps.back().loss.l_cont12, r.steps.front().loss.l_cont12);
}

}  // namespace
}  // namespace contrawarp

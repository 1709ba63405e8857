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
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "contrawarp/contrawarp.hpp"
#include "test_support.hpp"

namespace contrawarp {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("contrawarp_cli_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI inside the test directory and returns its exit status.
  int run(const std::string& args) const {
    const std::string cmd = std::string("\"") + CW_CLI_PATH + "\" --workdir \"" + dir_.string() + "\" " +
                            args + " > \"" + (dir_ / "stdout.txt").string() + "\" 2> \"" +
                            (dir_ / "stderr.txt").string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  json report(const std::string& name) const { return json::parse(read_file(dir_ / name)); }

  void write_face(const std::string& stem, std::uint64_t seed) const {
    Rng rng(seed);
    const auto face = gen_toy_face(ToyFaceParams::sample(rng), 64, rng);
    write_image(dir_ / (stem + ".pgm"), face.image);
    write_landmarks(dir_ / (stem + ".txt"), face.landmarks);
  }

  fs::path dir_;
};

TEST_F(CliTest, WarpWithZeroRepeatCopiesTheImage) {
  write_face("face", 1);
  ASSERT_EQ(run("warp --in face.pgm --landmarks face.txt --repeat-n 0 --out w"), 0);
  EXPECT_EQ(read_file(dir_ / "w/x3.pgm"), read_file(dir_ / "face.pgm"));
  EXPECT_EQ(read_landmarks(dir_ / "w/landmarks.txt"), read_landmarks(dir_ / "face.txt"));
}

TEST_F(CliTest, WarpIsDeterministicAndRespectsScaledRanges) {
  write_face("face", 2);
  ASSERT_EQ(run("warp --in face.pgm --landmarks face.txt --seed 5 --out a"), 0);
  ASSERT_EQ(run("warp --in face.pgm --landmarks face.txt --seed 5 --out b"), 0);
  EXPECT_EQ(read_file(dir_ / "a/x3.pgm"), read_file(dir_ / "b/x3.pgm"));
  EXPECT_EQ(read_file(dir_ / "a/warp.json"), read_file(dir_ / "b/warp.json"));
  ASSERT_EQ(run("warp --in face.pgm --landmarks face.txt --seed 6 --out c"), 0);
  EXPECT_NE(read_file(dir_ / "a/x3.pgm"), read_file(dir_ / "c/x3.pgm"));

  const json side = json::parse(read_file(dir_ / "a/warp.json"));
  const auto& r = side["scaled_ranges"];
  ASSERT_EQ(side["chain"].size(), 2u);
  for (const auto& w : side["chain"]) {
    for (int k = 0; k < 2; ++k) {
      EXPECT_GE(w["center"][k].get<double>(), r["center"][0].get<double>() - 1e-9);
      EXPECT_LE(w["center"][k].get<double>(), r["center"][1].get<double>() + 1e-9);
    }
    EXPECT_GE(w["step_sq"].get<double>(), r["step_sq"][0].get<double>() - 1e-9);
    EXPECT_LE(w["step_sq"].get<double>(), r["step_sq"][1].get<double>() + 1e-9);
    EXPECT_GE(w["radius"].get<double>(), r["radius"][0].get<double>() - 1e-9);
    EXPECT_LE(w["radius"].get<double>(), r["radius"][1].get<double>() + 1e-9);
  }
}

TEST_F(CliTest, KnnOnSeparableFixtureIsPerfect) {
  FeatureTable train, test;
  Rng rng(3);
  for (int i = 0; i < 40; ++i) {
    const int c = i % 2;
    train.add("a" + std::to_string(i), c, {c ? 5.0 + rng.normal() * 0.1 : rng.normal() * 0.1, c ? 0.1 : 5.0});
    test.add("b" + std::to_string(i), c, {c ? 5.0 + rng.normal() * 0.1 : rng.normal() * 0.1, c ? 0.1 : 5.0});
  }
  write_feature_table(dir_ / "train.csv", train);
  write_feature_table(dir_ / "test.csv", test);
  ASSERT_EQ(run("eval-knn --train train.csv --test test.csv --k 10"), 0);
  const json r = report("eval_knn.json");
  EXPECT_EQ(r["command"], "eval-knn");
  EXPECT_DOUBLE_EQ(r["value"].get<double>(), 1.0);
  ASSERT_EQ(run("eval-linear --train train.csv --test test.csv"), 0);
  EXPECT_DOUBLE_EQ(report("eval_linear.json")["value"].get<double>(), 1.0);
}

TEST_F(CliTest, PipelineProducesChanceRetrievalForRandomInit) {
  ASSERT_EQ(run("gen-data --out data --n 300 --triplets 3000 --seed 4"), 0);
  EXPECT_EQ(report("data/report.json")["metrics"]["train"], 240);
  ASSERT_EQ(run("pretrain --data data --out init --init-only --seed 1"), 0);
  ASSERT_TRUE(fs::exists(dir_ / "init/init.cwck"));
  // Random features with no relation to curvature order.
  Checkpoint ck = read_checkpoint(dir_ / "init/init.cwck");
  Rng rng(11);
  for (auto& l : ck.params.encoder.layers()) {
    for (double& w : l.weight) w = rng.normal();
    for (double& b : l.bias) b = 1.0;
  }
  write_checkpoint(dir_ / "random.cwck", ck);
  ASSERT_EQ(run("eval-retrieval --checkpoint random.cwck --data data --metric l2"), 0);
  EXPECT_NEAR(report("eval_retrieval.json")["value"].get<double>(), 1.0 / 3.0, 0.05);

  ASSERT_EQ(run("extract-features --checkpoint random.cwck --data data --split test --out f.csv"), 0);
  EXPECT_EQ(read_feature_table(dir_ / "f.csv").size(), 60u);
}

TEST_F(CliTest, ExitCodesFollowErrorKinds) {
  EXPECT_EQ(run("no-such-command"), 1);
  EXPECT_EQ(run("warp --in missing.pgm --landmarks missing.txt --out w"), 2);
  write_file(dir_ / "bad.pgm", "P5\n4 4\n255\nabc");
  write_file(dir_ / "ok.txt", "0\n");
  EXPECT_EQ(run("warp --in bad.pgm --landmarks ok.txt --out w"), 3);
  EXPECT_NE(read_file(dir_ / "stderr.txt").find("truncated"), std::string::npos);
  write_file(dir_ / "cfg.json", R"({"brightness": 0.1})");
  EXPECT_EQ(run("gen-data --out d --dataset-config cfg.json"), 1);
  EXPECT_EQ(run("gen-data --out d --n 3"), 1);
}

TEST_F(CliTest, BenchReportsBitExactParallelMode) {
  ASSERT_EQ(run("bench --size 64 --iters 5 --parallel-threads 3"), 0);
  const json r = report("bench.json");
  EXPECT_EQ(r["details"]["bit_exact"], true);
  EXPECT_GT(r["metrics"]["single_mpix_per_s"].get<double>(), 0.0);
}

}  // namespace
}  // namespace contrawarp

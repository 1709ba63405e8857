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

// contrawarp: command-line front end for data generation, pretraining,
// evaluation, one-off warps and the warp benchmark.
//
// Exit codes: 0 ok, 1 usage/config, 2 IO, 3 parse, 4 numeric.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "contrawarp/contrawarp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace contrawarp;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitParse = 3;
constexpr int kExitNumeric = 4;

// CLI11 config formatter for JSON files. Nested objects address subcommands:
// {"threads": 2, "pretrain": {"epochs": 5}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string& name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto& r = opt->results();
        j[name] = r.size() == 1 ? json(r.front()) : json(r);
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      throw CLI::ConversionError("config file: " + std::string(e.what()));
    }
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  static void flatten(const json& j, std::vector<std::string> parents,
                      std::vector<CLI::ConfigItem>& out) {
    if (!j.is_object()) throw CLI::ConversionError("config file: top level must be an object");
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        flatten(value, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array())
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      out.push_back(std::move(item));
    }
  }
};

// ---------------------------------------------------------------------------
// Reports

struct Report {
  Report(std::string cmd, std::string name, double v, std::uint64_t s, json cfg)
      : command(std::move(cmd)), metric(std::move(name)), value(v), seed(s), config(std::move(cfg)) {}

  std::string command;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
  json config;
  std::vector<std::pair<std::string, double>> extra;  // printed after the headline
  json details = json::object();

  json to_json() const {
    json j;
    j["command"] = command;
    j["metric"] = metric;
    j["value"] = value;
    j["seed"] = seed;
    j["config"] = config;
    j["config_hash"] = config_hash(config);
    json m = json::object();
    m[metric] = value;
    for (const auto& [k, v] : extra) m[k] = v;
    j["metrics"] = m;
    if (!details.empty()) j["details"] = details;
    return j;
  }
};

void print_table(const Report& r) {
  std::size_t width = r.metric.size();
  for (const auto& [k, v] : r.extra) width = std::max(width, k.size());
  auto row = [&](const std::string& k, double v) {
    std::printf("  %-*s  %.6g\n", static_cast<int>(width), k.c_str(), v);
  };
  std::printf("%s (seed %llu, config %s)\n", r.command.c_str(),
              static_cast<unsigned long long>(r.seed), config_hash(r.config).c_str());
  row(r.metric, r.value);
  for (const auto& [k, v] : r.extra) row(k, v);
  std::fflush(stdout);
}

void emit(const Report& r, const fs::path& path) {
  std::cerr << "resolved config: " << r.config.dump() << "\n";
  print_table(r);
  if (!path.empty()) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file(path, r.to_json().dump(2) + "\n");
  }
}

// Loads a JSON file and merges it over `base`, rejecting unknown keys.
void merge_file(json& base, const std::string& file) {
  if (file.empty()) return;
  const std::string text = read_file(file);
  json patch;
  try {
    patch = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(file + ": " + e.what(), e.byte);
  }
  strict_merge_patch(base, patch);
}

// ---------------------------------------------------------------------------
// Feature sources shared by the eval subcommands: either CSV tables or a
// checkpoint plus a dataset directory.

struct FeatureSource {
  std::string train_csv, test_csv, checkpoint, data;

  void add_to(CLI::App* sub, bool need_train) {
    if (need_train) sub->add_option("--train", train_csv, "Train feature CSV");
    sub->add_option("--test", test_csv, "Test feature CSV");
    sub->add_option("--checkpoint", checkpoint, "Checkpoint to extract features with");
    sub->add_option("--data", data, "Dataset directory (with --checkpoint)");
  }

  bool from_checkpoint() const { return !checkpoint.empty(); }

  void check(bool need_train) const {
    if (from_checkpoint()) {
      if (data.empty()) throw ConfigError("--checkpoint needs --data");
      return;
    }
    if ((need_train && train_csv.empty()) || test_csv.empty())
      throw ConfigError(need_train ? "give --train and --test, or --checkpoint and --data"
                                   : "give --test, or --checkpoint and --data");
  }

  std::pair<FeatureTable, FeatureTable> load(bool need_train) const {
    check(need_train);
    if (from_checkpoint()) {
      const Checkpoint ck = read_checkpoint(checkpoint);
      const Dataset ds = load_dataset(data);
      return {need_train ? extract_feature_table(ck.params, ds.train) : FeatureTable{},
              extract_feature_table(ck.params, ds.test)};
    }
    return {need_train ? read_feature_table(train_csv) : FeatureTable{},
            read_feature_table(test_csv)};
  }

  json describe(bool need_train) const {
    if (from_checkpoint()) return {{"checkpoint", checkpoint}, {"data", data}};
    json j{{"test", test_csv}};
    if (need_train) j["train"] = train_csv;
    return j;
  }
};

std::uint64_t checkpoint_seed(const std::string& path) {
  return path.empty() ? 0 : read_checkpoint(path).config.seed;
}

// ---------------------------------------------------------------------------
// Benchmark

struct LatencyStats {
  double mean_ms = 0, p50_ms = 0, p95_ms = 0, mpix_per_s = 0;
};

LatencyStats summarize(std::vector<double> ms, int pixels) {
  LatencyStats s;
  std::sort(ms.begin(), ms.end());
  s.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  auto pct = [&](double q) {
    const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(ms.size()))) - 1;
    return ms[std::min(i, ms.size() - 1)];
  };
  s.p50_ms = pct(0.50);
  s.p95_ms = pct(0.95);
  s.mpix_per_s = s.mean_ms > 0 ? pixels / (s.mean_ms * 1e3) : 0.0;
  return s;
}

json to_json(const LatencyStats& s) {
  return {{"mean_ms", s.mean_ms}, {"p50_ms", s.p50_ms}, {"p95_ms", s.p95_ms},
          {"mpix_per_s", s.mpix_per_s}};
}

ImageBuffer bench_image(int size, int channels, std::uint64_t seed) {
  // Smooth gradients plus noise, so the sampler sees non-trivial content.
  Rng rng(seed);
  ImageBuffer img(size, size, channels);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(x, y, c) = static_cast<float>(
            0.5 + 0.3 * std::sin(0.05 * x + 0.7 * c) * std::cos(0.04 * y) + 0.1 * rng.uniform(-1.0, 1.0));
  return img;
}

template <typename F>
double time_ms(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contrawarp: local-warp contrastive pretraining on toy faces"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file; explicit flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);

  std::string workdir;
  int threads = default_thread_count();
  app.add_option("--workdir", workdir, "Resolve all relative paths against this directory")
      ->check(CLI::ExistingDirectory)
      ->trigger_on_parse()
      ->each([](const std::string& d) { fs::current_path(d); });
  app.add_option("--threads", threads, "Worker threads (capped by CW_THREADS)")
      ->check(CLI::PositiveNumber);

  // warp ----------------------------------------------------------------
  auto* warp = app.add_subcommand("warp", "Apply a random local warp chain to one image");
  std::string warp_in, warp_lms, warp_out, warp_mode = "random";
  std::uint64_t warp_seed = 0;
  WarpSamplerConfig warp_cfg;
  double warp_eps = 0.5;
  warp->add_option("--in", warp_in, "Input PGM/PPM")->required();
  warp->add_option("--landmarks", warp_lms, "Landmark file")->required();
  warp->add_option("--seed", warp_seed, "Sampler seed");
  warp->add_option("--mode", warp_mode, "Warp placement")
      ->check(CLI::IsMember({"random", "landmark"}));
  warp->add_option("--repeat-n", warp_cfg.repeat_n, "Warps per chain")->check(CLI::NonNegativeNumber);
  warp->add_option("--change-epsilon", warp_eps, "Displacement (px) that marks a landmark changed");
  warp->add_option("--out", warp_out, "Output directory")->required();

  // gen-data ------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "Generate the toy-face corpus");
  std::string gen_out, gen_cfg_file, gen_report;
  DatasetConfig dcfg;
  std::map<std::string, CLI::Option*> gen_opts;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--dataset-config", gen_cfg_file, "JSON dataset config (merged under flags)");
  gen_opts["n"] = gen->add_option("--n", dcfg.n, "Number of faces");
  gen_opts["seed"] = gen->add_option("--seed", dcfg.seed, "Generator seed");
  gen_opts["train_fraction"] = gen->add_option("--train-fraction", dcfg.train_fraction, "Train share");
  gen_opts["image_size"] = gen->add_option("--image-size", dcfg.image_size, "Image side in pixels");
  gen_opts["triplet_count"] = gen->add_option("--triplets", dcfg.triplet_count, "Retrieval triplets");
  gen_opts["noise_sd"] = gen->add_option("--noise-sd", dcfg.noise_sd, "Pixel noise");
  gen_opts["max_offset"] = gen->add_option("--max-offset", dcfg.max_offset, "Max head offset (px at 64)");
  gen->add_option("--report", gen_report, "Report path (default <out>/report.json)");

  // pretrain ------------------------------------------------------------
  auto* pre = app.add_subcommand("pretrain", "Pretrain the encoder on a generated corpus");
  std::string pre_data, pre_out, pre_cfg_file, pre_resume, pre_report;
  bool pre_init_only = false, pre_no_epoch_ck = false;
  TrainConfig tcfg = toy_train_config();
  std::map<std::string, CLI::Option*> pre_opts;
  pre->add_option("--data", pre_data, "Dataset directory")->required();
  pre->add_option("--out", pre_out, "Run directory")->required();
  pre->add_option("--train-config", pre_cfg_file, "JSON training config (merged under flags)");
  pre_opts["epochs"] = pre->add_option("--epochs", tcfg.epochs, "Total epochs");
  pre_opts["seed"] = pre->add_option("--seed", tcfg.seed, "Training seed");
  pre_opts["lr"] = pre->add_option("--lr", tcfg.lr, "SGD learning rate");
  pre_opts["batch_size"] = pre->add_option("--batch-size", tcfg.batch_size, "Mini-batch size");
  pre_opts["s_t"] = pre->add_option("--s-t", tcfg.s_t, "Target similarity clamp");
  pre_opts["lambda"] = pre->add_option("--lambda", tcfg.lambda, "Landmark loss weight");
  bool no_cont13 = false, linear_w = false;
  pre->add_flag("--no-cont13", no_cont13, "Disable the warped-negative term");
  pre->add_flag("--linear-landmark-weights", linear_w, "Weight residuals by w instead of w^2");
  pre->add_option("--resume", pre_resume, "Checkpoint to resume from");
  pre->add_flag("--init-only", pre_init_only, "Write the initial checkpoint and stop");
  pre->add_flag("--no-epoch-checkpoints", pre_no_epoch_ck, "Only write final.cwck");
  pre->add_option("--report", pre_report, "Report path (default <out>/report.json)");

  // extract-features ----------------------------------------------------
  auto* ext = app.add_subcommand("extract-features", "Write frozen encoder features as CSV");
  std::string ext_ck, ext_data, ext_split = "test", ext_out;
  ext->add_option("--checkpoint", ext_ck, "Checkpoint")->required();
  ext->add_option("--data", ext_data, "Dataset directory")->required();
  ext->add_option("--split", ext_split, "Which split")->check(CLI::IsMember({"train", "test"}));
  ext->add_option("--out", ext_out, "Output CSV")->required();

  // eval-knn / eval-linear / eval-retrieval -----------------------------
  auto* knn = app.add_subcommand("eval-knn", "k-NN accuracy under cosine distance");
  FeatureSource knn_src;
  int knn_k = 10;
  std::string knn_report;
  knn_src.add_to(knn, true);
  knn->add_option("--k", knn_k, "Neighbours")->check(CLI::PositiveNumber);
  knn->add_option("--report", knn_report, "Report path")->default_val("eval_knn.json");

  auto* lin = app.add_subcommand("eval-linear", "Linear probe accuracy");
  FeatureSource lin_src;
  ProbeConfig probe;
  std::string lin_report;
  lin_src.add_to(lin, true);
  lin->add_option("--iters", probe.iterations, "Gradient steps")->check(CLI::PositiveNumber);
  lin->add_option("--lr", probe.lr, "Step size");
  lin->add_option("--seed", probe.seed, "Probe init seed");
  lin->add_option("--report", lin_report, "Report path")->default_val("eval_linear.json");

  auto* ret = app.add_subcommand("eval-retrieval", "Triplet retrieval accuracy");
  FeatureSource ret_src;
  std::string ret_metric = "l2", ret_triplets, ret_report;
  ret_src.add_to(ret, false);
  ret->add_option("--triplets", ret_triplets, "Triplet CSV (default <data>/triplets.csv)");
  ret->add_option("--metric", ret_metric, "Distance")->check(CLI::IsMember({"l2", "cos"}));
  ret->add_option("--report", ret_report, "Report path")->default_val("eval_retrieval.json");

  // bench ---------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "Warp kernel latency, single-threaded vs parallel");
  int bench_size = 224, bench_chain = 2, bench_iters = 50, bench_channels = 3, bench_threads = 0;
  std::uint64_t bench_seed = 0;
  std::string bench_out;
  bench->add_option("--size", bench_size, "Image side")->check(CLI::PositiveNumber);
  bench->add_option("--chain", bench_chain, "Warps per chain")->check(CLI::NonNegativeNumber);
  bench->add_option("--iters", bench_iters, "Timed iterations")->check(CLI::PositiveNumber);
  bench->add_option("--channels", bench_channels, "1 or 3")->check(CLI::IsMember({1, 3}));
  bench->add_option("--parallel-threads", bench_threads, "Threads for the parallel mode (default --threads)");
  bench->add_option("--seed", bench_seed, "Chain and image seed");
  bench->add_option("--out", bench_out, "Report path")->default_val("bench.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*warp) {
      const ImageBuffer img = read_image(warp_in);
      LandmarkSet lms = read_landmarks(warp_lms);
      lms.clip_to(img.width(), img.height());
      warp_cfg.placement_mode = warp_mode == "landmark" ? PlacementMode::kLandmarkBased : PlacementMode::kRandom;
      Rng rng(warp_seed);
      const int side = std::min(img.width(), img.height());
      const WarpChain chain = sample_warp_chain(rng, warp_cfg, side, &lms);
      const ImageBuffer x3 = apply_warp_chain(img, chain);
      LandmarkSet moved = warp_landmarks(lms, chain, warp_eps);
      moved.clip_to(img.width(), img.height());

      fs::create_directories(warp_out);
      const fs::path image_path = fs::path(warp_out) / (img.channels() == 1 ? "x3.pgm" : "x3.ppm");
      write_image(image_path, x3);
      write_landmarks(fs::path(warp_out) / "landmarks.txt", moved);

      const double scale = side / warp_cfg.reference_size;
      json jc = json::array();
      for (const auto& w : chain)
        jc.push_back({{"center", {w.center.x, w.center.y}},
                      {"target", {w.target.x, w.target.y}},
                      {"radius", w.radius},
                      {"step_sq", squared_distance(w.center, w.target)}});
      json changed = json::array();
      for (std::size_t i = 0; i < moved.size(); ++i) changed.push_back(moved[i].changed);
      json config{{"in", warp_in}, {"landmarks", warp_lms}, {"mode", warp_mode},
                  {"sampler", warp_cfg}, {"change_epsilon", warp_eps}, {"seed", warp_seed}};
      json sidecar{{"seed", warp_seed},
                   {"config", config},
                   {"config_hash", config_hash(config)},
                   {"image_size", {img.width(), img.height()}},
                   {"scaled_ranges",
                    {{"center", {scale * warp_cfg.center_range.lo, scale * warp_cfg.center_range.hi}},
                     {"step_sq", {scale * scale * warp_cfg.sq_step_range.lo,
                                  scale * scale * warp_cfg.sq_step_range.hi}},
                     {"radius", {scale * warp_cfg.radius_range.lo, scale * warp_cfg.radius_range.hi}}}},
                   {"chain", jc},
                   {"changed", changed}};
      write_file(fs::path(warp_out) / "warp.json", sidecar.dump(2) + "\n");
      std::cerr << "resolved config: " << config.dump() << "\n";
      std::printf("warp: %zu warps, %zu/%zu landmarks changed -> %s\n", chain.size(),
                  static_cast<std::size_t>(std::count(changed.begin(), changed.end(), true)),
                  moved.size(), image_path.string().c_str());
      for (const auto& w : chain)
        std::printf("  %s\n", w.describe().c_str());
      return 0;
    }

    if (*gen) {
      // Precedence: defaults, then the file, then explicit flags.
      json j = dcfg;
      merge_file(j, gen_cfg_file);
      const json jf = dcfg;
      for (const auto& [key, opt] : gen_opts)
        if (opt->count() > 0) j[key] = jf[key];
      dcfg = j.get<DatasetConfig>();
      dcfg.validate();
      const Dataset ds = gen_dataset(dcfg, gen_out, threads);
      std::array<int, kNumExpressions> counts{};
      for (const auto* part : {&ds.train, &ds.test})
        for (const auto& s : *part) ++counts[static_cast<std::size_t>(s.label)];
      Report r{"gen-data", "samples", static_cast<double>(dcfg.n), dcfg.seed, json(dcfg)};
      r.extra = {{"train", static_cast<double>(ds.train.size())},
                 {"test", static_cast<double>(ds.test.size())},
                 {"triplets", static_cast<double>(ds.triplets.size())}};
      for (int c = 0; c < kNumExpressions; ++c)
        r.extra.emplace_back("class_" + std::string(kExpressionNames[static_cast<std::size_t>(c)]),
                             counts[static_cast<std::size_t>(c)]);
      emit(r, gen_report.empty() ? fs::path(gen_out) / "report.json" : fs::path(gen_report));
      return 0;
    }

    if (*pre) {
      json j = tcfg;
      const json jf = tcfg;
      merge_file(j, pre_cfg_file);
      for (const auto& [key, opt] : pre_opts)
        if (opt->count() > 0) j[key] = jf[key];
      if (no_cont13) j["use_cont13"] = false;
      if (linear_w) j["linear_landmark_weights"] = true;
      tcfg = j.get<TrainConfig>();
      tcfg.validate();

      const Dataset ds = load_dataset(pre_data);
      fs::create_directories(pre_out);
      Report r{"pretrain", "sim12", 0.0, tcfg.seed, json(tcfg)};
      r.config["data"] = pre_data;
      r.details["dataset_seed"] = ds.config.seed;
      const fs::path report_path = pre_report.empty() ? fs::path(pre_out) / "report.json" : fs::path(pre_report);

      if (pre_init_only) {
        const Checkpoint ck = init_checkpoint(ds.train, tcfg);
        write_checkpoint(fs::path(pre_out) / "init.cwck", ck);
        r.metric = "epoch";
        emit(r, report_path);
        return 0;
      }

      std::optional<Checkpoint> resume;
      PretrainOptions opts;
      opts.out_dir = pre_out;
      opts.threads = threads;
      opts.per_epoch_checkpoints = !pre_no_epoch_ck;
      if (!pre_resume.empty()) {
        resume = read_checkpoint(pre_resume);
        opts.resume = &*resume;
      }
      int steps_seen = 0;
      opts.on_step = [&](const StepLog& s) {
        ++steps_seen;
        if (s.step == 0 || (s.step + 1) % 50 == 0)
          std::cerr << "step " << s.step << " epoch " << s.epoch << " loss " << s.loss.total
                    << " sim12 " << s.loss.sim12 << " sim13 " << s.loss.sim13 << " collapse "
                    << s.collapse << "\n";
      };
      const PretrainResult res = pretrain(ds.train, tcfg, opts);
      if (res.steps.empty()) throw ConfigError("pretrain: nothing to do (checkpoint already at target epoch)");
      const StepLog& last = res.steps.back();
      r.value = last.loss.sim12;
      r.extra = {{"sim13", last.loss.sim13},
                 {"collapse", last.collapse},
                 {"loss_total", last.loss.total},
                 {"l_landmark1", last.loss.l_landmark1},
                 {"epochs", static_cast<double>(res.checkpoint.epoch)},
                 {"steps", static_cast<double>(steps_seen)}};
      emit(r, report_path);
      return 0;
    }

    if (*ext) {
      const Checkpoint ck = read_checkpoint(ext_ck);
      const Dataset ds = load_dataset(ext_data);
      const FeatureTable t = extract_feature_table(ck.params, ext_split == "train" ? ds.train : ds.test);
      write_feature_table(ext_out, t);
      json config{{"checkpoint", ext_ck}, {"data", ext_data}, {"split", ext_split}};
      Report r{"extract-features", "rows", static_cast<double>(t.size()), ck.config.seed, config};
      r.extra = {{"dim", static_cast<double>(t.dim)}};
      emit(r, {});
      return 0;
    }

    if (*knn) {
      const auto [train, test] = knn_src.load(true);
      const double acc = knn_eval(train, test, knn_k);
      json config = knn_src.describe(true);
      config["k"] = knn_k;
      Report r{"eval-knn", "knn_top1_k" + std::to_string(knn_k), acc, checkpoint_seed(knn_src.checkpoint), config};
      r.extra = {{"train_rows", static_cast<double>(train.size())},
                 {"test_rows", static_cast<double>(test.size())}};
      emit(r, knn_report);
      return 0;
    }

    if (*lin) {
      const auto [train, test] = lin_src.load(true);
      const double acc = linear_probe(train, test, probe);
      json config = lin_src.describe(true);
      config["iterations"] = probe.iterations;
      config["lr"] = probe.lr;
      config["probe_seed"] = probe.seed;
      Report r{"eval-linear", "linear_top1", acc, probe.seed, config};
      r.extra = {{"train_rows", static_cast<double>(train.size())},
                 {"test_rows", static_cast<double>(test.size())}};
      emit(r, lin_report);
      return 0;
    }

    if (*ret) {
      const auto [unused, test] = ret_src.load(false);
      std::string triplet_path = ret_triplets;
      if (triplet_path.empty()) {
        if (ret_src.data.empty()) throw ConfigError("eval-retrieval: give --triplets or --data");
        triplet_path = (fs::path(ret_src.data) / "triplets.csv").string();
      }
      const auto triplets = read_triplets(triplet_path);
      const double acc = triplet_accuracy(
          test, triplets, ret_metric == "cos" ? DistanceMetric::kCosine : DistanceMetric::kL2);
      json config = ret_src.describe(false);
      config["metric"] = ret_metric;
      config["triplets"] = triplet_path;
      Report r{"eval-retrieval", "triplet_accuracy", acc, checkpoint_seed(ret_src.checkpoint), config};
      r.extra = {{"triplets", static_cast<double>(triplets.size())}};
      emit(r, ret_report);
      return 0;
    }

    if (*bench) {
      const int par_threads = bench_threads > 0 ? bench_threads : threads;
      const ImageBuffer img = bench_image(bench_size, bench_channels, derive_seed(bench_seed, 0));
      WarpSamplerConfig wcfg;
      wcfg.repeat_n = bench_chain;
      std::vector<WarpChain> chains;
      for (int i = 0; i < bench_iters; ++i) {
        Rng rng(derive_seed(bench_seed, 1, static_cast<std::uint64_t>(i)));
        chains.push_back(sample_warp_chain(rng, wcfg, bench_size));
      }
      // Warm-up, then time each mode over the same chains.
      (void)apply_warp_chain(img, chains.front());
      std::vector<double> single_ms, parallel_ms;
      bool exact = true;
      for (const auto& ch : chains) {
        ImageBuffer a, b;
        single_ms.push_back(time_ms([&] { a = apply_warp_chain(img, ch); }));
        parallel_ms.push_back(time_ms([&] { b = apply_warp_chain_parallel(img, ch, par_threads); }));
        exact = exact && a == b;
      }
      const int pixels = bench_size * bench_size;
      const LatencyStats s = summarize(single_ms, pixels), p = summarize(parallel_ms, pixels);
      json config{{"size", bench_size}, {"chain", bench_chain}, {"iters", bench_iters},
                  {"channels", bench_channels}, {"parallel_threads", par_threads}};
      Report r{"bench", "single_mean_ms", s.mean_ms, bench_seed, config};
      r.extra = {{"single_p50_ms", s.p50_ms},     {"single_p95_ms", s.p95_ms},
                 {"single_mpix_per_s", s.mpix_per_s}, {"parallel_mean_ms", p.mean_ms},
                 {"parallel_p50_ms", p.p50_ms},     {"parallel_p95_ms", p.p95_ms},
                 {"parallel_mpix_per_s", p.mpix_per_s}, {"bit_exact", exact ? 1.0 : 0.0}};
      r.details = {{"single", to_json(s)}, {"parallel", to_json(p)}, {"bit_exact", exact}};
      emit(r, bench_out);
      return exact ? 0 : kExitNumeric;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const WarpInversionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}

// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "budgetvit/errors.hpp"
#include "budgetvit/trainer.hpp"
#include "support.hpp"

using namespace budgetvit;
using namespace budgetvit::testing;
using Catch::Matchers::ContainsSubstring;

namespace fs = std::filesystem;

namespace {

RunConfig tiny_run(const std::string& name, int max_epochs) {
  RunConfig c;
  c.model.embed_dim = 16;
  c.model.depth = 1;
  c.model.num_heads = 2;
  c.model.num_classes = 10;
  c.schedule = {32, 32, 2, 64};
  c.model.final_image_size = 64;
  c.optim.batch_size = 16;
  c.data.synthetic_train_per_class = 6;
  c.data.synthetic_val_per_class = 2;
  c.data.synthetic_size = 64;
  c.budget.max_epochs = max_epochs;
  c.seed = 5;
  c.precision = Precision::Double;
  c.run_dir = name.empty() ? std::string() : scratch_dir(name).string();
  return c;
}

struct Data {
  Dataset train, val;
};

Data data_for(const RunConfig& c) { return {load_train_dataset(c.data), load_val_dataset(c.data)}; }

void check_same_params(VitModel<double>& a, VitModel<double>& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    INFO(pa[i]->name);
    CHECK(pa[i]->value == pb[i]->value);
  }
}

}  // namespace

TEST_CASE("train: a near-zero budget still leaves a loadable checkpoint", "[trainer]") {
  RunConfig c = tiny_run("tiny_budget", 0);
  c.budget.wall_clock_limit = 0.001;
  const Data d = data_for(c);
  const auto res = train<double>(c, d.train, d.val);
  CHECK(res.stop == StopReason::Budget);
  CHECK(res.metrics.size() <= 1);
  const Checkpoint ck = read_checkpoint(latest_checkpoint(c.run_dir));
  CHECK(ck.config == c);
  const auto [model, opt] = restore<double>(ck);
  CHECK(model.current_grid() == 2);
  CHECK(read_metrics_csv(fs::path(c.run_dir) / "metrics.csv").size() == res.metrics.size());
}

TEST_CASE("train: frozen config echoes the optimizer defaults", "[trainer]") {
  RunConfig c = tiny_run("echo", 1);
  const Data d = data_for(c);
  train<double>(c, d.train, d.val);
  const RunConfig frozen = load_run_config(fs::path(c.run_dir) / "config.ini");
  CHECK(frozen == c);
  CHECK(frozen.optim.lr == 1e-3);
  CHECK(frozen.optim.batch_size == 16);
  CHECK(frozen.optim.label_smoothing == 0.1);
  CHECK(frozen.optim.lr_schedule == LrSchedule::Constant);
  const RunConfig defaults;
  CHECK(defaults.optim.batch_size == 64);
}

TEST_CASE("train: metrics bookkeeping", "[trainer][property]") {
  RunConfig c = tiny_run("bookkeeping", 5);
  const Data d = data_for(c);
  const auto res = train<double>(c, d.train, d.val);
  CHECK(res.stop == StopReason::MaxEpochs);
  const auto rows = read_metrics_csv(fs::path(c.run_dir) / "metrics.csv");
  REQUIRE(rows.size() == 5);
  const auto schedule = c.make_schedule();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i] == res.metrics[i]);
    CHECK(rows[i].epoch == static_cast<int>(i));
    CHECK(rows[i].image_size == schedule.size_for_epoch(rows[i].epoch));
    CHECK(std::isfinite(rows[i].train_loss));
    CHECK(rows[i].steps == 4);  // 60 samples, batch 16
    CHECK((rows[i].val_top1 >= 0.0 && rows[i].val_top1 <= 100.0));
    if (i > 0) CHECK(rows[i].wall_clock_s > rows[i - 1].wall_clock_s);
  }
  REQUIRE(res.transitions.size() == 1);
  CHECK(res.transitions[0] == SizeTransition{2, 32, 64, 2, 4});
  CHECK(res.max_step_s > 0.0);
  CHECK(res.last_eval_s > 0.0);
  CHECK(res.state.epoch == 5);
  CHECK(res.state.global_step == 20);
  CHECK(res.state.current_image_size == 64);
  for (int e = 0; e < 5; ++e) CHECK(fs::exists(fs::path(c.run_dir) / ("ckpt_epoch_" + std::to_string(e) + ".bin")));
  CHECK(latest_checkpoint(c.run_dir).filename() == "ckpt_epoch_4.bin");
}

TEST_CASE("train: identical seeds give identical metrics", "[trainer][property]") {
  RunConfig c = tiny_run("", 3);
  const Data d = data_for(c);
  const auto a = train<double>(c, d.train, d.val);
  const auto b = train<double>(c, d.train, d.val);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].train_loss == b.metrics[i].train_loss);
    CHECK(a.metrics[i].val_top1 == b.metrics[i].val_top1);
  }
  RunConfig other = c;
  other.seed = 6;
  const auto o = train<double>(other, d.train, d.val);
  CHECK(o.metrics[0].train_loss != a.metrics[0].train_loss);
}

TEST_CASE("train: constant schedule has no transitions", "[trainer]") {
  RunConfig c = tiny_run("", 3);
  c.schedule = {64, 0, 2, 64};
  const Data d = data_for(c);
  const auto res = train<double>(c, d.train, d.val);
  CHECK(res.transitions.empty());
  for (const auto& r : res.metrics) CHECK(r.image_size == 64);
}

TEST_CASE("train: resume reproduces an uninterrupted run bit-exactly", "[trainer][checkpoint]") {
  RunConfig full = tiny_run("resume_full", 4);
  const Data d = data_for(full);
  auto uninterrupted = train<double>(full, d.train, d.val);

  RunConfig first = tiny_run("resume_part", 3);
  train<double>(first, d.train, d.val);
  const fs::path ck = fs::path(first.run_dir) / "ckpt_epoch_2.bin";
  RunConfig second = first;
  second.budget.max_epochs = 4;
  TrainOptions opts;
  opts.resume_from = ck;
  auto resumed = train<double>(second, d.train, d.val, opts);

  REQUIRE(resumed.metrics.size() == 1);
  CHECK(resumed.metrics[0].epoch == 3);
  CHECK(resumed.metrics[0].train_loss == uninterrupted.metrics[3].train_loss);
  CHECK(resumed.metrics[0].val_top1 == uninterrupted.metrics[3].val_top1);
  CHECK(resumed.state.global_step == uninterrupted.state.global_step);
  CHECK(resumed.optimizer.steps() == uninterrupted.optimizer.steps());
  check_same_params(resumed.model, uninterrupted.model);
  for (std::size_t i = 0; i < resumed.optimizer.m.size(); ++i) {
    CHECK(resumed.optimizer.m[i] == uninterrupted.optimizer.m[i]);
    CHECK(resumed.optimizer.v[i] == uninterrupted.optimizer.v[i]);
  }
  // The resumed run appends to its metrics file.
  CHECK(read_metrics_csv(fs::path(first.run_dir) / "metrics.csv").size() == 4);
}

TEST_CASE("train: single precision resume within 1e-6 relative", "[trainer][checkpoint]") {
  RunConfig full = tiny_run("", 2);
  full.precision = Precision::Single;
  const Data d = data_for(full);
  auto uninterrupted = train<float>(full, d.train, d.val);
  RunConfig first = tiny_run("resume_single", 1);
  first.precision = Precision::Single;
  train<float>(first, d.train, d.val);
  RunConfig second = first;
  second.budget.max_epochs = 2;
  TrainOptions opts;
  opts.resume_from = fs::path(first.run_dir) / "ckpt_epoch_0.bin";
  auto resumed = train<float>(second, d.train, d.val, opts);
  REQUIRE(resumed.metrics.size() == 1);
  const double a = resumed.metrics[0].train_loss;
  const double b = uninterrupted.metrics[1].train_loss;
  CHECK(std::abs(a - b) <= 1e-6 * std::abs(b));
}

TEST_CASE("restore: positional grid is the checkpointed one", "[trainer][checkpoint]") {
  RunConfig c = tiny_run("grid_restore", 2);
  const Data d = data_for(c);
  train<double>(c, d.train, d.val);
  const Checkpoint ck = read_checkpoint(fs::path(c.run_dir) / "ckpt_epoch_1.bin");
  CHECK(ck.state.epoch == 2);
  CHECK(ck.state.grid == 2);
  CHECK(ck.state.current_image_size == 32);
  const auto [model, opt] = restore<double>(ck);
  CHECK(model.current_grid() == 2);
  CHECK(model.pos_embed.value.shape() == Shape{5, 16});
  CHECK(model.config().final_grid() == 4);
  CHECK(opt.steps() == 8);
}

TEST_CASE("restore: mismatched class count is an error", "[trainer][checkpoint][errors]") {
  RunConfig c = tiny_run("class_mismatch", 1);
  const Data d = data_for(c);
  train<double>(c, d.train, d.val);
  const Checkpoint ck = read_checkpoint(latest_checkpoint(c.run_dir));
  ModelConfig expected = ck.config.model;
  expected.num_classes = 100;
  REQUIRE_THROWS_AS(restore<double>(ck, expected), CheckpointError);
  REQUIRE_THROWS_WITH(restore<double>(ck, expected), ContainsSubstring("model.num_classes: checkpoint has 10"));

  RunConfig wrong = c;
  wrong.model.num_classes = 12;
  wrong.data.synthetic_classes = 12;
  TrainOptions opts;
  opts.resume_from = latest_checkpoint(c.run_dir);
  const Data d12 = data_for(wrong);
  CHECK_THROWS_AS(train<double>(wrong, d12.train, d12.val, opts), CheckpointError);
  CHECK_THROWS_AS(train<double>(wrong, d.train, d.val), ConfigError);
}

TEST_CASE("read_checkpoint: truncation and version errors name the field", "[checkpoint][errors]") {
  RunConfig c = tiny_run("ckpt_corrupt", 1);
  const Data d = data_for(c);
  train<double>(c, d.train, d.val);
  const fs::path good = latest_checkpoint(c.run_dir);
  const fs::path cut = fs::path(c.run_dir) / "cut.bin";
  fs::copy_file(good, cut);
  fs::resize_file(cut, fs::file_size(good) - 100);
  REQUIRE_THROWS_AS(read_checkpoint(cut), CheckpointError);
  REQUIRE_THROWS_WITH(read_checkpoint(cut), ContainsSubstring("truncated"));

  const fs::path ver = fs::path(c.run_dir) / "ver.bin";
  fs::copy_file(good, ver);
  {
    std::fstream f(ver, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    f.put(static_cast<char>(9));
  }
  REQUIRE_THROWS_WITH(read_checkpoint(ver), ContainsSubstring("version"));
  CHECK_THROWS_AS(read_checkpoint(fs::path(c.run_dir) / "absent.bin"), CheckpointError);
}

TEST_CASE("checkpoint: write then read is lossless", "[checkpoint][property]") {
  RunConfig c = tiny_run("", 0);
  VitModel<float> model(c.model, 3);
  AdamW<float> opt(model, adamw_hyper(c.optim));
  opt.set_steps(7);
  TrainState st{4, 40, 7, 12.5, 96, 6, 5};
  const fs::path p = scratch_dir("ckpt_rt") / "x.bin";
  save_checkpoint(p, c, st, model, opt);
  const Checkpoint ck = read_checkpoint(p);
  CHECK(ck.config == c);
  CHECK(ck.state.epoch == 4);
  CHECK(ck.state.elapsed == 12.5);
  CHECK(ck.state.grid == model.current_grid());
  const NamedTensor* t = ck.find("p/head.weight");
  REQUIRE(t);
  CHECK(t->dtype == DType::F32);
  CHECK(tensor_cast<float>(t->value) == model.head_w.value);
}

TEST_CASE("train: non-finite loss aborts with a diagnostic checkpoint", "[trainer][errors]") {
  RunConfig c = tiny_run("nonfinite", 3);
  c.optim.lr = 1e300;
  c.optim.weight_decay = 0.0;
  const Data d = data_for(c);
  std::string diag;
  try {
    train<double>(c, d.train, d.val);
    FAIL("expected NonFiniteLossError");
  } catch (const NonFiniteLossError& e) {
    diag = e.checkpoint();
  }
  REQUIRE_FALSE(diag.empty());
  CHECK_NOTHROW(read_checkpoint(diag));
  for (const auto& r : read_metrics_csv(fs::path(c.run_dir) / "metrics.csv")) CHECK(std::isfinite(r.train_loss));
}

TEST_CASE("train: 60 s synthetic run beats 30% top-1", "[trainer][slow]") {
  RunConfig c;
  c.model.embed_dim = 32;
  c.model.depth = 2;
  c.model.num_heads = 2;
  c.model.num_classes = 10;
  c.schedule = {32, 32, 5, 64};
  c.data.synthetic_size = 64;
  c.budget.wall_clock_limit = 60.0;
  c.seed = 0;
  const Data d = data_for(c);
  const auto res = train<float>(c, d.train, d.val);
  REQUIRE_FALSE(res.metrics.empty());
  CHECK(res.metrics.back().val_top1 > 30.0);
  CHECK(res.stop == StopReason::Budget);
}

// ---- evaluate -------------------------------------------------------------

TEST_CASE("evaluate: constant, oracle and deterministic", "[trainer][evaluate]") {
  const Dataset val = synthetic_dataset(10, 5, 32, 2, Split::Val);
  const Normalization n = Normalization::half();
  const Predictor<double> constant = [](const Tensor<double>& x) {
    Tensor<double> logits({x.shape()[0], 10});
    for (std::size_t b = 0; b < x.shape()[0]; ++b) logits[b * 10 + 3] = 1.0;
    return logits;
  };
  CHECK(evaluate(constant, val, 32, n, 8) == 10.0);

  std::size_t cursor = 0;
  const Predictor<double> oracle = [&](const Tensor<double>& x) {
    Tensor<double> logits({x.shape()[0], 10});
    for (std::size_t b = 0; b < x.shape()[0]; ++b) logits[b * 10 + static_cast<std::size_t>(val.label(cursor++))] = 1.0;
    return logits;
  };
  CHECK(evaluate(oracle, val, 32, n, 8) == 100.0);

  RunConfig c = tiny_run("", 0);
  VitModel<double> model(c.model, 9);
  model.interpolate_pos_embed(2);
  const double a = evaluate(model, val, 32, n, 8);
  const double b = evaluate(model, val, 32, n, 7);
  CHECK(a == b);
  CHECK_THROWS_AS(evaluate(model, val, 64, n, 8), StateError);
  CHECK_THROWS_AS(evaluate(model, val, 40, n, 8), ShapeError);
}

// ---- metrics CSV ----------------------------------------------------------

TEST_CASE("metrics CSV round-trips", "[trainer][property]") {
  std::vector<MetricsRecord> rows{{0, 0.1 + 0.2, 32, 2.302585092994046, 10.0, 4},
                                  {1, 1e-9, 64, 1.0 / 3.0, 33.333333333333336, 7}};
  std::stringstream ss;
  ss << kMetricsHeader << '\n';
  for (const auto& r : rows) write_metrics_row(ss, r);
  CHECK(ss.str().find('\r') == std::string::npos);
  CHECK(read_metrics_csv(ss) == rows);
  std::stringstream bad("epoch,loss\n1,2\n");
  CHECK_THROWS(read_metrics_csv(bad));
}

// ---- bench ----------------------------------------------------------------

TEST_CASE("throughput_bench: token counts and timing", "[trainer][bench]") {
  ModelConfig m;
  m.embed_dim = 16;
  m.depth = 1;
  m.num_heads = 2;
  m.num_classes = 10;
  const auto rows = throughput_bench<float>(m, {32, 224}, 3, 2);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].tokens == 4);
  CHECK(rows[1].tokens == 196);
  CHECK(rows[0].step_time_ms < rows[1].step_time_ms);
  CHECK_THROWS_AS(throughput_bench<float>(m, {40}, 1, 1), ShapeError);
}

TEST_CASE("median ignores a single outlier", "[trainer][bench][property]") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({1.0, 2.0, 3.0, 4.0}) == 2.5);
  CHECK(median({5.0, 5.1, 4.9, 5.0, 1000.0}) == 5.0);
  CHECK(median({5.0, 5.1, 4.9, 5.0, 1e-9}) == 5.0);
}

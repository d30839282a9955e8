// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "budgetvit/cli.hpp"
#include "budgetvit/gradcheck.hpp"
#include "budgetvit/trainer.hpp"
#include "support.hpp"

using namespace budgetvit;
using namespace budgetvit::cli;
using namespace budgetvit::testing;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::StartsWith;

namespace fs = std::filesystem;

namespace {

const char* kTiny = R"([model]
embed_dim = 16
depth = 1
num_heads = 2
num_classes = 10

[schedule]
initial_size = 32
increment = 32
period_epochs = 1
final_size = 64

[optim]
batch_size = 16

[data]
format = synthetic
synthetic_train_per_class = 4
synthetic_val_per_class = 2
synthetic_size = 64

[budget]
max_epochs = 2

[run]
precision = double
)";

std::string write_config(const std::string& name, const std::string& text) {
  const fs::path p = scratch_dir(name) / "run.ini";
  std::ofstream(p) << text;
  return p.string();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

struct Captured {
  int code;
  std::string out, err;
};

template <typename Args, typename Fn>
Captured run(Fn fn, const Args& args) {
  std::ostringstream out, err;
  const int code = fn(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

// ---- schedule -------------------------------------------------------------

TEST_CASE("schedule: default config table", "[cli][schedule]") {
  const auto r = run(cmd_schedule, ScheduleArgs{BUDGETVIT_SOURCE_DIR "/configs/default.ini", {}, 31});
  REQUIRE(r.code == kOk);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() == 32);
  CHECK(rows[0] == "epoch,image_size,num_patches");
  CHECK(rows[1] == "0,32,4");
  CHECK(rows[31] == "30,224,196");
  CHECK(r.out.find('\r') == std::string::npos);
}

TEST_CASE("schedule: built-in defaults equal the shipped config", "[cli][schedule]") {
  const auto a = run(cmd_schedule, ScheduleArgs{"", {}, 31});
  const auto b = run(cmd_schedule, ScheduleArgs{BUDGETVIT_SOURCE_DIR "/configs/default.ini", {}, 31});
  CHECK(a.code == kOk);
  CHECK(a.out == b.out);
}

TEST_CASE("schedule: no-curriculum override repeats one size", "[cli][schedule]") {
  const auto r = run(cmd_schedule, ScheduleArgs{"", {"schedule.increment=0", "schedule.initial_size=224"}, 12});
  REQUIRE(r.code == kOk);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() == 13);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i] == std::to_string(i - 1) + ",224,196");
}

TEST_CASE("schedule: invalid schedules exit 2 listing violations", "[cli][schedule][errors]") {
  const auto r = run(cmd_schedule, ScheduleArgs{"", {"schedule.initial_size=40", "schedule.period_epochs=0"}, 5});
  CHECK(r.code == kInvalid);
  CHECK_THAT(r.err, ContainsSubstring("initial_size"));
  CHECK_THAT(r.err, ContainsSubstring("period_epochs"));
  CHECK(run(cmd_schedule, ScheduleArgs{"", {"model.bogus=1"}, 5}).code == kInvalid);
  CHECK(run(cmd_schedule, ScheduleArgs{"/nonexistent.ini", {}, 5}).code == kInvalid);
}

// ---- gradcheck ------------------------------------------------------------

TEST_CASE("gradcheck: primitives pass with one row per op", "[cli][gradcheck]") {
  const auto r = run(cmd_gradcheck, GradcheckArgs{"primitives", {}});
  CHECK(r.code == kOk);
  const auto rows = lines(r.out);
  const auto ops = primitive_ops();
  REQUIRE(rows.size() == ops.size() + 1);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    CHECK_THAT(rows[i + 1], StartsWith(ops[i].name + ","));
    CHECK_THAT(rows[i + 1], ContainsSubstring("true"));
  }
}

TEST_CASE("gradcheck: corrupted h_swish backward is caught", "[cli][gradcheck]") {
  const auto r = run(cmd_gradcheck, GradcheckArgs{"primitives", {"h_swish"}});
  CHECK(r.code == kCheckFailed);
  CHECK_THAT(r.err, ContainsSubstring("worst op h_swish"));
  CHECK(run(cmd_gradcheck, GradcheckArgs{"primitives", {"no_such_op"}}).code == kInvalid);
  CHECK(run(cmd_gradcheck, GradcheckArgs{"everything", {}}).code == kInvalid);
}

// ---- train / eval ---------------------------------------------------------

TEST_CASE("train and eval round trip", "[cli][train][eval]") {
  const std::string cfg = write_config("cli_train", kTiny);
  const std::string dir = (fs::path(cfg).parent_path() / "run").string();
  const auto t = run(cmd_train, TrainArgs{cfg, {}, dir, ""});
  REQUIRE(t.code == kOk);
  CHECK_THAT(t.out, StartsWith("stop=max_epochs epochs=2"));
  CHECK(fs::exists(fs::path(dir) / "metrics.csv"));
  CHECK(fs::exists(fs::path(dir) / "config.ini"));

  const std::string ck = latest_checkpoint(dir).string();
  const auto a = run(cmd_eval, EvalArgs{ck, "", 0});
  const auto b = run(cmd_eval, EvalArgs{ck, "", 0});
  REQUIRE(a.code == kOk);
  CHECK(a.out == b.out);
  CHECK_THAT(a.out, StartsWith("top1="));
  CHECK_THAT(a.out, ContainsSubstring("samples=20 image_size=64"));
  const auto top1 = read_metrics_csv(fs::path(dir) / "metrics.csv").back().val_top1;
  CHECK_THAT(a.out, StartsWith("top1=" + std::to_string(top1).substr(0, 2)));

  CHECK(run(cmd_eval, EvalArgs{ck, "", 100}).code == kInvalid);
  CHECK(run(cmd_eval, EvalArgs{ck, "", 32}).code == kOk);
  CHECK(run(cmd_eval, EvalArgs{ck, "/nonexistent/val", 0}).code == kInvalid);
  CHECK(run(cmd_eval, EvalArgs{dir + "/missing.bin", "", 0}).code == kInvalid);

  // A synthetic-trained checkpoint scored on exported records.
  const fs::path exported = fs::path(dir) / "export" / "test_batch.bin";
  fs::create_directories(exported.parent_path());
  write_binary_records(synthetic_dataset(10, 3, 32, 99, Split::Val), exported);
  const auto e = run(cmd_eval, EvalArgs{ck, exported.parent_path().string(), 32});
  CHECK(e.code == kOk);
  CHECK_THAT(e.out, ContainsSubstring("samples=30 image_size=32"));

  // Resume from the latest checkpoint with a raised epoch cap.
  const auto resumed = run(cmd_train, TrainArgs{cfg, {"budget.max_epochs=3"}, dir, "latest"});
  CHECK(resumed.code == kOk);
  CHECK_THAT(resumed.out, StartsWith("stop=max_epochs epochs=3"));
  CHECK(read_metrics_csv(fs::path(dir) / "metrics.csv").size() == 3);
}

TEST_CASE("train: validation failures exit 2", "[cli][train][errors]") {
  const std::string cfg = write_config("cli_bad", kTiny);
  auto r = run(cmd_train,
               TrainArgs{cfg, {"data.format=image-directory", "data.path=/nonexistent/train"}, "", ""});
  CHECK(r.code == kInvalid);
  CHECK_THAT(r.err, ContainsSubstring("data.path"));
  r = run(cmd_train, TrainArgs{cfg, {"optim.lr=0", "model.num_heads=3"}, "", ""});
  CHECK(r.code == kInvalid);
  CHECK_THAT(r.err, ContainsSubstring("optim.lr"));
  CHECK_THAT(r.err, ContainsSubstring("model.num_heads"));
  CHECK(run(cmd_train, TrainArgs{cfg, {}, scratch_dir("cli_bad_resume").string(), "latest"}).code == kInvalid);
}

TEST_CASE("train: non-finite loss exits 3", "[cli][train][errors]") {
  const std::string cfg = write_config("cli_nan", kTiny);
  const auto r = run(cmd_train, TrainArgs{cfg, {"optim.lr=1e300", "optim.weight_decay=0"},
                                          (fs::path(cfg).parent_path() / "run").string(), ""});
  CHECK(r.code == kAborted);
  CHECK_THAT(r.err, ContainsSubstring("ckpt_nonfinite.bin"));
}

TEST_CASE("resolve_run_dir precedence", "[cli]") {
  ::unsetenv("RUN_DIR");
  CHECK(resolve_run_dir("", "") == "run");
  CHECK(resolve_run_dir("", "cfg_dir") == "cfg_dir");
  ::setenv("RUN_DIR", "env_dir", 1);
  CHECK(resolve_run_dir("", "cfg_dir") == "env_dir");
  CHECK(resolve_run_dir("flag_dir", "cfg_dir") == "flag_dir");
  ::unsetenv("RUN_DIR");
}

// ---- bench ----------------------------------------------------------------

TEST_CASE("bench: seven sizes with token counts", "[cli][bench]") {
  const auto r = run(cmd_bench, BenchArgs{"", {"model.embed_dim=16", "model.depth=1", "model.num_heads=2"}, {}, 3, 2});
  REQUIRE(r.code == kOk);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() == 8);
  CHECK(rows[0] == "image_size,tokens,step_time_ms");
  const int tokens[] = {4, 16, 36, 64, 100, 144, 196};
  for (int i = 0; i < 7; ++i) {
    CHECK_THAT(rows[static_cast<std::size_t>(i) + 1],
               StartsWith(std::to_string(32 * (i + 1)) + "," + std::to_string(tokens[i]) + ","));
  }
  CHECK_THAT(r.err, StartsWith("step_time_ratio="));
}

TEST_CASE("bench: single size gives ratio 1", "[cli][bench]") {
  const auto r = run(cmd_bench, BenchArgs{"", {"model.embed_dim=16", "model.depth=1", "model.num_heads=2"}, {64}, 2, 2});
  REQUIRE(r.code == kOk);
  CHECK(lines(r.out).size() == 2);
  CHECK_THAT(r.err, StartsWith("step_time_ratio=1 "));
}

TEST_CASE("bench: sizes must tile into patches", "[cli][bench][errors]") {
  CHECK(run(cmd_bench, BenchArgs{"", {}, {100}, 1, 1}).code == kInvalid);
}

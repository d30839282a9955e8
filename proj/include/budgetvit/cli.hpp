// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0
//
// In-process implementations of the budgetvit subcommands. Each returns
// the process exit code and writes machine-readable output to `out`,
// diagnostics to `err`.

#pragma once

#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace budgetvit::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kInvalid = 2,
  kAborted = 3,
};

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string run_dir;  // beats RUN_DIR, which beats run.run_dir
  std::string resume;   // checkpoint path, or "latest" for <run_dir>/ckpt_latest
};
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);

struct EvalArgs {
  std::string checkpoint;
  std::string data_path;  // empty: the data section stored in the checkpoint
  int eval_size = 0;      // 0: the checkpoint's current image size
};
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);

struct ScheduleArgs {
  std::string config;  // empty: built-in defaults
  std::vector<std::string> overrides;
  int max_epochs = 31;
};
int cmd_schedule(const ScheduleArgs& args, std::ostream& out, std::ostream& err);

struct GradcheckArgs {
  std::string scope = "primitives";  // primitives | model
  std::set<std::string> inject_fault;
};
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err);

struct BenchArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::vector<int> sizes;  // empty: every size the schedule emits
  int steps = 5;
  int batch_size = 8;
};
int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err);

/// Resolves the run directory: explicit flag, then RUN_DIR, then config.
std::string resolve_run_dir(const std::string& flag, const std::string& from_config);

}  // namespace budgetvit::cli

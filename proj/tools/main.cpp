// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0
//
// budgetvit command-line entry point.

#include <CLI11.hpp>

#include <iostream>

#include "budgetvit/cli.hpp"

namespace cli = budgetvit::cli;

int main(int argc, char** argv) {
  CLI::App app{"Budget-constrained vision transformer training"};
  app.require_subcommand(1);

  cli::TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train under a wall-clock budget");
  train_cmd->add_option("-c,--config", train.config, "Run configuration (INI)")->required();
  train_cmd->add_option("--override", train.overrides, "section.key=value, repeatable");
  train_cmd->add_option("--run-dir", train.run_dir, "Output directory (overrides RUN_DIR and run.run_dir)");
  train_cmd->add_option("--resume", train.resume, "Checkpoint to resume from, or 'latest'");
  int train_eval_size = 0;
  train_cmd->add_option("--eval-size", train_eval_size, "Evaluate at this size instead of the curriculum size");

  cli::EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data_path, "Validation data (default: the checkpoint's data section)");
  eval_cmd->add_option("--eval-size", eval.eval_size, "Image size (default: the checkpoint's current size)");

  cli::ScheduleArgs schedule;
  auto* schedule_cmd = app.add_subcommand("schedule", "Print the epoch to image-size table");
  schedule_cmd->add_option("-c,--config", schedule.config, "Run configuration (default: built-in)");
  schedule_cmd->add_option("--override", schedule.overrides, "section.key=value, repeatable");
  schedule_cmd->add_option("--epochs", schedule.max_epochs, "Number of epochs to list")->capture_default_str();

  cli::GradcheckArgs gradcheck;
  std::vector<std::string> faults;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient certification");
  gradcheck_cmd->add_option("scope,--scope", gradcheck.scope, "primitives | model")->capture_default_str();
  gradcheck_cmd->add_option("--inject-fault", faults, "Corrupt the named op's backward")->group("");

  cli::BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Step time per image size");
  bench_cmd->add_option("-c,--config", bench.config, "Run configuration (default: built-in)");
  bench_cmd->add_option("--override", bench.overrides, "section.key=value, repeatable");
  bench_cmd->add_option("--sizes", bench.sizes, "Image sizes (default: every size the schedule emits)")
      ->delimiter(',');
  bench_cmd->add_option("--steps", bench.steps, "Timed steps per size")->capture_default_str();
  bench_cmd->add_option("--batch", bench.batch_size, "Batch size")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kInvalid;
  }

  if (*train_cmd) {
    if (train_eval_size != 0) train.overrides.push_back("run.eval_size=" + std::to_string(train_eval_size));
    return cli::cmd_train(train, std::cout, std::cerr);
  }
  if (*eval_cmd) return cli::cmd_eval(eval, std::cout, std::cerr);
  if (*schedule_cmd) return cli::cmd_schedule(schedule, std::cout, std::cerr);
  if (*gradcheck_cmd) {
    gradcheck.inject_fault.insert(faults.begin(), faults.end());
    return cli::cmd_gradcheck(gradcheck, std::cout, std::cerr);
  }
  return cli::cmd_bench(bench, std::cout, std::cerr);
}

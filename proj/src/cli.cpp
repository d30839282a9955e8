// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "budgetvit/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <ostream>

#include "budgetvit/checkpoint.hpp"
#include "budgetvit/config.hpp"
#include "budgetvit/errors.hpp"
#include "budgetvit/gradcheck.hpp"
#include "budgetvit/trainer.hpp"

namespace budgetvit::cli {
namespace {

std::string shortest(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

int report_config_error(const ConfigError& e, std::ostream& err) {
  err << "invalid configuration:\n";
  for (const auto& v : e.violations()) err << "  " << v << '\n';
  return kInvalid;
}

RunConfig config_or_default(const std::string& path, const std::vector<std::string>& overrides, DataCheck data_check) {
  if (path.empty()) return parse_run_config(std::string(), overrides, data_check);
  return load_run_config(path, overrides, data_check);
}

template <typename T>
int run_training(const RunConfig& cfg, const std::string& resume, std::ostream& out) {
  const Dataset train_ds = load_train_dataset(cfg.data);
  const Dataset val_ds = load_val_dataset(cfg.data);
  TrainOptions opts;
  if (resume == "latest") {
    opts.resume_from = latest_checkpoint(cfg.run_dir);
  } else {
    opts.resume_from = resume;
  }
  const TrainResult<T> res = train<T>(cfg, train_ds, val_ds, opts);
  out << "stop=" << to_string(res.stop) << " epochs=" << res.state.epoch << " steps=" << res.state.global_step
      << " elapsed_s=" << shortest(res.state.elapsed);
  if (!res.metrics.empty()) out << " val_top1=" << shortest(res.metrics.back().val_top1);
  out << " run_dir=" << cfg.run_dir << '\n';
  return kOk;
}

bool looks_like_records(const std::filesystem::path& p) {
  std::error_code ec;
  if (std::filesystem::is_regular_file(p, ec)) return true;
  if (!std::filesystem::is_directory(p, ec)) return false;
  for (const auto& e : std::filesystem::directory_iterator(p, ec)) {
    if (e.path().extension() == ".bin") return true;
  }
  return false;
}

template <typename T>
int run_eval(const Checkpoint& ck, const EvalArgs& args, std::ostream& out) {
  RunConfig cfg = ck.config;
  if (!args.data_path.empty()) {
    cfg.data.path = args.data_path;
    cfg.data.val_path = args.data_path;
    if (cfg.data.format == DataFormat::Synthetic) {
      // Synthetic runs can be scored on exported or real data; pick the
      // reader from what is on disk. Normalization stays the trained one.
      cfg.data.norm = cfg.data.normalization();
      cfg.data.format = looks_like_records(args.data_path) ? DataFormat::BinaryRecord : DataFormat::ImageDirectory;
    }
  }
  const Dataset val = load_val_dataset(cfg.data);
  if (val.num_classes() != cfg.model.num_classes) {
    throw ConfigError({"data.path: dataset has " + std::to_string(val.num_classes()) + " classes, checkpoint " +
                       std::to_string(cfg.model.num_classes)});
  }
  auto [model, opt] = restore<T>(ck);
  const int size = args.eval_size > 0 ? args.eval_size : model.current_image_size();
  model.interpolate_pos_embed(size / cfg.model.patch_size);
  const double top1 = evaluate(model, val, size, cfg.data.normalization(), cfg.optim.batch_size);
  out << "top1=" << shortest(top1) << " samples=" << val.size() << " image_size=" << size << '\n';
  return kOk;
}

}  // namespace

std::string resolve_run_dir(const std::string& flag, const std::string& from_config) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("RUN_DIR"); env && *env) return env;
  if (!from_config.empty()) return from_config;
  return "run";
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  try {
    RunConfig cfg = load_run_config(args.config, args.overrides);
    cfg.run_dir = resolve_run_dir(args.run_dir, cfg.run_dir);
    return cfg.precision == Precision::Double ? run_training<double>(cfg, args.resume, out)
                                              : run_training<float>(cfg, args.resume, out);
  } catch (const ConfigError& e) {
    return report_config_error(e, err);
  } catch (const IngestionError& e) {
    err << "data error: " << e.what() << '\n';
    return kInvalid;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kInvalid;
  } catch (const NonFiniteLossError& e) {
    err << "aborted: " << e.what();
    if (!e.checkpoint().empty()) err << " (diagnostic checkpoint " << e.checkpoint() << ")";
    err << '\n';
    return kAborted;
  } catch (const std::exception& e) {
    err << "aborted: " << e.what() << '\n';
    return kAborted;
  }
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const Checkpoint ck = read_checkpoint(args.checkpoint);
    const int p = ck.config.model.patch_size;
    if (args.eval_size < 0 || (args.eval_size > 0 && args.eval_size % p != 0)) {
      err << "invalid eval size " << args.eval_size << ": not a positive multiple of patch size " << p << '\n';
      return kInvalid;
    }
    bool single = false;
    for (const auto& t : ck.tensors) single |= t.dtype == DType::F32;
    return single ? run_eval<float>(ck, args, out) : run_eval<double>(ck, args, out);
  } catch (const ConfigError& e) {
    return report_config_error(e, err);
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kInvalid;
  } catch (const IngestionError& e) {
    err << "data error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    err << "aborted: " << e.what() << '\n';
    return kAborted;
  }
}

int cmd_schedule(const ScheduleArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.max_epochs < 1) {
      err << "invalid --epochs " << args.max_epochs << ": must be >= 1\n";
      return kInvalid;
    }
    const RunConfig cfg = config_or_default(args.config, args.overrides, DataCheck::Skip);
    const ImageSizeSchedule s = cfg.make_schedule();
    out << "epoch,image_size,num_patches\n";
    for (int e = 0; e < args.max_epochs; ++e) {
      out << e << ',' << s.size_for_epoch(e) << ',' << s.patches_for_epoch(e) << '\n';
    }
    return kOk;
  } catch (const ConfigError& e) {
    return report_config_error(e, err);
  }
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  if (args.scope != "primitives" && args.scope != "model") {
    err << "invalid scope '" << args.scope << "' (expected primitives or model)\n";
    return kInvalid;
  }
  std::vector<DiffOp> ops = primitive_ops();
  if (args.scope == "model") {
    auto more = model_ops();
    ops.insert(ops.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  for (const auto& name : args.inject_fault) {
    if (std::none_of(ops.begin(), ops.end(), [&](const DiffOp& op) { return op.name == name; })) {
      err << "unknown op '" << name << "' for fault injection\n";
      return kInvalid;
    }
  }
  corrupt_backward(ops, args.inject_fault);
  const auto reports = run_grad_checks(ops);
  write_gradcheck_csv(out, reports);
  const GradCheckReport* worst = nullptr;
  for (const auto& r : reports) {
    if (!r.passed && (!worst || r.max_rel_err > worst->max_rel_err)) worst = &r;
  }
  if (worst) {
    err << "gradient check failed; worst op " << worst->op_name << " (max_rel_err " << worst->max_rel_err << ")\n";
    return kCheckFailed;
  }
  return kOk;
}

int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig cfg = config_or_default(args.config, args.overrides, DataCheck::Skip);
    std::vector<int> sizes = args.sizes;
    if (sizes.empty()) {
      const ImageSizeSchedule s = cfg.make_schedule();
      for (int e = 0; e <= s.saturation_epoch(); ++e) {
        if (sizes.empty() || sizes.back() != s.size_for_epoch(e)) sizes.push_back(s.size_for_epoch(e));
      }
    }
    std::vector<std::string> bad;
    for (int size : sizes) {
      if (size < 1 || size % cfg.model.patch_size != 0) {
        bad.push_back("sizes: " + std::to_string(size) + " is not divisible by model.patch_size " +
                      std::to_string(cfg.model.patch_size));
      }
    }
    if (args.steps < 1) bad.emplace_back("steps: must be >= 1");
    if (args.batch_size < 1) bad.emplace_back("batch: must be >= 1");
    if (!bad.empty()) throw ConfigError(std::move(bad));

    ModelConfig mcfg = cfg.model;
    mcfg.final_image_size = *std::max_element(sizes.begin(), sizes.end());
    const auto rows = cfg.precision == Precision::Double
                          ? throughput_bench<double>(mcfg, sizes, args.steps, args.batch_size, cfg.seed)
                          : throughput_bench<float>(mcfg, sizes, args.steps, args.batch_size, cfg.seed);
    out << "image_size,tokens,step_time_ms\n";
    double lo = rows.front().step_time_ms, hi = lo;
    int lo_size = rows.front().image_size, hi_size = lo_size;
    for (const auto& r : rows) {
      out << r.image_size << ',' << r.tokens << ',' << shortest(r.step_time_ms) << '\n';
      if (r.image_size < lo_size) lo_size = r.image_size, lo = r.step_time_ms;
      if (r.image_size > hi_size) hi_size = r.image_size, hi = r.step_time_ms;
    }
    err << "step_time_ratio=" << shortest(hi / lo) << " (" << hi_size << " vs " << lo_size << ")\n";
    return kOk;
  } catch (const ConfigError& e) {
    return report_config_error(e, err);
  }
}

}  // namespace budgetvit::cli

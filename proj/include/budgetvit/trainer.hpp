// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Wall-clock-budgeted training: the curriculum picks each epoch's image
// size, the model's positional embeddings follow it, and the run stops at
// the first of budget expiry or the epoch cap.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "budgetvit/checkpoint.hpp"
#include "budgetvit/config.hpp"
#include "budgetvit/curriculum.hpp"
#include "budgetvit/data.hpp"
#include "budgetvit/model.hpp"
#include "budgetvit/numerics.hpp"

namespace budgetvit {

/// AdamW moments for every model parameter, in parameters() order.
template <typename T>
class AdamW {
 public:
  AdamW(const VitModel<T>& model, const AdamWHyper& hp);

  /// One update using the gradients currently held by the model.
  void step(VitModel<T>& model, double lr);
  /// Resizes the pos_embed moments alongside the embedding itself.
  void resize_pos_embed(int old_grid, int new_grid, bool has_class_token);

  const AdamWHyper& hyper() const noexcept { return hp_; }
  std::int64_t steps() const noexcept { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }

  std::vector<std::string> names;
  std::vector<Tensor<T>> m, v;

 private:
  AdamWHyper hp_;
  std::int64_t t_ = 0;
  std::size_t pos_index_ = 0;
};

AdamWHyper adamw_hyper(const OptimConfig& optim);

/// Forward, label-smoothed loss, backward and one optimizer update. A
/// non-finite loss is returned without touching the weights.
template <typename T>
double train_step(VitModel<T>& model, AdamW<T>& opt, const Batch<T>& batch, double label_smoothing, double lr);

template <typename T>
using Predictor = std::function<Tensor<T>(const Tensor<T>& images)>;

/// Top-1 percent over the whole split at `image_size`, no augmentation.
template <typename T>
double evaluate(const Predictor<T>& predict, const Dataset& val, int image_size, const Normalization& norm,
                int batch_size = 64, int patch_size = 16);

/// Throws StateError when the model's grid does not match `image_size`.
template <typename T>
double evaluate(const VitModel<T>& model, const Dataset& val, int image_size, const Normalization& norm,
                int batch_size = 64);

struct MetricsRecord {
  int epoch = 0;
  double wall_clock_s = 0.0;
  int image_size = 0;
  double train_loss = 0.0;
  double val_top1 = 0.0;
  int steps = 0;  // optimizer steps taken in this epoch

  bool operator==(const MetricsRecord&) const = default;
};

inline constexpr const char* kMetricsHeader = "epoch,wall_clock_s,image_size,train_loss,val_top1,steps";
void write_metrics_row(std::ostream& os, const MetricsRecord& r);
std::vector<MetricsRecord> read_metrics_csv(std::istream& is);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

enum class StopReason { Budget, MaxEpochs };
std::string to_string(StopReason r);

template <typename T>
struct TrainResult {
  VitModel<T> model;
  AdamW<T> optimizer;
  TrainState state;
  std::vector<MetricsRecord> metrics;
  std::vector<SizeTransition> transitions;
  StopReason stop = StopReason::Budget;
  double max_step_s = 0.0;   // longest optimizer step, batch preparation included
  double last_eval_s = 0.0;  // duration of the final validation pass
};

struct TrainOptions {
  std::filesystem::path resume_from;  // empty: fresh run
  bool write_files = true;            // metrics, checkpoints and frozen config under run_dir
  std::function<void(const MetricsRecord&)> on_epoch;
};

/// Runs until the budget or epoch cap is hit. Throws ConfigError for a
/// config/dataset mismatch and NonFiniteLossError on divergence.
template <typename T>
TrainResult<T> train(const RunConfig& cfg, const Dataset& train_ds, const Dataset& val_ds,
                     const TrainOptions& options = {});

/// Checkpoint capture and restore for a model/optimizer pair.
template <typename T>
Checkpoint make_checkpoint(const RunConfig& cfg, const TrainState& state, const VitModel<T>& model,
                           const AdamW<T>& opt);
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const TrainState& state,
                     const VitModel<T>& model, const AdamW<T>& opt);
/// Rebuilds the model at the checkpointed grid. Throws CheckpointError if
/// the checkpoint does not fit `expected`.
template <typename T>
std::pair<VitModel<T>, AdamW<T>> restore(const Checkpoint& ckpt, const ModelConfig& expected);
template <typename T>
std::pair<VitModel<T>, AdamW<T>> restore(const Checkpoint& ckpt);

/// Path of the most recent checkpoint recorded in <run_dir>/ckpt_latest.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

struct BenchRow {
  int image_size = 0;
  std::size_t tokens = 0;  // patch tokens, (S/P)^2
  double step_time_ms = 0.0;
};

/// Median forward+backward time per size after `warmup` untimed steps.
template <typename T>
std::vector<BenchRow> throughput_bench(const ModelConfig& cfg, const std::vector<int>& sizes, int steps,
                                       int batch_size, std::uint64_t seed = 0, int warmup = 1);

double median(std::vector<double> xs);

}  // namespace budgetvit

// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one sectioned key=value file drives every command.
// Unknown keys are rejected; overrides use `section.key=value`.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "budgetvit/curriculum.hpp"
#include "budgetvit/data.hpp"
#include "budgetvit/model.hpp"

namespace budgetvit {

enum class LrSchedule { Constant, Cosine };

/// How much of the data section validation covers.
enum class DataCheck {
  Full,       // values and path existence
  SkipPaths,  // values only
  Skip,       // commands that never touch data
};
enum class Precision { Single, Double };

std::string to_string(LrSchedule s);
std::string to_string(Precision p);

struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
  double label_smoothing = 0.1;
  int batch_size = 64;
  LrSchedule lr_schedule = LrSchedule::Constant;

  bool operator==(const OptimConfig&) const = default;
};

struct TrainBudget {
  double wall_clock_limit = 24.0 * 3600.0;  // seconds
  int max_epochs = 0;                       // 0: no epoch cap

  bool operator==(const TrainBudget&) const = default;
};

struct DataConfig {
  DataFormat format = DataFormat::Synthetic;
  std::string path;
  std::string val_path;
  // Unset means the format default: natural-image statistics for real data,
  // 0.5/0.5 for synthetic.
  std::optional<Normalization> norm;
  bool augment = true;
  int synthetic_classes = 10;
  int synthetic_train_per_class = 200;
  int synthetic_val_per_class = 50;
  int synthetic_size = 64;
  std::uint64_t synthetic_seed = 7;

  Normalization normalization() const;
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  ScheduleSpec schedule;
  OptimConfig optim;
  DataConfig data;
  TrainBudget budget;
  std::uint64_t seed = 0;
  std::string run_dir;
  Precision precision = Precision::Single;
  int eval_size = 0;  // 0: evaluate at the current curriculum size

  /// Field-qualified messages; empty means valid.
  std::vector<std::string> validate(DataCheck data_check = DataCheck::Full) const;
  ImageSizeSchedule make_schedule() const { return ImageSizeSchedule(schedule); }
  bool operator==(const RunConfig&) const = default;
};

/// Parses INI text, applies overrides, and validates. Throws ConfigError
/// with every problem found.
RunConfig parse_run_config(std::istream& in, const std::vector<std::string>& overrides = {},
                           DataCheck data_check = DataCheck::Full);
RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides = {},
                           DataCheck data_check = DataCheck::Full);
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {},
                          DataCheck data_check = DataCheck::Full);

/// Fully resolved INI text; parsing it back yields an equal RunConfig.
std::string to_ini(const RunConfig& cfg);

/// Datasets described by the data section.
Dataset load_train_dataset(const DataConfig& data);
Dataset load_val_dataset(const DataConfig& data);

}  // namespace budgetvit

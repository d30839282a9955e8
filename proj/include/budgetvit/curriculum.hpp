// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Image-size curriculum: the input resolution is a pure function of the
// epoch index, growing linearly by `increment` pixels every `period_epochs`
// epochs until it reaches `final_size`.

#pragma once

#include <string>
#include <vector>

namespace budgetvit {

struct ScheduleSpec {
  int initial_size = 32;
  int increment = 32;
  int period_epochs = 5;
  int final_size = 224;
  int patch_size = 16;

  bool operator==(const ScheduleSpec&) const = default;
};

struct SizeTransition {
  int epoch = 0;
  int old_size = 0;
  int new_size = 0;
  int old_grid = 0;
  int new_grid = 0;

  bool operator==(const SizeTransition&) const = default;
};

/// Every violated invariant, including sizes the schedule would emit that
/// cannot be tiled by whole patches. Empty means valid.
std::vector<std::string> validate(const ScheduleSpec& spec);

class ImageSizeSchedule {
 public:
  /// Throws ConfigError listing the violations.
  explicit ImageSizeSchedule(const ScheduleSpec& spec);

  /// A single-size schedule (no curriculum).
  static ImageSizeSchedule constant(int size, int patch_size);

  const ScheduleSpec& spec() const noexcept { return spec_; }

  int size_for_epoch(int epoch) const;
  int grid_for_epoch(int epoch) const { return size_for_epoch(epoch) / spec_.patch_size; }
  int patches_for_epoch(int epoch) const {
    const int g = grid_for_epoch(epoch);
    return g * g;
  }
  /// One entry per epoch in [1, max_epochs) whose size exceeds the previous one.
  std::vector<SizeTransition> transitions(int max_epochs) const;
  /// First epoch from which the size stays at final_size.
  int saturation_epoch() const;

 private:
  ScheduleSpec spec_;
};

inline int size_for_epoch(const ImageSizeSchedule& s, int epoch) { return s.size_for_epoch(epoch); }
inline std::vector<SizeTransition> transitions(const ImageSizeSchedule& s, int max_epochs) {
  return s.transitions(max_epochs);
}

}  // namespace budgetvit

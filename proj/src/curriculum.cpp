// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "budgetvit/curriculum.hpp"

#include <algorithm>

#include "budgetvit/errors.hpp"

namespace budgetvit {

std::vector<std::string> validate(const ScheduleSpec& s) {
  std::vector<std::string> v;
  const auto p = s.patch_size;
  if (p < 1) {
    v.emplace_back("schedule.patch_size: must be >= 1");
    return v;
  }
  if (s.initial_size < 1) v.emplace_back("schedule.initial_size: must be >= 1");
  if (s.final_size < 1) v.emplace_back("schedule.final_size: must be >= 1");
  if (s.increment < 0) v.emplace_back("schedule.increment: must be >= 0");
  if (s.period_epochs < 1) v.emplace_back("schedule.period_epochs: must be >= 1");
  if (s.initial_size >= 1 && s.initial_size % p != 0) {
    v.emplace_back("schedule.initial_size: " + std::to_string(s.initial_size) + " is not divisible by patch size " +
                   std::to_string(p));
  }
  if (s.final_size >= 1 && s.final_size % p != 0) {
    v.emplace_back("schedule.final_size: " + std::to_string(s.final_size) + " is not divisible by patch size " +
                   std::to_string(p));
  }
  if (s.increment > 0 && s.increment % p != 0) {
    v.emplace_back("schedule.increment: " + std::to_string(s.increment) + " is not divisible by patch size " +
                   std::to_string(p) + " (size " + std::to_string(s.initial_size + s.increment) + " would be emitted)");
  }
  if (s.initial_size > s.final_size) {
    v.emplace_back("schedule.initial_size: " + std::to_string(s.initial_size) + " exceeds final_size " +
                   std::to_string(s.final_size));
  }
  if (!v.empty()) return v;
  // Walk every size the schedule can emit.
  if (s.increment > 0) {
    for (int size = s.initial_size; size < s.final_size; size += s.increment) {
      if (size % p != 0) {
        v.emplace_back("schedule: emitted size " + std::to_string(size) + " is not divisible by patch size " +
                       std::to_string(p));
      }
    }
  }
  return v;
}

ImageSizeSchedule::ImageSizeSchedule(const ScheduleSpec& spec) : spec_(spec) {
  if (auto v = validate(spec); !v.empty()) throw ConfigError(std::move(v));
}

ImageSizeSchedule ImageSizeSchedule::constant(int size, int patch_size) {
  return ImageSizeSchedule(ScheduleSpec{size, 0, 1, size, patch_size});
}

int ImageSizeSchedule::size_for_epoch(int epoch) const {
  if (epoch < 0) throw ArgumentError("size_for_epoch: epoch must be >= 0, got " + std::to_string(epoch));
  if (spec_.increment == 0) return spec_.initial_size;
  const long long steps = epoch / spec_.period_epochs;
  const long long grown = spec_.initial_size + static_cast<long long>(spec_.increment) * steps;
  return static_cast<int>(std::min<long long>(spec_.final_size, grown));
}

std::vector<SizeTransition> ImageSizeSchedule::transitions(int max_epochs) const {
  if (max_epochs < 1) throw ArgumentError("transitions: max_epochs must be >= 1");
  std::vector<SizeTransition> out;
  const int p = spec_.patch_size;
  // Sizes only change on period boundaries.
  for (int e = spec_.period_epochs; e < max_epochs; e += spec_.period_epochs) {
    const int prev = size_for_epoch(e - 1);
    const int cur = size_for_epoch(e);
    if (cur > prev) out.push_back({e, prev, cur, prev / p, cur / p});
    if (cur == spec_.final_size) break;
  }
  return out;
}

int ImageSizeSchedule::saturation_epoch() const {
  if (spec_.increment == 0 || spec_.initial_size == spec_.final_size) return 0;
  const int gap = spec_.final_size - spec_.initial_size;
  const int steps = (gap + spec_.increment - 1) / spec_.increment;
  return spec_.period_epochs * steps;
}

}  // namespace budgetvit

// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary checkpoint container.
//
//   "BVITCKPT"                    8 bytes
//   version                       u32 (currently 1)
//   manifest length, manifest     u64, UTF-8 INI text (run config + [state])
//   tensor count                  u32
//   per tensor:
//     name length, name           u32, bytes
//     dtype                       u8 (1 = f32, 2 = f64)
//     rank, dims                  u32, u64 x rank
//     data                        row-major, little-endian
//   "BVITEND\0"                   8 bytes
//
// All integers are little-endian.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "budgetvit/config.hpp"
#include "budgetvit/tensor.hpp"

namespace budgetvit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

struct NamedTensor {
  std::string name;
  DType dtype = DType::F64;
  Tensor<double> value;  // widened on load; f32 round-trips exactly
};

/// Training loop counters. Optimizer moments travel as m/ and v/ tensors.
struct TrainState {
  int epoch = 0;  // next epoch to run
  std::int64_t global_step = 0;
  std::int64_t optimizer_step = 0;
  double elapsed = 0.0;  // seconds of budget consumed
  int current_image_size = 0;
  int grid = 0;
  std::uint64_t seed = 0;

  bool operator==(const TrainState&) const = default;
};

struct Checkpoint {
  RunConfig config;
  TrainState state;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

std::string manifest_text(const RunConfig& config, const TrainState& state);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws CheckpointError naming the field that failed to read.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace budgetvit

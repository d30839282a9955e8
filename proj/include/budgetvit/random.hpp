// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seed lineage. A single run seed fans out into independent streams so each
// component can be reproduced in isolation:
//   derive_seed(seed, stream, a, b) = splitmix64 chain over (seed, stream, a, b)

#pragma once

#include <cstdint>

namespace budgetvit {

enum class Stream : std::uint64_t {
  ModelInit = 1,
  DataOrder = 2,
  Augment = 3,
  Synthetic = 4,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  h = splitmix64(h ^ a);
  return splitmix64(h ^ b);
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
template <typename Rng>
double unit_uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace budgetvit

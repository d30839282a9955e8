// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit and acceptance suites.

#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "budgetvit/model.hpp"
#include "budgetvit/tensor.hpp"

namespace budgetvit::testing {

using TD = Tensor<double>;

inline TD random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  TD t(std::move(s));
  for (auto& x : t.span()) x = u(rng);
  return t;
}

inline void randomize(Param<double>& p, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& x : p.value.span()) x = u(rng);
}

/// Weights of one locality or plain FFN of width d with O(1) random values.
inline FfnWeights<double> random_ffn(std::size_t d, std::mt19937_64& rng, bool with_conv = true) {
  const std::size_t h = 4 * d;
  FfnWeights<double> w{{"expand.weight", TD({d, h})}, {"expand.bias", TD({h})},
                       {"dwconv.weight", TD({h, 3, 3})}, {"dwconv.bias", TD({h})},
                       {"squeeze.weight", TD({h, d})}, {"squeeze.bias", TD({d})}};
  randomize(w.expand_w, rng);
  randomize(w.expand_b, rng);
  randomize(w.squeeze_w, rng);
  randomize(w.squeeze_b, rng);
  if (with_conv) {
    randomize(w.dwconv_w, rng);
    randomize(w.dwconv_b, rng);
  }
  return w;
}

inline MsaWeights<double> random_msa(std::size_t d, std::mt19937_64& rng) {
  MsaWeights<double> w{{"qkv.weight", TD({d, 3 * d})}, {"qkv.bias", TD({3 * d})},
                       {"proj.weight", TD({d, d})}, {"proj.bias", TD({d})}};
  randomize(w.qkv_w, rng);
  randomize(w.qkv_b, rng);
  randomize(w.proj_w, rng);
  randomize(w.proj_b, rng);
  return w;
}

inline BlockWeights<double> random_block(std::size_t d, std::mt19937_64& rng) {
  BlockWeights<double> b{{"ln1.weight", TD({d}, 1.0)}, {"ln1.bias", TD({d})}, random_msa(d, rng),
                         {"ln2.weight", TD({d}, 1.0)}, {"ln2.bias", TD({d})}, random_ffn(d, rng)};
  randomize(b.ln1_g, rng);
  randomize(b.ln2_b, rng);
  return b;
}

/// Squeeze(act(act(expand(z)))) computed from the primitives directly.
inline TD double_activation_ffn(const TD& z, const FfnWeights<double>& w, const ActivationFn& act) {
  return linear(act.forward(act.forward(linear(z, w.expand_w.value, w.expand_b.value))), w.squeeze_w.value,
                w.squeeze_b.value);
}

inline double max_abs_diff(const TD& a, const TD& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// A fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("budgetvit_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace budgetvit::testing

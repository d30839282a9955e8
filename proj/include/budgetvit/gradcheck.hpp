// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference certification of analytic gradients. Each
// registered operation is reduced to the scalar L = sum(r * f(inputs)) with a
// fixed random projection r, so the analytic side is backward(inputs, r).

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "budgetvit/tensor.hpp"

namespace budgetvit {

struct GradCheckReport {
  std::string op_name;
  double max_rel_err = 0.0;
  bool passed = false;
  int probe_count = 0;
};

struct DiffOp {
  using Inputs = std::vector<Tensor<double>>;

  std::string name;
  Inputs inputs;
  // Inputs whose gradient is checked; others (e.g. constants) are held fixed.
  std::vector<bool> probe;
  std::function<Tensor<double>(const Inputs&)> forward;
  // Gradient for every input given the upstream gradient; entries for
  // unprobed inputs may be empty.
  std::function<Inputs(const Inputs&, const Tensor<double>&)> backward;
  // Rejects coordinates whose finite-difference stencil straddles a kink.
  std::function<bool(std::size_t input, double value, double step)> admissible;
  double tolerance = 1e-4;
};

struct GradCheckOptions {
  std::uint64_t seed = 20240607;
  std::size_t full_sweep_below = 512;
  std::size_t probes_per_tensor = 64;
};

/// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-3).
GradCheckReport grad_check(const DiffOp& op, double tolerance, const GradCheckOptions& options = {});

/// Every differentiable primitive, on small random double-precision inputs.
std::vector<DiffOp> primitive_ops(std::uint64_t seed = 7);

/// Sub-layers and the tiny full model (D=8, L=1, 2 heads, S=32, P=16).
std::vector<DiffOp> model_ops(std::uint64_t seed = 7);

/// Scales the backward of the named op so it must fail certification.
void corrupt_backward(std::vector<DiffOp>& ops, const std::set<std::string>& names, double factor = 1.05);

std::vector<GradCheckReport> run_grad_checks(const std::vector<DiffOp>& ops, const GradCheckOptions& options = {});

/// One row per op: op_name,max_rel_err,passed
void write_gradcheck_csv(std::ostream& os, const std::vector<GradCheckReport>& reports);

}  // namespace budgetvit

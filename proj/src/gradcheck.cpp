// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "budgetvit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

#include "budgetvit/numerics.hpp"

namespace budgetvit {
namespace {

using Inputs = DiffOp::Inputs;

double projected(const Tensor<double>& y, const Tensor<double>& r) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

bool away_from_kinks(double x, double step, std::initializer_list<double> kinks) {
  for (double k : kinks) {
    if (std::abs(x - k) <= 2.0 * step) return false;
  }
  return true;
}

}  // namespace

GradCheckReport grad_check(const DiffOp& op, double tolerance, const GradCheckOptions& options) {
  GradCheckReport report;
  report.op_name = op.name;
  std::mt19937_64 rng(options.seed);

  Inputs inputs = op.inputs;
  const Tensor<double> y0 = op.forward(inputs);
  Tensor<double> r = random_tensor(y0.shape(), rng);
  const Inputs grads = op.backward(inputs, r);

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (k < op.probe.size() && !op.probe[k]) continue;
    if (grads.at(k).shape() != inputs[k].shape()) {
      report.max_rel_err = std::numeric_limits<double>::infinity();
      report.passed = false;
      return report;
    }
    if (!all_finite(grads[k])) {
      report.max_rel_err = std::numeric_limits<double>::infinity();
      report.passed = false;
      return report;
    }
    const std::size_t n = inputs[k].size();
    std::vector<std::size_t> coords;
    if (n < options.full_sweep_below) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t i = 0; i < options.probes_per_tensor; ++i) coords.push_back(pick(rng));
    }
    for (std::size_t i : coords) {
      const double x = inputs[k][i];
      const double h = 1e-5 * std::max(1.0, std::abs(x));
      if (op.admissible && !op.admissible(k, x, h)) continue;
      inputs[k][i] = x + h;
      const double up = projected(op.forward(inputs), r);
      inputs[k][i] = x - h;
      const double down = projected(op.forward(inputs), r);
      inputs[k][i] = x;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[k][i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
      const double rel = std::abs(analytic - numeric) / denom;
      report.max_rel_err = std::max(report.max_rel_err, std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity());
      ++report.probe_count;
    }
  }
  report.passed = report.max_rel_err < tolerance;
  return report;
}

std::vector<DiffOp> primitive_ops(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<DiffOp> ops;

  {
    DiffOp op;
    op.name = "linear";
    op.inputs = {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng)};
    op.forward = [](const Inputs& in) { return linear(in[0], in[1], in[2]); };
    op.backward = [](const Inputs& in, const Tensor<double>& dy) {
      Tensor<double> dw(in[1].shape()), db(in[2].shape());
      Tensor<double> dx = linear_backward(in[0], in[1], dy, dw, db);
      return Inputs{dx, dw, db};
    };
    ops.push_back(std::move(op));
  }
  {
    DiffOp op;
    op.name = "layernorm";
    op.inputs = {random_tensor({3, 6}, rng, -2.0, 2.0), random_tensor({6}, rng), random_tensor({6}, rng)};
    op.forward = [](const Inputs& in) { return layernorm(in[0], in[1], in[2], 1e-5); };
    op.backward = [](const Inputs& in, const Tensor<double>& dy) {
      LayerNormCache<double> cache;
      layernorm(in[0], in[1], in[2], 1e-5, &cache);
      Tensor<double> dg(in[1].shape()), db(in[2].shape());
      Tensor<double> dx = layernorm_backward(in[0], in[1], cache, dy, dg, db);
      return Inputs{dx, dg, db};
    };
    ops.push_back(std::move(op));
  }
  {
    DiffOp op;
    op.name = "softmax";
    op.inputs = {random_tensor({3, 5}, rng, -3.0, 3.0)};
    op.forward = [](const Inputs& in) { return softmax(in[0]); };
    op.backward = [](const Inputs& in, const Tensor<double>& dy) { return Inputs{softmax_backward(softmax(in[0]), dy)}; };
    ops.push_back(std::move(op));
  }
  {
    DiffOp op;
    op.name = "h_swish";
    Tensor<double> x = random_tensor({48}, rng, -5.0, 5.0);
    // Exact kinks are part of the input and must be excluded from probing.
    x[0] = -3.0;
    x[1] = 3.0;
    op.inputs = {x};
    op.forward = [](const Inputs& in) { return h_swish(in[0]); };
    op.backward = [](const Inputs& in, const Tensor<double>& dy) { return Inputs{h_swish_backward(in[0], dy)}; };
    op.admissible = [](std::size_t, double v, double h) { return away_from_kinks(v, h, {-3.0, 3.0}); };
    ops.push_back(std::move(op));
  }
  for (GeluMode mode : {GeluMode::Erf, GeluMode::Tanh}) {
    DiffOp op;
    op.name = mode == GeluMode::Erf ? "gelu_erf" : "gelu_tanh";
    op.inputs = {random_tensor({24}, rng, -4.0, 4.0)};
    op.forward = [mode](const Inputs& in) { return gelu(in[0], mode); };
    op.backward = [mode](const Inputs& in, const Tensor<double>& dy) { return Inputs{gelu_backward(in[0], dy, mode)}; };
    ops.push_back(std::move(op));
  }
  {
    DiffOp op;
    op.name = "depthwise_conv3x3";
    op.inputs = {random_tensor({3, 4, 5}, rng), random_tensor({3, 3, 3}, rng), random_tensor({3}, rng)};
    op.forward = [](const Inputs& in) { return depthwise_conv3x3(in[0], in[1], in[2]); };
    op.backward = [](const Inputs& in, const Tensor<double>& dy) {
      Tensor<double> dk(in[1].shape()), db(in[2].shape());
      Tensor<double> dx = depthwise_conv3x3_backward(in[0], in[1], dy, dk, db);
      return Inputs{dx, dk, db};
    };
    ops.push_back(std::move(op));
  }
  for (bool align : {true, false}) {
    DiffOp op;
    op.name = align ? "bilinear_resize_align_corners" : "bilinear_resize";
    op.inputs = {random_tensor({2, 3, 4}, rng)};
    const int oh = align ? 5 : 2, ow = align ? 7 : 3;
    op.forward = [=](const Inputs& in) { return bilinear_resize(in[0], oh, ow, align); };
    op.backward = [=](const Inputs& in, const Tensor<double>& dy) {
      return Inputs{bilinear_resize_backward(in[0].shape(), dy, align)};
    };
    ops.push_back(std::move(op));
  }
  {
    DiffOp op;
    op.name = "cross_entropy_ls";
    op.inputs = {random_tensor({4, 6}, rng, -2.0, 2.0)};
    const std::vector<int> labels{0, 3, 5, 3};
    op.forward = [labels](const Inputs& in) { return Tensor<double>({1}, {cross_entropy_ls(in[0], labels, 0.1)}); };
    op.backward = [labels](const Inputs& in, const Tensor<double>& dy) {
      Tensor<double> g;
      cross_entropy_ls(in[0], labels, 0.1, &g);
      for (auto& v : g.values()) v *= dy[0];
      return Inputs{g};
    };
    ops.push_back(std::move(op));
  }
  return ops;
}

void corrupt_backward(std::vector<DiffOp>& ops, const std::set<std::string>& names, double factor) {
  for (auto& op : ops) {
    if (!names.count(op.name)) continue;
    auto inner = op.backward;
    op.backward = [inner, factor](const Inputs& in, const Tensor<double>& dy) {
      Inputs g = inner(in, dy);
      for (auto& t : g) {
        for (auto& v : t.values()) v *= factor;
      }
      return g;
    };
  }
}

std::vector<GradCheckReport> run_grad_checks(const std::vector<DiffOp>& ops, const GradCheckOptions& options) {
  std::vector<GradCheckReport> out;
  out.reserve(ops.size());
  for (const auto& op : ops) out.push_back(grad_check(op, op.tolerance, options));
  return out;
}

void write_gradcheck_csv(std::ostream& os, const std::vector<GradCheckReport>& reports) {
  os << "op_name,max_rel_err,passed\n";
  for (const auto& r : reports) {
    os << r.op_name << ',' << std::setprecision(6) << std::scientific << r.max_rel_err << std::defaultfloat << ','
       << (r.passed ? "true" : "false") << '\n';
  }
}

}  // namespace budgetvit

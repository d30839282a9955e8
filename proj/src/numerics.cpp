// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "budgetvit/numerics.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace budgetvit {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using ConstMapRow = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <typename T>
using MapRow = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": shape " + shape_str(a) + " vs " + shape_str(b));
}

void check_linear_shapes(const Shape& x, const Shape& w, const Shape& b) {
  if (w.size() != 2 || x.empty() || x.back() != w[0] || b.size() != 1 || b[0] != w[1]) {
    throw DimensionError("linear: input " + shape_str(x) + " incompatible with weight " + shape_str(w) +
                         " and bias " + shape_str(b));
  }
}

void check_conv_shapes(const Shape& x, const Shape& k, const Shape& b) {
  if (x.size() != 3) throw DimensionError("depthwise_conv3x3: input must be [C,H,W], got " + shape_str(x));
  if (x[1] == 0 || x[2] == 0) throw DimensionError("depthwise_conv3x3: empty spatial extent " + shape_str(x));
  if (k.size() != 3 || k[0] != x[0] || k[1] != 3 || k[2] != 3 || b.size() != 1 || b[0] != x[0]) {
    throw DimensionError("depthwise_conv3x3: input " + shape_str(x) + " incompatible with kernel " + shape_str(k) +
                         " and bias " + shape_str(b));
  }
}

// Source index pair and weight for one output coordinate.
struct Tap {
  std::size_t i0;
  std::size_t i1;
  double w1;
};

std::vector<Tap> resize_taps(std::size_t in, std::size_t out, bool align_corners) {
  std::vector<Tap> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src;
    if (align_corners) {
      src = out > 1 ? static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
    } else {
      src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
      src = std::max(src, 0.0);
    }
    auto i0 = static_cast<std::size_t>(std::floor(src));
    i0 = std::min(i0, in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    double w1 = src - static_cast<double>(i0);
    if (i1 == i0) w1 = 0.0;
    taps[o] = {i0, i1, w1};
  }
  return taps;
}

}  // namespace

// ---- linear ---------------------------------------------------------------

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  check_linear_shapes(x.shape(), weight.shape(), bias.shape());
  const auto din = static_cast<Eigen::Index>(weight.dim(0));
  const auto dout = static_cast<Eigen::Index>(weight.dim(1));
  const auto rows = static_cast<Eigen::Index>(x.outer());
  Shape out_shape = x.shape();
  out_shape.back() = weight.dim(1);
  Tensor<T> y(out_shape);
  MapMat<T> ym(y.data(), rows, dout);
  ym.noalias() = ConstMapMat<T>(x.data(), rows, din) * ConstMapMat<T>(weight.data(), din, dout);
  ym.rowwise() += ConstMapRow<T>(bias.data(), dout);
  return y;
}

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>& dweight,
                          Tensor<T>& dbias) {
  check_linear_shapes(x.shape(), weight.shape(), dbias.shape());
  require_same_shape(weight.shape(), dweight.shape(), "linear_backward weight grad");
  const auto din = static_cast<Eigen::Index>(weight.dim(0));
  const auto dout = static_cast<Eigen::Index>(weight.dim(1));
  const auto rows = static_cast<Eigen::Index>(x.outer());
  if (dy.outer() != x.outer() || dy.inner() != weight.dim(1)) {
    throw DimensionError("linear_backward: upstream gradient " + shape_str(dy.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  ConstMapMat<T> xm(x.data(), rows, din);
  ConstMapMat<T> dym(dy.data(), rows, dout);
  MapMat<T>(dweight.data(), din, dout).noalias() += xm.transpose() * dym;
  MapRow<T>(dbias.data(), dout) += dym.colwise().sum();
  Tensor<T> dx(x.shape());
  MapMat<T>(dx.data(), rows, din).noalias() = dym * ConstMapMat<T>(weight.data(), din, dout).transpose();
  return dx;
}

template <typename T>
void linear_backward_weights(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dweight, Tensor<T>& dbias) {
  check_linear_shapes(x.shape(), dweight.shape(), dbias.shape());
  const auto din = static_cast<Eigen::Index>(dweight.dim(0));
  const auto dout = static_cast<Eigen::Index>(dweight.dim(1));
  const auto rows = static_cast<Eigen::Index>(x.outer());
  if (dy.outer() != x.outer() || dy.inner() != dweight.dim(1)) {
    throw DimensionError("linear_backward: upstream gradient " + shape_str(dy.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  ConstMapMat<T> dym(dy.data(), rows, dout);
  MapMat<T>(dweight.data(), din, dout).noalias() += ConstMapMat<T>(x.data(), rows, din).transpose() * dym;
  MapRow<T>(dbias.data(), dout) += dym.colwise().sum();
}

// ---- layernorm ------------------------------------------------------------

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                    LayerNormCache<T>* cache) {
  if (x.rank() == 0 || x.inner() == 0) throw DimensionError("layernorm: empty normalized axis");
  const std::size_t d = x.inner();
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layernorm: input " + shape_str(x.shape()) + " vs gamma " + shape_str(gamma.shape()) +
                         " and beta " + shape_str(beta.shape()));
  }
  if (!(eps > T(0))) throw ArgumentError("layernorm: eps must be positive");
  const std::size_t rows = x.outer();
  Tensor<T> y(x.shape());
  if (cache) {
    cache->mean.assign(rows, T(0));
    cache->rstd.assign(rows, T(0));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * d;
    T* yr = y.data() + r * d;
    T mean = 0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<T>(d);
    const T rstd = T(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) yr[i] = gamma[i] * ((xr[i] - mean) * rstd) + beta[i];
    if (cache) {
      cache->mean[r] = mean;
      cache->rstd[r] = rstd;
    }
  }
  return y;
}

template <typename T>
Tensor<T> layernorm_backward(const Tensor<T>& x, const Tensor<T>& gamma, const LayerNormCache<T>& cache,
                             const Tensor<T>& dy, Tensor<T>& dgamma, Tensor<T>& dbeta) {
  const std::size_t d = x.inner();
  const std::size_t rows = x.outer();
  require_same_shape(x.shape(), dy.shape(), "layernorm_backward");
  if (cache.mean.size() != rows) throw DimensionError("layernorm_backward: cache does not match input");
  Tensor<T> dx(x.shape());
  std::vector<T> xhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * d;
    const T* dyr = dy.data() + r * d;
    T* dxr = dx.data() + r * d;
    const T mean = cache.mean[r];
    const T rstd = cache.rstd[r];
    T sum_g = 0;
    T sum_gx = 0;
    for (std::size_t i = 0; i < d; ++i) {
      xhat[i] = (xr[i] - mean) * rstd;
      const T g = dyr[i] * gamma[i];
      sum_g += g;
      sum_gx += g * xhat[i];
      dgamma[i] += dyr[i] * xhat[i];
      dbeta[i] += dyr[i];
    }
    sum_g /= static_cast<T>(d);
    sum_gx /= static_cast<T>(d);
    for (std::size_t i = 0; i < d; ++i) dxr[i] = rstd * (dyr[i] * gamma[i] - sum_g - xhat[i] * sum_gx);
  }
  return dx;
}

// ---- softmax --------------------------------------------------------------

template <typename T>
void softmax_rows(std::span<T> data, std::size_t row_len) {
  for (std::size_t off = 0; off < data.size(); off += row_len) {
    T* r = data.data() + off;
    T mx = r[0];
    for (std::size_t i = 1; i < row_len; ++i) mx = std::max(mx, r[i]);
    T sum = 0;
    for (std::size_t i = 0; i < row_len; ++i) {
      r[i] = std::exp(r[i] - mx);
      sum += r[i];
    }
    const T inv = T(1) / sum;
    for (std::size_t i = 0; i < row_len; ++i) r[i] *= inv;
  }
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.rank() == 0 || x.inner() == 0) throw DimensionError("softmax: empty axis");
  Tensor<T> y = x;
  softmax_rows<T>(y.span(), y.inner());
  return y;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  require_same_shape(y.shape(), dy.shape(), "softmax_backward");
  const std::size_t n = y.inner();
  Tensor<T> dx(y.shape());
  for (std::size_t off = 0; off < y.size(); off += n) {
    T dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += y[off + i] * dy[off + i];
    for (std::size_t i = 0; i < n; ++i) dx[off + i] = y[off + i] * (dy[off + i] - dot);
  }
  return dx;
}

// ---- activations ----------------------------------------------------------

template <typename T>
Tensor<T> h_swish(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = h_swish(x[i]);
  return y;
}

template <typename T>
Tensor<T> h_swish_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  require_same_shape(x.shape(), dy.shape(), "h_swish_backward");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * h_swish_grad(x[i]);
  return dx;
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kSqrt2OverPi = 0.79788456080286535588;
constexpr double kTanhCoeff = 0.044715;
}  // namespace

template <typename T>
T gelu(T x, GeluMode mode) {
  if (mode == GeluMode::Erf) return T(0.5) * x * (T(1) + std::erf(x * T(kInvSqrt2)));
  const T inner = T(kSqrt2OverPi) * (x + T(kTanhCoeff) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(inner));
}

template <typename T>
T gelu_grad(T x, GeluMode mode) {
  if (mode == GeluMode::Erf) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(kInvSqrt2)));
    const T pdf = T(kInvSqrt2Pi) * std::exp(T(-0.5) * x * x);
    return cdf + x * pdf;
  }
  const T inner = T(kSqrt2OverPi) * (x + T(kTanhCoeff) * x * x * x);
  const T th = std::tanh(inner);
  const T dinner = T(kSqrt2OverPi) * (T(1) + T(3 * kTanhCoeff) * x * x);
  return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * dinner;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x, GeluMode mode) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i], mode);
  return y;
}

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& dy, GeluMode mode) {
  require_same_shape(x.shape(), dy.shape(), "gelu_backward");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * gelu_grad(x[i], mode);
  return dx;
}

// ---- depthwise 3x3 convolution ---------------------------------------------

template <typename T>
Tensor<T> depthwise_conv3x3(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
  check_conv_shapes(x.shape(), kernel.shape(), bias.shape());
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor<T> y(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* xc = x.data() + ch * h * w;
    const T* k = kernel.data() + ch * 9;
    T* yc = y.data() + ch * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        T acc = bias[ch];
        for (int di = -1; di <= 1; ++di) {
          const auto ii = static_cast<std::ptrdiff_t>(i) + di;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
          for (int dj = -1; dj <= 1; ++dj) {
            const auto jj = static_cast<std::ptrdiff_t>(j) + dj;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
            acc += k[(di + 1) * 3 + (dj + 1)] * xc[ii * static_cast<std::ptrdiff_t>(w) + jj];
          }
        }
        yc[i * w + j] = acc;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> depthwise_conv3x3_backward(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& dy,
                                     Tensor<T>& dkernel, Tensor<T>& dbias) {
  check_conv_shapes(x.shape(), kernel.shape(), dbias.shape());
  require_same_shape(x.shape(), dy.shape(), "depthwise_conv3x3_backward");
  require_same_shape(kernel.shape(), dkernel.shape(), "depthwise_conv3x3_backward kernel grad");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto sh = static_cast<std::ptrdiff_t>(h), sw = static_cast<std::ptrdiff_t>(w);
  Tensor<T> dx(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* xc = x.data() + ch * h * w;
    const T* dyc = dy.data() + ch * h * w;
    const T* k = kernel.data() + ch * 9;
    T* dk = dkernel.data() + ch * 9;
    T* dxc = dx.data() + ch * h * w;
    T db = 0;
    for (std::ptrdiff_t i = 0; i < sh; ++i) {
      for (std::ptrdiff_t j = 0; j < sw; ++j) {
        const T g = dyc[i * sw + j];
        db += g;
        for (int di = -1; di <= 1; ++di) {
          const std::ptrdiff_t ii = i + di;
          if (ii < 0 || ii >= sh) continue;
          for (int dj = -1; dj <= 1; ++dj) {
            const std::ptrdiff_t jj = j + dj;
            if (jj < 0 || jj >= sw) continue;
            const int tap = (di + 1) * 3 + (dj + 1);
            dk[tap] += g * xc[ii * sw + jj];
            dxc[ii * sw + jj] += g * k[tap];
          }
        }
      }
    }
    dbias[ch] += db;
  }
  return dx;
}

// ---- bilinear resize --------------------------------------------------------

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w, bool align_corners) {
  if (out_h < 1 || out_w < 1) {
    throw ArgumentError("bilinear_resize: target extents must be positive, got " + std::to_string(out_h) + "x" +
                        std::to_string(out_w));
  }
  if (x.rank() != 3 || x.dim(1) == 0 || x.dim(2) == 0) {
    throw DimensionError("bilinear_resize: input must be non-empty [C,H,W], got " + shape_str(x.shape()));
  }
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto oh = static_cast<std::size_t>(out_h), ow = static_cast<std::size_t>(out_w);
  if (oh == h && ow == w) return x;
  const auto ty = resize_taps(h, oh, align_corners);
  const auto tx = resize_taps(w, ow, align_corners);
  Tensor<T> y({c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* xc = x.data() + ch * h * w;
    T* yc = y.data() + ch * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const T wy1 = static_cast<T>(ty[i].w1), wy0 = T(1) - wy1;
      const T* r0 = xc + ty[i].i0 * w;
      const T* r1 = xc + ty[i].i1 * w;
      for (std::size_t j = 0; j < ow; ++j) {
        const T wx1 = static_cast<T>(tx[j].w1), wx0 = T(1) - wx1;
        const T top = wx0 * r0[tx[j].i0] + wx1 * r0[tx[j].i1];
        const T bot = wx0 * r1[tx[j].i0] + wx1 * r1[tx[j].i1];
        yc[i * ow + j] = wy0 * top + wy1 * bot;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> bilinear_resize_backward(const Shape& input_shape, const Tensor<T>& dy, bool align_corners) {
  if (input_shape.size() != 3 || dy.rank() != 3 || dy.dim(0) != input_shape[0]) {
    throw DimensionError("bilinear_resize_backward: input " + shape_str(input_shape) + " vs gradient " +
                         shape_str(dy.shape()));
  }
  const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
  const std::size_t oh = dy.dim(1), ow = dy.dim(2);
  if (oh == h && ow == w) return dy;
  const auto ty = resize_taps(h, oh, align_corners);
  const auto tx = resize_taps(w, ow, align_corners);
  Tensor<T> dx(input_shape);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* g = dy.data() + ch * oh * ow;
    T* dxc = dx.data() + ch * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      const T wy1 = static_cast<T>(ty[i].w1), wy0 = T(1) - wy1;
      T* r0 = dxc + ty[i].i0 * w;
      T* r1 = dxc + ty[i].i1 * w;
      for (std::size_t j = 0; j < ow; ++j) {
        const T wx1 = static_cast<T>(tx[j].w1), wx0 = T(1) - wx1;
        const T v = g[i * ow + j];
        r0[tx[j].i0] += wy0 * wx0 * v;
        r0[tx[j].i1] += wy0 * wx1 * v;
        r1[tx[j].i0] += wy1 * wx0 * v;
        r1[tx[j].i1] += wy1 * wx1 * v;
      }
    }
  }
  return dx;
}

// ---- loss -----------------------------------------------------------------

template <typename T>
T cross_entropy_ls(const Tensor<T>& logits, std::span<const int> labels, double epsilon, Tensor<T>* grad) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy_ls: logits must be [B,C], got " + shape_str(logits.shape()));
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (batch == 0 || classes == 0) throw DimensionError("cross_entropy_ls: empty logits " + shape_str(logits.shape()));
  if (labels.size() != batch) {
    throw DimensionError("cross_entropy_ls: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(batch));
  }
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ArgumentError("cross_entropy_ls: epsilon must be in [0, 1)");
  const T eps = static_cast<T>(epsilon);
  const T off = eps / static_cast<T>(classes);
  const T on = T(1) - eps + off;
  if (grad) *grad = Tensor<T>(logits.shape());
  T total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ArgumentError("cross_entropy_ls: label " + std::to_string(label) + " outside [0, " +
                          std::to_string(classes) + ")");
    }
    const T* z = logits.data() + b * classes;
    const std::size_t am = static_cast<std::size_t>(std::max_element(z, z + classes) - z);
    const T mx = z[am];
    // The arg-max term contributes exactly 1 to the partition sum.
    T rest = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (c != am) rest += std::exp(z[c] - mx);
    }
    const T log_rest = std::log1p(rest);
    const T lse = mx + log_rest;
    // -log p_c = (mx - z_c) + log1p(rest); exact cancellation for the arg-max.
    T loss = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const T q = c == static_cast<std::size_t>(label) ? on : off;
      loss += q * ((mx - z[c]) + log_rest);
    }
    total += loss;
    if (grad) {
      T* g = grad->data() + b * classes;
      const T inv_b = T(1) / static_cast<T>(batch);
      for (std::size_t c = 0; c < classes; ++c) {
        const T q = c == static_cast<std::size_t>(label) ? on : off;
        g[c] = (std::exp(z[c] - lse) - q) * inv_b;
      }
    }
  }
  return total / static_cast<T>(batch);
}

// ---- optimizer ------------------------------------------------------------

template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, const AdamWHyper& hp,
                std::int64_t t) {
  if (t < 1) throw ArgumentError("adamw_step: step index must be >= 1");
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw DimensionError("adamw_step: params/grads/moments lengths differ (" + std::to_string(params.size()) + ", " +
                         std::to_string(grads.size()) + ", " + std::to_string(m.size()) + ", " +
                         std::to_string(v.size()) + ")");
  }
  const T lr = static_cast<T>(hp.lr);
  const T b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2);
  const T decay = static_cast<T>(1.0 - hp.lr * hp.weight_decay);
  const T bc1 = static_cast<T>(1.0 - std::pow(hp.beta1, static_cast<double>(t)));
  const T bc2 = static_cast<T>(1.0 - std::pow(hp.beta2, static_cast<double>(t)));
  const T eps = static_cast<T>(hp.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    params[i] = params[i] * decay - lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <typename T>
void adamw_step(Tensor<T>& params, const Tensor<T>& grads, Tensor<T>& m, Tensor<T>& v, const AdamWHyper& hp,
                std::int64_t t) {
  if (grads.shape() != params.shape() || m.shape() != params.shape() || v.shape() != params.shape()) {
    throw DimensionError("adamw_step: param " + shape_str(params.shape()) + ", grad " + shape_str(grads.shape()) +
                         ", moments " + shape_str(m.shape()) + "/" + shape_str(v.shape()));
  }
  adamw_step<T>(params.span(), grads.span(), m.span(), v.span(), hp, t);
}

#define BUDGETVIT_INSTANTIATE(T)                                                                                   \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> linear_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&); \
  template void linear_backward_weights(const Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&);              \
  template Tensor<T> layernorm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T, LayerNormCache<T>*);       \
  template Tensor<T> layernorm_backward(const Tensor<T>&, const Tensor<T>&, const LayerNormCache<T>&,              \
                                        const Tensor<T>&, Tensor<T>&, Tensor<T>&);                                 \
  template void softmax_rows(std::span<T>, std::size_t);                                                           \
  template Tensor<T> softmax(const Tensor<T>&);                                                                    \
  template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> h_swish(const Tensor<T>&);                                                                    \
  template Tensor<T> h_swish_backward(const Tensor<T>&, const Tensor<T>&);                                         \
  template T gelu(T, GeluMode);                                                                                    \
  template T gelu_grad(T, GeluMode);                                                                               \
  template Tensor<T> gelu(const Tensor<T>&, GeluMode);                                                             \
  template Tensor<T> gelu_backward(const Tensor<T>&, const Tensor<T>&, GeluMode);                                  \
  template Tensor<T> depthwise_conv3x3(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> depthwise_conv3x3_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,  \
                                                Tensor<T>&);                                                       \
  template Tensor<T> bilinear_resize(const Tensor<T>&, int, int, bool);                                            \
  template Tensor<T> bilinear_resize_backward(const Shape&, const Tensor<T>&, bool);                               \
  template T cross_entropy_ls(const Tensor<T>&, std::span<const int>, double, Tensor<T>*);                         \
  template void adamw_step(std::span<T>, std::span<const T>, std::span<T>, std::span<T>, const AdamWHyper&,        \
                           std::int64_t);                                                                          \
  template void adamw_step(Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&, const AdamWHyper&, std::int64_t);

BUDGETVIT_INSTANTIATE(float)
BUDGETVIT_INSTANTIATE(double)

#undef BUDGETVIT_INSTANTIATE

}  // namespace budgetvit

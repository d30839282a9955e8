// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Every forward has a matching *_backward that
// returns the input gradient and accumulates (+=) parameter gradients into
// caller-provided tensors, so the same code path serves training and the
// finite-difference certification in gradcheck.hpp.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "budgetvit/tensor.hpp"

namespace budgetvit {

enum class GeluMode { Erf, Tanh };

// ---- linear ---------------------------------------------------------------

/// out[..., j] = sum_i x[..., i] * W[i, j] + b[j]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>& dweight,
                          Tensor<T>& dbias);

/// Parameter half of linear_backward, for inputs that need no gradient.
template <typename T>
void linear_backward_weights(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dweight, Tensor<T>& dbias);

// ---- layernorm ------------------------------------------------------------

template <typename T>
struct LayerNormCache {
  std::vector<T> mean;
  std::vector<T> rstd;
};

/// Normalizes every trailing-axis slice with the biased variance.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                    LayerNormCache<T>* cache = nullptr);

template <typename T>
Tensor<T> layernorm_backward(const Tensor<T>& x, const Tensor<T>& gamma, const LayerNormCache<T>& cache,
                             const Tensor<T>& dy, Tensor<T>& dgamma, Tensor<T>& dbeta);

// ---- softmax --------------------------------------------------------------

template <typename T>
void softmax_rows(std::span<T> data, std::size_t row_len);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

/// Backward from the softmax output y.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy);

// ---- activations ----------------------------------------------------------

template <typename T>
inline T h_swish(T x) {
  const T r = x + T(3);
  const T c = r < T(0) ? T(0) : (r > T(6) ? T(6) : r);
  return x * c / T(6);
}

// Clamp kinks take subgradient 0 for the clamp factor.
template <typename T>
inline T h_swish_grad(T x) {
  if (x <= T(-3)) return T(0);
  if (x >= T(3)) return T(1);
  return (T(2) * x + T(3)) / T(6);
}

template <typename T>
Tensor<T> h_swish(const Tensor<T>& x);
template <typename T>
Tensor<T> h_swish_backward(const Tensor<T>& x, const Tensor<T>& dy);

template <typename T>
T gelu(T x, GeluMode mode);
template <typename T>
T gelu_grad(T x, GeluMode mode);

template <typename T>
Tensor<T> gelu(const Tensor<T>& x, GeluMode mode = GeluMode::Erf);
template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& dy, GeluMode mode = GeluMode::Erf);

// ---- depthwise 3x3 convolution ---------------------------------------------

/// Per-channel cross-correlation, stride 1, zero padding 1: [C,H,W] -> [C,H,W].
template <typename T>
Tensor<T> depthwise_conv3x3(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias);

template <typename T>
Tensor<T> depthwise_conv3x3_backward(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& dy,
                                     Tensor<T>& dkernel, Tensor<T>& dbias);

// ---- bilinear resize --------------------------------------------------------

/// Separable bilinear interpolation of [C,H,W] to [C,out_h,out_w]. With
/// align_corners the corner samples map onto each other exactly; without it
/// pixel centers are aligned and source coordinates below 0 are clamped.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w, bool align_corners);

/// Adjoint of bilinear_resize.
template <typename T>
Tensor<T> bilinear_resize_backward(const Shape& input_shape, const Tensor<T>& dy, bool align_corners);

// ---- loss -----------------------------------------------------------------

/// Mean over the batch of the label-smoothed cross entropy. When grad is
/// non-null it receives d(loss)/d(logits).
template <typename T>
T cross_entropy_ls(const Tensor<T>& logits, std::span<const int> labels, double epsilon, Tensor<T>* grad = nullptr);

// ---- optimizer ------------------------------------------------------------

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// One decoupled-weight-decay Adam update at step t >= 1. The moments are
/// updated in place.
template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, const AdamWHyper& hp,
                std::int64_t t);

template <typename T>
void adamw_step(Tensor<T>& params, const Tensor<T>& grads, Tensor<T>& m, Tensor<T>& v, const AdamWHyper& hp,
                std::int64_t t);

}  // namespace budgetvit

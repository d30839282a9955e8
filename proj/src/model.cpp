// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "budgetvit/model.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <random>

namespace budgetvit {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

struct SeqDims {
  std::size_t batch;
  std::size_t tokens;
  std::size_t width;
};

template <typename T>
SeqDims seq_dims(const Tensor<T>& z, const char* op) {
  if (z.rank() < 2 || z.inner() == 0 || z.dim(z.rank() - 2) == 0) {
    throw DimensionError(std::string(op) + ": expected [..., T, D] tokens, got " + shape_str(z.shape()));
  }
  const std::size_t width = z.inner();
  const std::size_t tokens = z.dim(z.rank() - 2);
  return {z.size() / (width * tokens), tokens, width};
}

// Depthwise 3x3 conv applied in place on token rows [G*G, C]: the channel
// axis stays innermost so every tap is a contiguous multiply-add. The kernel
// is passed transposed as [9, C].
template <typename T>
void conv_token_rows(const T* x, T* y, std::size_t g, std::size_t c, const T* kt, const T* bias) {
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      T* out = y + (i * g + j) * c;
      std::copy(bias, bias + c, out);
      for (int di = -1; di <= 1; ++di) {
        const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i) + di;
        if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g)) continue;
        for (int dj = -1; dj <= 1; ++dj) {
          const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j) + dj;
          if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g)) continue;
          const T* in = x + (static_cast<std::size_t>(ii) * g + static_cast<std::size_t>(jj)) * c;
          const T* k = kt + static_cast<std::size_t>((di + 1) * 3 + (dj + 1)) * c;
          for (std::size_t ch = 0; ch < c; ++ch) out[ch] += k[ch] * in[ch];
        }
      }
    }
  }
}

// Backward of conv_token_rows. dx is overwritten; dkt [9, C] and dbias [C]
// accumulate.
template <typename T>
void conv_token_rows_backward(const T* x, const T* dy, T* dx, std::size_t g, std::size_t c, const T* kt, T* dkt,
                              T* dbias) {
  std::fill(dx, dx + g * g * c, T(0));
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      const T* grad = dy + (i * g + j) * c;
      for (std::size_t ch = 0; ch < c; ++ch) dbias[ch] += grad[ch];
      for (int di = -1; di <= 1; ++di) {
        const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i) + di;
        if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g)) continue;
        for (int dj = -1; dj <= 1; ++dj) {
          const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j) + dj;
          if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g)) continue;
          const std::size_t at = (static_cast<std::size_t>(ii) * g + static_cast<std::size_t>(jj)) * c;
          const std::size_t tap = static_cast<std::size_t>((di + 1) * 3 + (dj + 1)) * c;
          const T* in = x + at;
          T* din = dx + at;
          const T* k = kt + tap;
          T* dk = dkt + tap;
          for (std::size_t ch = 0; ch < c; ++ch) {
            dk[ch] += grad[ch] * in[ch];
            din[ch] += grad[ch] * k[ch];
          }
        }
      }
    }
  }
}

// [C, 3, 3] -> [9, C].
template <typename T>
std::vector<T> transpose_kernel(const Tensor<T>& kernel) {
  const std::size_t c = kernel.dim(0);
  std::vector<T> kt(9 * c);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t tap = 0; tap < 9; ++tap) kt[tap * c + ch] = kernel[ch * 9 + tap];
  return kt;
}

template <typename T>
T truncated_normal(std::mt19937_64& rng, double std) {
  std::normal_distribution<double> dist(0.0, 1.0);
  double v;
  do {
    v = dist(rng);
  } while (v < -2.0 || v > 2.0);
  return static_cast<T>(v * std);
}

template <typename T>
Tensor<T> trunc_normal_tensor(Shape shape, std::mt19937_64& rng, double std = 0.02) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = truncated_normal<T>(rng, std);
  return t;
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---- config ---------------------------------------------------------------

std::vector<std::string> ModelConfig::validate() const {
  std::vector<std::string> v;
  if (embed_dim < 1) v.emplace_back("model.embed_dim: must be >= 1");
  if (depth < 0) v.emplace_back("model.depth: must be >= 0");
  if (num_heads < 1) v.emplace_back("model.num_heads: must be >= 1");
  if (embed_dim >= 1 && num_heads >= 1 && embed_dim % num_heads != 0) {
    v.emplace_back("model.embed_dim: " + std::to_string(embed_dim) + " is not divisible by model.num_heads " +
                   std::to_string(num_heads));
  }
  if (patch_size < 1) v.emplace_back("model.patch_size: must be >= 1");
  if (num_classes < 1) v.emplace_back("model.num_classes: must be >= 1");
  if (final_image_size < 1) {
    v.emplace_back("model.final_image_size: must be >= 1");
  } else if (patch_size >= 1 && final_image_size % patch_size != 0) {
    v.emplace_back("model.final_image_size: " + std::to_string(final_image_size) +
                   " is not divisible by model.patch_size " + std::to_string(patch_size));
  }
  if (!(ln_eps > 0.0)) v.emplace_back("model.ln_eps: must be positive");
  return v;
}

std::string to_string(FfnKind kind) { return kind == FfnKind::Locality ? "locality" : "plain"; }
std::string to_string(Activation act) { return act == Activation::HSwish ? "h_swish" : "gelu"; }
std::string to_string(GeluMode mode) { return mode == GeluMode::Erf ? "erf" : "tanh"; }

template <typename T>
Tensor<T> ActivationFn::forward(const Tensor<T>& x) const {
  return kind == Activation::HSwish ? h_swish(x) : gelu(x, gelu_mode);
}

template <typename T>
Tensor<T> ActivationFn::backward(const Tensor<T>& x, const Tensor<T>& dy) const {
  return kind == Activation::HSwish ? h_swish_backward(x, dy) : gelu_backward(x, dy, gelu_mode);
}

BlockSpec BlockSpec::from(const ModelConfig& cfg) {
  BlockSpec s;
  s.num_heads = cfg.num_heads;
  s.ffn_kind = cfg.ffn_kind;
  s.act = {cfg.activation, cfg.gelu_mode};
  s.use_class_token = cfg.use_class_token;
  s.ln_eps = cfg.ln_eps;
  return s;
}

// ---- token layout ---------------------------------------------------------

int grid_side(std::size_t tokens) {
  const auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
  if (tokens == 0 || g * g != tokens) {
    throw ShapeError("token count " + std::to_string(tokens) + " is not a perfect square");
  }
  return static_cast<int>(g);
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& images, int patch_size) {
  if (images.rank() != 3 && images.rank() != 4) {
    throw DimensionError("patchify: expected [3,S,S] or [B,3,S,S], got " + shape_str(images.shape()));
  }
  if (patch_size < 1) throw ArgumentError("patchify: patch size must be >= 1");
  const bool batched = images.rank() == 4;
  const std::size_t b = batched ? images.dim(0) : 1;
  const std::size_t c = images.dim(images.rank() - 3);
  const std::size_t h = images.dim(images.rank() - 2);
  const std::size_t w = images.dim(images.rank() - 1);
  const auto p = static_cast<std::size_t>(patch_size);
  if (h != w) throw ShapeError("patchify: image must be square, got " + shape_str(images.shape()));
  if (h == 0 || h % p != 0) {
    throw ShapeError("patchify: image size " + std::to_string(h) + " is not divisible by patch size " +
                     std::to_string(p));
  }
  const std::size_t g = h / p;
  const std::size_t n = g * g;
  const std::size_t flat = c * p * p;
  Tensor<T> out(batched ? Shape{b, n, flat} : Shape{n, flat});
  for (std::size_t bi = 0; bi < b; ++bi) {
    const T* img = images.data() + bi * c * h * w;
    T* dst = out.data() + bi * n * flat;
    for (std::size_t gy = 0; gy < g; ++gy) {
      for (std::size_t gx = 0; gx < g; ++gx) {
        T* patch = dst + (gy * g + gx) * flat;
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t py = 0; py < p; ++py) {
            const T* src = img + ch * h * w + (gy * p + py) * w + gx * p;
            std::copy(src, src + p, patch + ch * p * p + py * p);
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> seq2im(const Tensor<T>& tokens) {
  if (tokens.rank() != 2) throw DimensionError("seq2im: expected [N, C], got " + shape_str(tokens.shape()));
  const std::size_t n = tokens.dim(0), c = tokens.dim(1);
  const auto g = static_cast<std::size_t>(grid_side(n));
  Tensor<T> out({c, g, g});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) out[ch * n + i] = tokens[i * c + ch];
  }
  return out;
}

template <typename T>
Tensor<T> im2seq(const Tensor<T>& grid) {
  if (grid.rank() != 3) throw DimensionError("im2seq: expected [C, G, G], got " + shape_str(grid.shape()));
  if (grid.dim(1) != grid.dim(2)) throw ShapeError("im2seq: non-square spatial extents " + shape_str(grid.shape()));
  const std::size_t c = grid.dim(0), n = grid.dim(1) * grid.dim(2);
  Tensor<T> out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] = grid[ch * n + i];
  }
  return out;
}

// ---- attention ------------------------------------------------------------

template <typename T>
Tensor<T> msa(const Tensor<T>& z, const MsaWeights<T>& w, int num_heads, MsaCache<T>* cache) {
  const SeqDims dims = seq_dims(z, "msa");
  const std::size_t d = dims.width, t_len = dims.tokens;
  if (num_heads < 1 || d % static_cast<std::size_t>(num_heads) != 0) {
    throw ConfigError({"msa: embedding width " + std::to_string(d) + " is not divisible by num_heads " +
                       std::to_string(num_heads)});
  }
  const auto heads = static_cast<std::size_t>(num_heads);
  const std::size_t dh = d / heads;
  const auto ti = static_cast<Eigen::Index>(t_len), dhi = static_cast<Eigen::Index>(dh);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Tensor<T> qkv = linear(z, w.qkv_w.value, w.qkv_b.value);
  Tensor<T> probs({dims.batch, heads, t_len, t_len});
  Tensor<T> context(z.shape());
  for (std::size_t b = 0; b < dims.batch; ++b) {
    const T* base = qkv.data() + b * t_len * 3 * d;
    for (std::size_t h = 0; h < heads; ++h) {
      ConstStridedMap<T> q(base + h * dh, ti, dhi, Eigen::OuterStride<>(3 * d));
      ConstStridedMap<T> k(base + d + h * dh, ti, dhi, Eigen::OuterStride<>(3 * d));
      ConstStridedMap<T> v(base + 2 * d + h * dh, ti, dhi, Eigen::OuterStride<>(3 * d));
      T* pdata = probs.data() + (b * heads + h) * t_len * t_len;
      Eigen::Map<RowMat<T>> p(pdata, ti, ti);
      p.noalias() = scale * (q * k.transpose());
      softmax_rows<T>({pdata, t_len * t_len}, t_len);
      StridedMap<T> ctx(context.data() + b * t_len * d + h * dh, ti, dhi, Eigen::OuterStride<>(d));
      ctx.noalias() = p * v;
    }
  }
  Tensor<T> out = linear(context, w.proj_w.value, w.proj_b.value);
  if (cache) {
    cache->input = z;
    cache->qkv = std::move(qkv);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
  }
  return out;
}

template <typename T>
Tensor<T> msa_backward(const MsaCache<T>& cache, MsaWeights<T>& w, int num_heads, const Tensor<T>& dy) {
  const SeqDims dims = seq_dims(cache.input, "msa_backward");
  const std::size_t d = dims.width, t_len = dims.tokens;
  const auto heads = static_cast<std::size_t>(num_heads);
  const std::size_t dh = d / heads;
  const auto ti = static_cast<Eigen::Index>(t_len), dhi = static_cast<Eigen::Index>(dh);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Tensor<T> dcontext = linear_backward(cache.context, w.proj_w.value, dy, w.proj_w.grad, w.proj_b.grad);
  Tensor<T> dqkv(cache.qkv.shape());
  RowMat<T> dp(ti, ti);
  for (std::size_t b = 0; b < dims.batch; ++b) {
    const T* base = cache.qkv.data() + b * t_len * 3 * d;
    T* dbase = dqkv.data() + b * t_len * 3 * d;
    for (std::size_t h = 0; h < heads; ++h) {
      const Eigen::OuterStride<> s3(3 * d);
      ConstStridedMap<T> q(base + h * dh, ti, dhi, s3);
      ConstStridedMap<T> k(base + d + h * dh, ti, dhi, s3);
      ConstStridedMap<T> v(base + 2 * d + h * dh, ti, dhi, s3);
      StridedMap<T> dq(dbase + h * dh, ti, dhi, s3);
      StridedMap<T> dk(dbase + d + h * dh, ti, dhi, s3);
      StridedMap<T> dv(dbase + 2 * d + h * dh, ti, dhi, s3);
      Eigen::Map<const RowMat<T>> p(cache.probs.data() + (b * heads + h) * t_len * t_len, ti, ti);
      ConstStridedMap<T> dctx(dcontext.data() + b * t_len * d + h * dh, ti, dhi, Eigen::OuterStride<>(d));

      dp.noalias() = dctx * v.transpose();
      dv.noalias() = p.transpose() * dctx;
      for (Eigen::Index r = 0; r < ti; ++r) {
        const T dot = p.row(r).dot(dp.row(r));
        for (Eigen::Index c = 0; c < ti; ++c) dp(r, c) = p(r, c) * (dp(r, c) - dot) * scale;
      }
      dq.noalias() = dp * k;
      dk.noalias() = dp.transpose() * q;
    }
  }
  return linear_backward(cache.input, w.qkv_w.value, dqkv, w.qkv_w.grad, w.qkv_b.grad);
}

// ---- feed-forward ---------------------------------------------------------

template <typename T>
Tensor<T> locality_ffn(const Tensor<T>& z, const FfnWeights<T>& w, const ActivationFn& act, bool use_class_token,
                       FfnCache<T>* cache) {
  const SeqDims dims = seq_dims(z, "locality_ffn");
  const std::size_t skip = use_class_token ? 1 : 0;
  if (dims.tokens <= skip) throw ShapeError("locality_ffn: no patch tokens");
  const std::size_t np = dims.tokens - skip;

  Tensor<T> hidden = linear(z, w.expand_w.value, w.expand_b.value);
  Tensor<T> act1 = act.forward(hidden);
  const std::size_t c = hidden.inner();
  if (w.dwconv_w.value.shape() != Shape{c, 3, 3} || w.dwconv_b.value.shape() != Shape{c}) {
    throw ShapeError("locality_ffn: dwconv weights do not match hidden width " + std::to_string(c));
  }
  const std::size_t g = static_cast<std::size_t>(grid_side(np));
  const std::vector<T> kt = transpose_kernel(w.dwconv_w.value);
  Tensor<T> mixed(act1.shape());
  for (std::size_t b = 0; b < dims.batch; ++b) {
    const std::size_t base = b * dims.tokens * c;
    std::copy(act1.data() + base, act1.data() + base + skip * c, mixed.data() + base);
    conv_token_rows(act1.data() + base + skip * c, mixed.data() + base + skip * c, g, c, kt.data(),
                    w.dwconv_b.value.data());
  }
  Tensor<T> act2 = act.forward(mixed);
  Tensor<T> out = linear(act2, w.squeeze_w.value, w.squeeze_b.value);
  if (cache) {
    cache->input = z;
    cache->hidden = std::move(hidden);
    cache->act1 = std::move(act1);
    cache->mixed = std::move(mixed);
    cache->act2 = std::move(act2);
  }
  return out;
}

template <typename T>
Tensor<T> locality_ffn_backward(const FfnCache<T>& cache, FfnWeights<T>& w, const ActivationFn& act,
                                bool use_class_token, const Tensor<T>& dy) {
  const SeqDims dims = seq_dims(cache.input, "locality_ffn_backward");
  const std::size_t skip = use_class_token ? 1 : 0;
  const std::size_t np = dims.tokens - skip;
  const std::size_t c = cache.hidden.inner();

  Tensor<T> dact2 = linear_backward(cache.act2, w.squeeze_w.value, dy, w.squeeze_w.grad, w.squeeze_b.grad);
  Tensor<T> dmixed = act.backward(cache.mixed, dact2);
  const std::size_t g = static_cast<std::size_t>(grid_side(np));
  const std::vector<T> kt = transpose_kernel(w.dwconv_w.value);
  std::vector<T> dkt(9 * c, T(0));
  Tensor<T> dact1(dmixed.shape());
  for (std::size_t b = 0; b < dims.batch; ++b) {
    const std::size_t base = b * dims.tokens * c;
    std::copy(dmixed.data() + base, dmixed.data() + base + skip * c, dact1.data() + base);
    const std::size_t off = base + skip * c;
    conv_token_rows_backward(cache.act1.data() + off, dmixed.data() + off, dact1.data() + off, g, c, kt.data(),
                             dkt.data(), w.dwconv_b.grad.data());
  }
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t tap = 0; tap < 9; ++tap) w.dwconv_w.grad[ch * 9 + tap] += dkt[tap * c + ch];
  Tensor<T> dhidden = act.backward(cache.hidden, dact1);
  return linear_backward(cache.input, w.expand_w.value, dhidden, w.expand_w.grad, w.expand_b.grad);
}

template <typename T>
Tensor<T> plain_ffn(const Tensor<T>& z, const FfnWeights<T>& w, const ActivationFn& act, FfnCache<T>* cache) {
  Tensor<T> hidden = linear(z, w.expand_w.value, w.expand_b.value);
  Tensor<T> act1 = act.forward(hidden);
  Tensor<T> out = linear(act1, w.squeeze_w.value, w.squeeze_b.value);
  if (cache) {
    cache->input = z;
    cache->hidden = std::move(hidden);
    cache->act1 = std::move(act1);
  }
  return out;
}

template <typename T>
Tensor<T> plain_ffn_backward(const FfnCache<T>& cache, FfnWeights<T>& w, const ActivationFn& act, const Tensor<T>& dy) {
  Tensor<T> dact1 = linear_backward(cache.act1, w.squeeze_w.value, dy, w.squeeze_w.grad, w.squeeze_b.grad);
  Tensor<T> dhidden = act.backward(cache.hidden, dact1);
  return linear_backward(cache.input, w.expand_w.value, dhidden, w.expand_w.grad, w.expand_b.grad);
}

// ---- encoder block --------------------------------------------------------

template <typename T>
Tensor<T> encoder_block(const Tensor<T>& z, const BlockWeights<T>& w, const BlockSpec& spec, BlockCache<T>* cache) {
  const T eps = static_cast<T>(spec.ln_eps);
  Tensor<T> n1 = layernorm(z, w.ln1_g.value, w.ln1_b.value, eps, cache ? &cache->ln1 : nullptr);
  Tensor<T> mid = msa(n1, w.attn, spec.num_heads, cache ? &cache->attn : nullptr);
  add_into(mid, z);
  Tensor<T> n2 = layernorm(mid, w.ln2_g.value, w.ln2_b.value, eps, cache ? &cache->ln2 : nullptr);
  FfnCache<T>* fc = cache ? &cache->ffn : nullptr;
  Tensor<T> out = spec.ffn_kind == FfnKind::Locality ? locality_ffn(n2, w.ffn, spec.act, spec.use_class_token, fc)
                                                     : plain_ffn(n2, w.ffn, spec.act, fc);
  add_into(out, mid);
  if (cache) {
    cache->input = z;
    cache->mid = std::move(mid);
  }
  return out;
}

template <typename T>
Tensor<T> encoder_block_backward(const BlockCache<T>& cache, BlockWeights<T>& w, const BlockSpec& spec,
                                 const Tensor<T>& dy) {
  Tensor<T> dn2 = spec.ffn_kind == FfnKind::Locality
                      ? locality_ffn_backward(cache.ffn, w.ffn, spec.act, spec.use_class_token, dy)
                      : plain_ffn_backward(cache.ffn, w.ffn, spec.act, dy);
  Tensor<T> dmid = layernorm_backward(cache.mid, w.ln2_g.value, cache.ln2, dn2, w.ln2_g.grad, w.ln2_b.grad);
  add_into(dmid, dy);
  Tensor<T> dn1 = msa_backward(cache.attn, w.attn, spec.num_heads, dmid);
  Tensor<T> dz = layernorm_backward(cache.input, w.ln1_g.value, cache.ln1, dn1, w.ln1_g.grad, w.ln1_b.grad);
  add_into(dz, dmid);
  return dz;
}

// ---- parameter accounting -------------------------------------------------

std::size_t ParamCount::of(const std::string& module) const {
  for (const auto& [name, n] : modules) {
    if (name == module) return n;
  }
  return 0;
}

std::size_t ffn_param_count(std::size_t embed_dim, FfnKind kind) {
  const std::size_t hidden = 4 * embed_dim;
  std::size_t n = embed_dim * hidden + hidden + hidden * embed_dim + embed_dim;
  if (kind == FfnKind::Locality) n += hidden * 9 + hidden;
  return n;
}

// ---- model ----------------------------------------------------------------

template <typename T>
Tensor<T> interpolate_embedding_rows(const Tensor<T>& rows, int old_grid, int new_grid, bool has_class_token) {
  if (new_grid < 1) throw ArgumentError("interpolate_pos_embed: new grid must be >= 1");
  const std::size_t skip = has_class_token ? 1 : 0;
  const auto og = static_cast<std::size_t>(old_grid), ng = static_cast<std::size_t>(new_grid);
  if (rows.rank() != 2 || rows.dim(0) != skip + og * og) {
    throw DimensionError("interpolate_pos_embed: embedding rows " + shape_str(rows.shape()) +
                         " do not match grid " + std::to_string(old_grid));
  }
  if (og == ng) return rows;
  const std::size_t d = rows.dim(1);
  Tensor<T> grid({d, og, og});
  for (std::size_t i = 0; i < og * og; ++i) {
    for (std::size_t c = 0; c < d; ++c) grid[c * og * og + i] = rows[(skip + i) * d + c];
  }
  Tensor<T> resized = bilinear_resize(grid, new_grid, new_grid, true);
  Tensor<T> out({skip + ng * ng, d});
  for (std::size_t c = 0; c < skip * d; ++c) out[c] = rows[c];
  for (std::size_t i = 0; i < ng * ng; ++i) {
    for (std::size_t c = 0; c < d; ++c) out[(skip + i) * d + c] = resized[c * ng * ng + i];
  }
  return out;
}

template <typename T>
VitModel<T>::VitModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  if (auto v = config.validate(); !v.empty()) throw ConfigError(std::move(v));
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(config.embed_dim);
  const std::size_t hidden = 4 * d;
  const auto p = static_cast<std::size_t>(config.patch_size);
  const std::size_t skip = config.use_class_token ? 1 : 0;
  grid_ = config.final_grid();
  const auto g = static_cast<std::size_t>(grid_);

  patch_w = Param<T>("patch_embed.weight", trunc_normal_tensor<T>({3 * p * p, d}, rng));
  patch_b = Param<T>("patch_embed.bias", Tensor<T>({d}), false);
  if (config.use_class_token) cls_token = Param<T>("cls_token", trunc_normal_tensor<T>({d}, rng), false);
  pos_embed = Param<T>("pos_embed", trunc_normal_tensor<T>({skip + g * g, d}, rng), false);

  blocks.resize(static_cast<std::size_t>(config.depth));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    auto& b = blocks[i];
    b.ln1_g = Param<T>(pre + "ln1.weight", Tensor<T>({d}, T(1)), false);
    b.ln1_b = Param<T>(pre + "ln1.bias", Tensor<T>({d}), false);
    b.attn.qkv_w = Param<T>(pre + "attn.qkv.weight", trunc_normal_tensor<T>({d, 3 * d}, rng));
    b.attn.qkv_b = Param<T>(pre + "attn.qkv.bias", Tensor<T>({3 * d}), false);
    b.attn.proj_w = Param<T>(pre + "attn.proj.weight", trunc_normal_tensor<T>({d, d}, rng));
    b.attn.proj_b = Param<T>(pre + "attn.proj.bias", Tensor<T>({d}), false);
    b.ln2_g = Param<T>(pre + "ln2.weight", Tensor<T>({d}, T(1)), false);
    b.ln2_b = Param<T>(pre + "ln2.bias", Tensor<T>({d}), false);
    b.ffn.expand_w = Param<T>(pre + "ffn.expand.weight", trunc_normal_tensor<T>({d, hidden}, rng));
    b.ffn.expand_b = Param<T>(pre + "ffn.expand.bias", Tensor<T>({hidden}), false);
    if (config.ffn_kind == FfnKind::Locality) {
      b.ffn.dwconv_w = Param<T>(pre + "ffn.dwconv.weight", trunc_normal_tensor<T>({hidden, 3, 3}, rng));
      b.ffn.dwconv_b = Param<T>(pre + "ffn.dwconv.bias", Tensor<T>({hidden}), false);
    }
    b.ffn.squeeze_w = Param<T>(pre + "ffn.squeeze.weight", trunc_normal_tensor<T>({hidden, d}, rng));
    b.ffn.squeeze_b = Param<T>(pre + "ffn.squeeze.bias", Tensor<T>({d}), false);
  }
  norm_g = Param<T>("norm.weight", Tensor<T>({d}, T(1)), false);
  norm_b = Param<T>("norm.bias", Tensor<T>({d}), false);
  const auto classes = static_cast<std::size_t>(config.num_classes);
  head_w = Param<T>("head.weight", trunc_normal_tensor<T>({d, classes}, rng));
  head_b = Param<T>("head.bias", Tensor<T>({classes}), false);
}

template <typename T>
std::size_t VitModel<T>::tokens() const {
  return static_cast<std::size_t>(grid_ * grid_) + (config_.use_class_token ? 1 : 0);
}

template <typename T>
std::vector<Param<T>*> VitModel<T>::parameters() {
  std::vector<Param<T>*> out{&patch_w, &patch_b};
  if (config_.use_class_token) out.push_back(&cls_token);
  out.push_back(&pos_embed);
  for (auto& b : blocks) {
    out.insert(out.end(), {&b.ln1_g, &b.ln1_b, &b.attn.qkv_w, &b.attn.qkv_b, &b.attn.proj_w, &b.attn.proj_b,
                           &b.ln2_g, &b.ln2_b, &b.ffn.expand_w, &b.ffn.expand_b});
    if (config_.ffn_kind == FfnKind::Locality) out.insert(out.end(), {&b.ffn.dwconv_w, &b.ffn.dwconv_b});
    out.insert(out.end(), {&b.ffn.squeeze_w, &b.ffn.squeeze_b});
  }
  out.insert(out.end(), {&norm_g, &norm_b, &head_w, &head_b});
  return out;
}

template <typename T>
std::vector<const Param<T>*> VitModel<T>::parameters() const {
  auto mut = const_cast<VitModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
Param<T>& VitModel<T>::param(const std::string& name) {
  for (Param<T>* p : parameters()) {
    if (p->name == name) return *p;
  }
  throw ArgumentError("no parameter named '" + name + "'");
}

template <typename T>
void VitModel<T>::zero_grad() {
  for (Param<T>* p : parameters()) p->zero_grad();
}

template <typename T>
Tensor<T> VitModel<T>::forward(const Tensor<T>& images) const {
  return run(images, nullptr);
}

template <typename T>
Tensor<T> VitModel<T>::forward(const Tensor<T>& images, VitCache<T>& cache) const {
  return run(images, &cache);
}

template <typename T>
Tensor<T> VitModel<T>::run(const Tensor<T>& images, VitCache<T>* cache) const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw DimensionError("forward: expected images [B,3,S,S], got " + shape_str(images.shape()));
  }
  const std::size_t batch = images.dim(0);
  const std::size_t size = images.dim(2);
  const auto p = static_cast<std::size_t>(config_.patch_size);
  if (size % p == 0 && size / p != static_cast<std::size_t>(grid_)) {
    throw StateError("forward: image size " + std::to_string(size) + " gives a " + std::to_string(size / p) +
                     "x" + std::to_string(size / p) + " grid but pos_embed is at " + std::to_string(grid_) +
                     "x" + std::to_string(grid_) + "; call interpolate_pos_embed first");
  }
  Tensor<T> patches = patchify(images, config_.patch_size);
  Tensor<T> emb = linear(patches, patch_w.value, patch_b.value);
  const std::size_t n = patches.dim(1);
  const std::size_t skip = config_.use_class_token ? 1 : 0;
  const std::size_t t_len = n + skip;
  const auto d = static_cast<std::size_t>(config_.embed_dim);

  Tensor<T> z({batch, t_len, d});
  for (std::size_t b = 0; b < batch; ++b) {
    T* dst = z.data() + b * t_len * d;
    if (skip) std::copy(cls_token.value.data(), cls_token.value.data() + d, dst);
    std::copy(emb.data() + b * n * d, emb.data() + (b + 1) * n * d, dst + skip * d);
    for (std::size_t i = 0; i < t_len * d; ++i) dst[i] += pos_embed.value[i];
  }

  const BlockSpec spec = BlockSpec::from(config_);
  if (cache) cache->blocks.resize(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    z = encoder_block(z, blocks[i], spec, cache ? &cache->blocks[i] : nullptr);
  }
  Tensor<T> normed = layernorm(z, norm_g.value, norm_b.value, static_cast<T>(config_.ln_eps),
                               cache ? &cache->final_ln : nullptr);
  Tensor<T> pooled({batch, d});
  for (std::size_t b = 0; b < batch; ++b) {
    const T* rows = normed.data() + b * t_len * d;
    T* dst = pooled.data() + b * d;
    if (skip) {
      std::copy(rows, rows + d, dst);
    } else {
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t c = 0; c < d; ++c) dst[c] += rows[t * d + c];
      }
      for (std::size_t c = 0; c < d; ++c) dst[c] /= static_cast<T>(t_len);
    }
  }
  Tensor<T> logits = linear(pooled, head_w.value, head_b.value);
  if (cache) {
    cache->patches = std::move(patches);
    cache->final_in = std::move(z);
    cache->pooled = std::move(pooled);
    cache->batch = batch;
  }
  return logits;
}

template <typename T>
void VitModel<T>::backward(const VitCache<T>& cache, const Tensor<T>& dlogits) {
  const std::size_t batch = cache.batch;
  const auto d = static_cast<std::size_t>(config_.embed_dim);
  const std::size_t skip = config_.use_class_token ? 1 : 0;
  const std::size_t t_len = cache.final_in.dim(1);
  const std::size_t n = t_len - skip;

  Tensor<T> dpooled = linear_backward(cache.pooled, head_w.value, dlogits, head_w.grad, head_b.grad);
  Tensor<T> dnormed(cache.final_in.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    T* rows = dnormed.data() + b * t_len * d;
    const T* g = dpooled.data() + b * d;
    if (skip) {
      std::copy(g, g + d, rows);
    } else {
      const T inv = T(1) / static_cast<T>(t_len);
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t c = 0; c < d; ++c) rows[t * d + c] = g[c] * inv;
      }
    }
  }
  Tensor<T> dz = layernorm_backward(cache.final_in, norm_g.value, cache.final_ln, dnormed, norm_g.grad, norm_b.grad);
  const BlockSpec spec = BlockSpec::from(config_);
  for (std::size_t i = blocks.size(); i-- > 0;) {
    dz = encoder_block_backward(cache.blocks[i], blocks[i], spec, dz);
  }
  Tensor<T> demb({batch, n, d});
  for (std::size_t b = 0; b < batch; ++b) {
    const T* rows = dz.data() + b * t_len * d;
    for (std::size_t i = 0; i < t_len * d; ++i) pos_embed.grad[i] += rows[i];
    if (skip) {
      for (std::size_t c = 0; c < d; ++c) cls_token.grad[c] += rows[c];
    }
    std::copy(rows + skip * d, rows + t_len * d, demb.data() + b * n * d);
  }
  linear_backward_weights(cache.patches, demb, patch_w.grad, patch_b.grad);
}

template <typename T>
void VitModel<T>::interpolate_pos_embed(int new_grid) {
  if (new_grid < 1) throw ArgumentError("interpolate_pos_embed: new grid must be >= 1");
  if (new_grid == grid_) return;
  pos_embed = Param<T>(pos_embed.name,
                       interpolate_embedding_rows(pos_embed.value, grid_, new_grid, config_.use_class_token), false);
  grid_ = new_grid;
}

template <typename T>
void VitModel<T>::set_grid(int grid) {
  const std::size_t expect = static_cast<std::size_t>(grid * grid) + (config_.use_class_token ? 1 : 0);
  if (grid < 1 || pos_embed.value.rank() != 2 || pos_embed.value.dim(0) != expect) {
    throw StateError("set_grid: pos_embed " + shape_str(pos_embed.value.shape()) + " does not match grid " +
                     std::to_string(grid));
  }
  grid_ = grid;
  if (pos_embed.grad.shape() != pos_embed.value.shape()) pos_embed.grad = Tensor<T>::zeros_like(pos_embed.value);
}

template <typename T>
ParamCount VitModel<T>::param_count() const {
  ParamCount pc;
  auto add = [&](std::string name, std::size_t n) {
    pc.modules.emplace_back(std::move(name), n);
    pc.total += n;
  };
  add("patch_embed", patch_w.value.size() + patch_b.value.size());
  if (config_.use_class_token) add("cls_token", cls_token.value.size());
  add("pos_embed", pos_embed.value.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    add(pre + "ln1", b.ln1_g.value.size() + b.ln1_b.value.size());
    add(pre + "attn", b.attn.qkv_w.value.size() + b.attn.qkv_b.value.size() + b.attn.proj_w.value.size() +
                          b.attn.proj_b.value.size());
    add(pre + "ln2", b.ln2_g.value.size() + b.ln2_b.value.size());
    add(pre + "ffn", b.ffn.expand_w.value.size() + b.ffn.expand_b.value.size() + b.ffn.dwconv_w.value.size() +
                         b.ffn.dwconv_b.value.size() + b.ffn.squeeze_w.value.size() + b.ffn.squeeze_b.value.size());
  }
  add("head", norm_g.value.size() + norm_b.value.size() + head_w.value.size() + head_b.value.size());
  return pc;
}

#define BUDGETVIT_INSTANTIATE(T)                                                                                    \
  template Tensor<T> ActivationFn::forward(const Tensor<T>&) const;                                                 \
  template Tensor<T> ActivationFn::backward(const Tensor<T>&, const Tensor<T>&) const;                              \
  template Tensor<T> patchify(const Tensor<T>&, int);                                                               \
  template Tensor<T> seq2im(const Tensor<T>&);                                                                      \
  template Tensor<T> im2seq(const Tensor<T>&);                                                                      \
  template Tensor<T> msa(const Tensor<T>&, const MsaWeights<T>&, int, MsaCache<T>*);                                \
  template Tensor<T> msa_backward(const MsaCache<T>&, MsaWeights<T>&, int, const Tensor<T>&);                       \
  template Tensor<T> locality_ffn(const Tensor<T>&, const FfnWeights<T>&, const ActivationFn&, bool, FfnCache<T>*); \
  template Tensor<T> locality_ffn_backward(const FfnCache<T>&, FfnWeights<T>&, const ActivationFn&, bool,           \
                                           const Tensor<T>&);                                                       \
  template Tensor<T> plain_ffn(const Tensor<T>&, const FfnWeights<T>&, const ActivationFn&, FfnCache<T>*);          \
  template Tensor<T> plain_ffn_backward(const FfnCache<T>&, FfnWeights<T>&, const ActivationFn&, const Tensor<T>&);  \
  template Tensor<T> encoder_block(const Tensor<T>&, const BlockWeights<T>&, const BlockSpec&, BlockCache<T>*);     \
  template Tensor<T> encoder_block_backward(const BlockCache<T>&, BlockWeights<T>&, const BlockSpec&,               \
                                            const Tensor<T>&);                                                      \
  template Tensor<T> interpolate_embedding_rows(const Tensor<T>&, int, int, bool);                                  \
  template class VitModel<T>;

BUDGETVIT_INSTANTIATE(float)
BUDGETVIT_INSTANTIATE(double)

#undef BUDGETVIT_INSTANTIATE

}  // namespace budgetvit

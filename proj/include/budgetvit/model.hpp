// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Vision Transformer classifier with a locality-augmented feed-forward
// network. Activations are laid out token-major: a batch of token sequences
// is a [B, T, D] tensor, the class token (when enabled) at position 0.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "budgetvit/numerics.hpp"
#include "budgetvit/tensor.hpp"

namespace budgetvit {

enum class FfnKind { Locality, Plain };
enum class Activation { HSwish, Gelu };

struct ModelConfig {
  int embed_dim = 384;
  int depth = 12;
  int num_heads = 6;
  int patch_size = 16;
  int num_classes = 1000;
  FfnKind ffn_kind = FfnKind::Locality;
  Activation activation = Activation::HSwish;
  GeluMode gelu_mode = GeluMode::Erf;
  int final_image_size = 224;
  bool use_class_token = true;
  double ln_eps = 1e-6;

  int hidden_dim() const { return 4 * embed_dim; }
  int final_grid() const { return final_image_size / patch_size; }
  std::vector<std::string> validate() const;
  bool operator==(const ModelConfig&) const = default;
};

std::string to_string(FfnKind kind);
std::string to_string(Activation act);
std::string to_string(GeluMode mode);

struct ActivationFn {
  Activation kind = Activation::HSwish;
  GeluMode gelu_mode = GeluMode::Erf;

  template <typename T>
  Tensor<T> forward(const Tensor<T>& x) const;
  template <typename T>
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) const;
};

// ---- token layout ---------------------------------------------------------

/// [3,S,S] -> [(S/P)^2, 3*P*P], or batched [B,3,S,S] -> [B,(S/P)^2, 3*P*P].
/// Patches are taken row-major over the grid; each patch is flattened
/// channel-major, then row-major, then column-major.
template <typename T>
Tensor<T> patchify(const Tensor<T>& images, int patch_size);

/// [N, C] -> [C, G, G] with G*G == N; token i lands on cell (i / G, i % G).
template <typename T>
Tensor<T> seq2im(const Tensor<T>& tokens);

/// [C, G, G] -> [G*G, C]; exact inverse of seq2im.
template <typename T>
Tensor<T> im2seq(const Tensor<T>& grid);

/// Square-grid side for a patch-token count, or ShapeError.
int grid_side(std::size_t tokens);

// ---- sub-layers -----------------------------------------------------------

template <typename T>
struct MsaWeights {
  Param<T> qkv_w;   // [D, 3D]: columns Q | K | V, heads contiguous inside each
  Param<T> qkv_b;   // [3D]
  Param<T> proj_w;  // [D, D]
  Param<T> proj_b;  // [D]
};

template <typename T>
struct MsaCache {
  Tensor<T> input;
  Tensor<T> qkv;      // [B, T, 3D]
  Tensor<T> probs;    // [B, H, T, T]
  Tensor<T> context;  // [B, T, D]
};

template <typename T>
Tensor<T> msa(const Tensor<T>& z, const MsaWeights<T>& w, int num_heads, MsaCache<T>* cache = nullptr);

template <typename T>
Tensor<T> msa_backward(const MsaCache<T>& cache, MsaWeights<T>& w, int num_heads, const Tensor<T>& dy);

template <typename T>
struct FfnWeights {
  Param<T> expand_w;   // [D, 4D]
  Param<T> expand_b;   // [4D]
  Param<T> dwconv_w;   // [4D, 3, 3], locality only
  Param<T> dwconv_b;   // [4D], locality only
  Param<T> squeeze_w;  // [4D, D]
  Param<T> squeeze_b;  // [D]
};

template <typename T>
struct FfnCache {
  Tensor<T> input;
  Tensor<T> hidden;     // expand output
  Tensor<T> act1;       // first activation
  Tensor<T> mixed;      // after the conv sandwich (locality) in token layout
  Tensor<T> act2;       // squeeze input
};

/// expand -> act -> seq2im -> dwconv3x3 -> act -> im2seq -> squeeze over the
/// patch tokens of z [..., T, D]. A class token skips the spatial sandwich.
template <typename T>
Tensor<T> locality_ffn(const Tensor<T>& z, const FfnWeights<T>& w, const ActivationFn& act, bool use_class_token,
                       FfnCache<T>* cache = nullptr);

template <typename T>
Tensor<T> locality_ffn_backward(const FfnCache<T>& cache, FfnWeights<T>& w, const ActivationFn& act,
                                bool use_class_token, const Tensor<T>& dy);

/// squeeze(act(expand(z))).
template <typename T>
Tensor<T> plain_ffn(const Tensor<T>& z, const FfnWeights<T>& w, const ActivationFn& act, FfnCache<T>* cache = nullptr);

template <typename T>
Tensor<T> plain_ffn_backward(const FfnCache<T>& cache, FfnWeights<T>& w, const ActivationFn& act, const Tensor<T>& dy);

template <typename T>
struct BlockWeights {
  Param<T> ln1_g, ln1_b;
  MsaWeights<T> attn;
  Param<T> ln2_g, ln2_b;
  FfnWeights<T> ffn;
};

template <typename T>
struct BlockCache {
  Tensor<T> input;
  LayerNormCache<T> ln1;
  MsaCache<T> attn;  // attn.input is LN1(z)
  Tensor<T> mid;
  LayerNormCache<T> ln2;
  FfnCache<T> ffn;  // ffn.input is LN2(z')
};

struct BlockSpec {
  int num_heads = 1;
  FfnKind ffn_kind = FfnKind::Locality;
  ActivationFn act;
  bool use_class_token = true;
  double ln_eps = 1e-6;

  static BlockSpec from(const ModelConfig& cfg);
};

/// z' = z + MSA(LN(z)); out = z' + FFN(LN(z')).
template <typename T>
Tensor<T> encoder_block(const Tensor<T>& z, const BlockWeights<T>& w, const BlockSpec& spec,
                        BlockCache<T>* cache = nullptr);

template <typename T>
Tensor<T> encoder_block_backward(const BlockCache<T>& cache, BlockWeights<T>& w, const BlockSpec& spec,
                                 const Tensor<T>& dy);

// ---- model ----------------------------------------------------------------

struct ParamCount {
  std::size_t total = 0;
  std::vector<std::pair<std::string, std::size_t>> modules;

  std::size_t of(const std::string& module) const;
};

/// Scalars in one FFN sub-layer of width D.
std::size_t ffn_param_count(std::size_t embed_dim, FfnKind kind);

template <typename T>
struct VitCache {
  Tensor<T> patches;  // [B, N, 3P^2]
  std::vector<BlockCache<T>> blocks;
  Tensor<T> final_in;
  LayerNormCache<T> final_ln;
  Tensor<T> pooled;  // [B, D]
  std::size_t batch = 0;
};

template <typename T>
class VitModel {
 public:
  VitModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  int current_grid() const noexcept { return grid_; }
  int current_image_size() const noexcept { return grid_ * config_.patch_size; }
  std::size_t tokens() const;

  /// Every trainable tensor in a fixed order.
  std::vector<Param<T>*> parameters();
  std::vector<const Param<T>*> parameters() const;
  Param<T>& param(const std::string& name);
  void zero_grad();

  /// images [B, 3, S, S] -> logits [B, num_classes].
  Tensor<T> forward(const Tensor<T>& images) const;
  Tensor<T> forward(const Tensor<T>& images, VitCache<T>& cache) const;
  void backward(const VitCache<T>& cache, const Tensor<T>& dlogits);

  /// Bilinearly resizes the patch-position embeddings to a new grid; the
  /// class-token row is copied unchanged.
  void interpolate_pos_embed(int new_grid);
  /// Restores the grid bookkeeping after pos_embed was replaced externally.
  void set_grid(int grid);

  ParamCount param_count() const;

  Param<T> patch_w, patch_b;
  Param<T> cls_token;
  Param<T> pos_embed;
  std::vector<BlockWeights<T>> blocks;
  Param<T> norm_g, norm_b;
  Param<T> head_w, head_b;

 private:
  Tensor<T> run(const Tensor<T>& images, VitCache<T>* cache) const;

  ModelConfig config_;
  int grid_ = 0;
};

/// Resizes embedding rows laid out as [has_cls + G*G, D] to a new grid with
/// align_corners bilinear interpolation. Also used for optimizer moments.
template <typename T>
Tensor<T> interpolate_embedding_rows(const Tensor<T>& rows, int old_grid, int new_grid, bool has_class_token);

}  // namespace budgetvit

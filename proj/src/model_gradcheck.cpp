// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <memory>
#include <random>

#include "budgetvit/gradcheck.hpp"
#include "budgetvit/model.hpp"

namespace budgetvit {
namespace {

using Inputs = DiffOp::Inputs;

Tensor<double> uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

Param<double> param(const Tensor<double>& v) { return Param<double>("p", v); }

MsaWeights<double> msa_weights(const Inputs& in, std::size_t at) {
  return {param(in[at]), param(in[at + 1]), param(in[at + 2]), param(in[at + 3])};
}

FfnWeights<double> ffn_weights(const Inputs& in, std::size_t at, bool locality) {
  FfnWeights<double> w;
  w.expand_w = param(in[at]);
  w.expand_b = param(in[at + 1]);
  std::size_t k = at + 2;
  if (locality) {
    w.dwconv_w = param(in[k]);
    w.dwconv_b = param(in[k + 1]);
    k += 2;
  }
  w.squeeze_w = param(in[k]);
  w.squeeze_b = param(in[k + 1]);
  return w;
}

void push_ffn_grads(Inputs& out, const FfnWeights<double>& w, bool locality) {
  out.push_back(w.expand_w.grad);
  out.push_back(w.expand_b.grad);
  if (locality) {
    out.push_back(w.dwconv_w.grad);
    out.push_back(w.dwconv_b.grad);
  }
  out.push_back(w.squeeze_w.grad);
  out.push_back(w.squeeze_b.grad);
}

Inputs ffn_inputs(std::size_t d, bool locality, std::mt19937_64& rng) {
  const std::size_t h = 4 * d;
  Inputs in{uniform({d, h}, rng), uniform({h}, rng)};
  if (locality) {
    in.push_back(uniform({h, 3, 3}, rng));
    in.push_back(uniform({h}, rng));
  }
  in.push_back(uniform({h, d}, rng));
  in.push_back(uniform({d}, rng));
  return in;
}

DiffOp msa_op(std::mt19937_64& rng) {
  const std::size_t d = 8;
  DiffOp op;
  op.name = "msa";
  op.inputs = {uniform({2, 5, d}, rng), uniform({d, 3 * d}, rng), uniform({3 * d}, rng), uniform({d, d}, rng),
               uniform({d}, rng)};
  op.forward = [](const Inputs& in) { return msa(in[0], msa_weights(in, 1), 2); };
  op.backward = [](const Inputs& in, const Tensor<double>& dy) {
    auto w = msa_weights(in, 1);
    MsaCache<double> cache;
    msa(in[0], w, 2, &cache);
    Tensor<double> dz = msa_backward(cache, w, 2, dy);
    return Inputs{dz, w.qkv_w.grad, w.qkv_b.grad, w.proj_w.grad, w.proj_b.grad};
  };
  return op;
}

DiffOp locality_op(std::mt19937_64& rng, bool cls, std::size_t batch, std::size_t grid) {
  const std::size_t d = 4;
  DiffOp op;
  op.name = cls ? "locality_ffn_class_token" : "locality_ffn";
  op.inputs = {uniform({batch, grid * grid + (cls ? 1 : 0), d}, rng)};
  for (auto& t : ffn_inputs(d, true, rng)) op.inputs.push_back(std::move(t));
  const ActivationFn act{Activation::HSwish, GeluMode::Erf};
  op.forward = [=](const Inputs& in) { return locality_ffn(in[0], ffn_weights(in, 1, true), act, cls); };
  op.backward = [=](const Inputs& in, const Tensor<double>& dy) {
    auto w = ffn_weights(in, 1, true);
    FfnCache<double> cache;
    locality_ffn(in[0], w, act, cls, &cache);
    Inputs out{locality_ffn_backward(cache, w, act, cls, dy)};
    push_ffn_grads(out, w, true);
    return out;
  };
  return op;
}

DiffOp plain_op(std::mt19937_64& rng) {
  const std::size_t d = 4;
  DiffOp op;
  op.name = "plain_ffn";
  op.inputs = {uniform({2, 5, d}, rng)};
  for (auto& t : ffn_inputs(d, false, rng)) op.inputs.push_back(std::move(t));
  const ActivationFn act{Activation::Gelu, GeluMode::Erf};
  op.forward = [=](const Inputs& in) { return plain_ffn(in[0], ffn_weights(in, 1, false), act); };
  op.backward = [=](const Inputs& in, const Tensor<double>& dy) {
    auto w = ffn_weights(in, 1, false);
    FfnCache<double> cache;
    plain_ffn(in[0], w, act, &cache);
    Inputs out{plain_ffn_backward(cache, w, act, dy)};
    push_ffn_grads(out, w, false);
    return out;
  };
  return op;
}

DiffOp block_op(std::mt19937_64& rng, FfnKind kind) {
  const std::size_t d = 8;
  const bool locality = kind == FfnKind::Locality;
  BlockSpec spec;
  spec.num_heads = 2;
  spec.ffn_kind = kind;
  spec.act = {locality ? Activation::HSwish : Activation::Gelu, GeluMode::Erf};
  spec.use_class_token = true;
  spec.ln_eps = 1e-6;

  DiffOp op;
  op.name = locality ? "encoder_block" : "encoder_block_plain";
  op.inputs = {uniform({2, 5, d}, rng), uniform({d}, rng, 0.5, 1.5), uniform({d}, rng)};
  op.inputs.push_back(uniform({d, 3 * d}, rng));
  op.inputs.push_back(uniform({3 * d}, rng));
  op.inputs.push_back(uniform({d, d}, rng));
  op.inputs.push_back(uniform({d}, rng));
  op.inputs.push_back(uniform({d}, rng, 0.5, 1.5));
  op.inputs.push_back(uniform({d}, rng));
  for (auto& t : ffn_inputs(d, locality, rng)) op.inputs.push_back(std::move(t));

  auto weights = [=](const Inputs& in) {
    BlockWeights<double> w;
    w.ln1_g = param(in[1]);
    w.ln1_b = param(in[2]);
    w.attn = msa_weights(in, 3);
    w.ln2_g = param(in[7]);
    w.ln2_b = param(in[8]);
    w.ffn = ffn_weights(in, 9, locality);
    return w;
  };
  op.forward = [=](const Inputs& in) { return encoder_block(in[0], weights(in), spec); };
  op.backward = [=](const Inputs& in, const Tensor<double>& dy) {
    auto w = weights(in);
    BlockCache<double> cache;
    encoder_block(in[0], w, spec, &cache);
    Inputs out{encoder_block_backward(cache, w, spec, dy)};
    out.insert(out.end(), {w.ln1_g.grad, w.ln1_b.grad, w.attn.qkv_w.grad, w.attn.qkv_b.grad, w.attn.proj_w.grad,
                           w.attn.proj_b.grad, w.ln2_g.grad, w.ln2_b.grad});
    push_ffn_grads(out, w.ffn, locality);
    return out;
  };
  return op;
}

DiffOp vit_op(std::mt19937_64& rng, FfnKind kind) {
  ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.depth = 1;
  cfg.num_heads = 2;
  cfg.patch_size = 16;
  cfg.num_classes = 3;
  cfg.final_image_size = 32;
  cfg.ffn_kind = kind;
  cfg.activation = kind == FfnKind::Locality ? Activation::HSwish : Activation::Gelu;
  cfg.use_class_token = true;

  auto proto = std::make_shared<VitModel<double>>(cfg, 11);
  DiffOp op;
  op.name = kind == FfnKind::Locality ? "vit_model" : "vit_model_plain";
  op.tolerance = 1e-3;
  for (const Param<double>* p : proto->parameters()) {
    const bool gain = p->name.find("ln") != std::string::npos || p->name.find("norm") != std::string::npos;
    op.inputs.push_back(uniform(p->value.shape(), rng, gain ? 0.5 : -0.5, gain ? 1.5 : 0.5));
  }
  const std::size_t n_params = op.inputs.size();
  op.inputs.push_back(uniform({2, 3, 32, 32}, rng));
  op.probe.assign(n_params, true);
  op.probe.push_back(false);

  auto load = [proto, n_params](const Inputs& in) {
    VitModel<double> m = *proto;
    auto ps = m.parameters();
    for (std::size_t i = 0; i < n_params; ++i) ps[i]->value = in[i];
    return m;
  };
  op.forward = [=](const Inputs& in) { return load(in).forward(in[n_params]); };
  op.backward = [=](const Inputs& in, const Tensor<double>& dy) {
    VitModel<double> m = load(in);
    m.zero_grad();
    VitCache<double> cache;
    m.forward(in[n_params], cache);
    m.backward(cache, dy);
    Inputs out;
    for (const Param<double>* p : m.parameters()) out.push_back(p->grad);
    out.emplace_back();
    return out;
  };
  return op;
}

}  // namespace

std::vector<DiffOp> model_ops(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<DiffOp> ops;
  ops.push_back(msa_op(rng));
  ops.push_back(locality_op(rng, false, 1, 3));
  ops.push_back(locality_op(rng, true, 2, 2));
  ops.push_back(plain_op(rng));
  ops.push_back(block_op(rng, FfnKind::Locality));
  ops.push_back(block_op(rng, FfnKind::Plain));
  ops.push_back(vit_op(rng, FfnKind::Locality));
  ops.push_back(vit_op(rng, FfnKind::Plain));
  return ops;
}

}  // namespace budgetvit

// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/models/vit.hpp"

#include "mvx/error.hpp"
#include "mvx/nn/ops.hpp"

namespace mvx::models {

void ViTConfig::validate() const {
  if (patch == 0 || image_h % patch != 0 || image_w % patch != 0) {
    throw Error("vit: patch " + std::to_string(patch) + " does not divide image " +
                std::to_string(image_h) + "x" + std::to_string(image_w));
  }
  if (heads == 0 || dim % heads != 0) {
    throw Error("vit: model_dim " + std::to_string(dim) + " is not divisible by heads " +
                std::to_string(heads));
  }
  if (blocks == 0 || ffn_dim == 0) throw Error("vit: blocks and ffn_dim must be positive");
}

template <typename T>
ViTParams<T> ViTParams<T>::init(const ViTConfig& cfg, Initializer& init) {
  cfg.validate();
  const std::size_t d = cfg.dim, pv = cfg.patch_values(), f = cfg.ffn_dim;
  ViTParams p;
  p.patch_w = make_param<T>({pv, d}, init.xavier_uniform(pv * d, pv, d));
  p.patch_b = zeros_param<T>({d});
  p.cls = make_param<T>({d}, init.trunc_normal(d, kInitStd));
  p.pos = make_param<T>({cfg.tokens() + 1, d}, init.trunc_normal((cfg.tokens() + 1) * d, kInitStd));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    ViTBlock<T> blk;
    blk.ln1_g = ones_param<T>({d});
    blk.ln1_b = zeros_param<T>({d});
    blk.qkv_w = make_param<T>({d, 3 * d}, init.xavier_uniform(3 * d * d, d, 3 * d));
    blk.qkv_b = zeros_param<T>({3 * d});
    blk.proj_w = make_param<T>({d, d}, init.xavier_uniform(d * d, d, d));
    blk.proj_b = zeros_param<T>({d});
    blk.ln2_g = ones_param<T>({d});
    blk.ln2_b = zeros_param<T>({d});
    blk.fc1_w = make_param<T>({d, f}, init.xavier_uniform(d * f, d, f));
    blk.fc1_b = zeros_param<T>({f});
    blk.fc2_w = make_param<T>({f, d}, init.xavier_uniform(f * d, f, d));
    blk.fc2_b = zeros_param<T>({d});
    p.blocks.push_back(std::move(blk));
  }
  p.ln_g = ones_param<T>({d});
  p.ln_b = zeros_param<T>({d});
  return p;
}

template <typename T>
void ViTParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".patch_w", patch_w});
  out.push_back({prefix + ".patch_b", patch_b});
  out.push_back({prefix + ".cls", cls});
  out.push_back({prefix + ".pos", pos});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string p = prefix + ".block" + std::to_string(i);
    out.push_back({p + ".ln1_g", b.ln1_g});
    out.push_back({p + ".ln1_b", b.ln1_b});
    out.push_back({p + ".qkv_w", b.qkv_w});
    out.push_back({p + ".qkv_b", b.qkv_b});
    out.push_back({p + ".proj_w", b.proj_w});
    out.push_back({p + ".proj_b", b.proj_b});
    out.push_back({p + ".ln2_g", b.ln2_g});
    out.push_back({p + ".ln2_b", b.ln2_b});
    out.push_back({p + ".fc1_w", b.fc1_w});
    out.push_back({p + ".fc1_b", b.fc1_b});
    out.push_back({p + ".fc2_w", b.fc2_w});
    out.push_back({p + ".fc2_b", b.fc2_b});
  }
  out.push_back({prefix + ".ln_g", ln_g});
  out.push_back({prefix + ".ln_b", ln_b});
}

template <typename T>
void patchify_into(const ViTConfig& cfg, std::span<const T> image, std::size_t rows,
                   std::span<T> out) {
  if (rows < cfg.image_h || image.size() != rows * cfg.image_w) {
    throw ShapeError("patchify: image of " + std::to_string(image.size()) + " values with " +
                     std::to_string(rows) + " rows does not cover " + std::to_string(cfg.image_h) +
                     "x" + std::to_string(cfg.image_w));
  }
  if (out.size() != cfg.tokens() * cfg.patch_values()) {
    throw ShapeError("patchify: output buffer has wrong size");
  }
  const std::size_t p = cfg.patch, cols = cfg.image_w / p;
  for (std::size_t r = 0; r < cfg.image_h; ++r) {
    const std::size_t pr = r / p, ir = r % p;
    for (std::size_t c = 0; c < cfg.image_w; ++c) {
      const std::size_t token = pr * cols + c / p;
      out[token * p * p + ir * p + c % p] = image[r * cfg.image_w + c];
    }
  }
}

std::vector<float> patchify(const dsp::SpectralSegment& seg, const ViTConfig& cfg) {
  std::vector<float> out(cfg.tokens() * cfg.patch_values());
  patchify_into<float>(cfg, seg.values, dsp::kFreqBins, out);
  return out;
}

template <typename T>
Tensor<T> vit_forward(const ViTConfig& cfg, const ViTParams<T>& params, const Tensor<T>& tokens,
                      std::vector<std::vector<T>>* attention_probs) {
  if (tokens.rank() != 3 || tokens.dim(2) != cfg.patch_values()) {
    throw ShapeError("vit_forward: tokens " + nn::shape_str(tokens.shape()) + ", expected [B, N, " +
                     std::to_string(cfg.patch_values()) + "]");
  }
  if (tokens.dim(1) + 1 != params.pos.dim(0)) {
    throw ShapeError("vit_forward: " + std::to_string(tokens.dim(1)) +
                     " tokens + class token do not match positional table " +
                     nn::shape_str(params.pos.shape()));
  }
  if (attention_probs) attention_probs->clear();
  Tensor<T> x = nn::linear(tokens, params.patch_w, params.patch_b);
  x = nn::prepend_token(x, params.cls);
  x = nn::add_broadcast(x, params.pos);
  for (const auto& b : params.blocks) {
    Tensor<T> h = nn::layernorm(x, b.ln1_g, b.ln1_b);
    h = nn::linear(h, b.qkv_w, b.qkv_b);
    std::vector<T> probs;
    h = nn::attention(h, cfg.heads, attention_probs ? &probs : nullptr);
    if (attention_probs) attention_probs->push_back(std::move(probs));
    h = nn::linear(h, b.proj_w, b.proj_b);
    x = nn::add(x, h);
    h = nn::layernorm(x, b.ln2_g, b.ln2_b);
    h = nn::gelu(nn::linear(h, b.fc1_w, b.fc1_b));
    h = nn::linear(h, b.fc2_w, b.fc2_b);
    x = nn::add(x, h);
  }
  // Only the class token is read out, so the closing norm is applied to it alone.
  Tensor<T> cls = nn::select_token(x, 0);
  return nn::layernorm(cls, params.ln_g, params.ln_b);
}

template struct ViTParams<float>;
template struct ViTParams<double>;
template void patchify_into<float>(const ViTConfig&, std::span<const float>, std::size_t, std::span<float>);
template void patchify_into<double>(const ViTConfig&, std::span<const double>, std::size_t, std::span<double>);
template Tensor<float> vit_forward(const ViTConfig&, const ViTParams<float>&, const Tensor<float>&,
                                   std::vector<std::vector<float>>*);
template Tensor<double> vit_forward(const ViTConfig&, const ViTParams<double>&, const Tensor<double>&,
                                    std::vector<std::vector<double>>*);

}  // namespace mvx::models

// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Vision Transformer backbone over spectral segments.
//
// The 257-bin segment loses its Nyquist row to form a 256x256 image, which is
// cut into 16x16 patches in frequency-major order. Patch embeddings get a
// learnable class token and learnable positional embeddings, then go through
// pre-norm blocks (x += attn(ln(x)); x += ffn(ln(x))). The backbone returns the
// final-layer class-token vector after a closing layernorm.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mvx/dsp.hpp"
#include "mvx/models/params.hpp"

namespace mvx::models {

struct ViTConfig {
  std::size_t image_h = 256;  // frequency rows kept from the segment
  std::size_t image_w = 256;  // time frames
  std::size_t patch = 16;
  std::size_t dim = 384;
  std::size_t blocks = 6;
  std::size_t heads = 6;
  std::size_t ffn_dim = 1536;

  std::size_t tokens() const { return (image_h / patch) * (image_w / patch); }
  std::size_t patch_values() const { return patch * patch; }
  /// Throws mvx::Error unless dim % heads == 0 and patch divides the image.
  void validate() const;
};

template <typename T>
struct ViTBlock {
  Tensor<T> ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
  Tensor<T> ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
};

template <typename T>
struct ViTParams {
  Tensor<T> patch_w, patch_b, cls, pos;
  std::vector<ViTBlock<T>> blocks;
  Tensor<T> ln_g, ln_b;

  static ViTParams init(const ViTConfig& cfg, Initializer& init);
  /// Appends every tensor as "<prefix>.<name>".
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Tokens of one image with `rows` >= image_h frequency rows and image_w
/// frames (values[row * image_w + frame]); rows past image_h are dropped.
/// Output is tokens() x patch_values(), row-major.
template <typename T>
void patchify_into(const ViTConfig& cfg, std::span<const T> image, std::size_t rows,
                   std::span<T> out);

/// patchify_into for a full-size segment (257 x 256 -> 256 x 256).
std::vector<float> patchify(const dsp::SpectralSegment& seg, const ViTConfig& cfg = {});

/// tokens[B, N, P*P] -> class embedding [B, dim]. When `attention_probs` is
/// non-null it receives one [B, heads, N+1, N+1] array per block.
template <typename T>
Tensor<T> vit_forward(const ViTConfig& cfg, const ViTParams<T>& params, const Tensor<T>& tokens,
                      std::vector<std::vector<T>>* attention_probs = nullptr);

}  // namespace mvx::models

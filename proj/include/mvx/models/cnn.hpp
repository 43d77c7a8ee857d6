// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// CNN backbone: the segment is zero-padded along frequency to a multiple of
// 2^stages (257 -> 272), then each stage applies (3x3 conv, relu) twice and a
// 2x2 max-pool, doubling the channel count per stage. The final map is
// flattened and projected to embed_dim.

#pragma once

#include <cstddef>
#include <vector>

#include "mvx/models/params.hpp"

namespace mvx::models {

struct CNNConfig {
  std::size_t in_h = 257;  // frequency bins
  std::size_t in_w = 256;  // frames
  std::size_t stages = 4;
  std::size_t base_channels = 16;
  std::size_t kernel = 3;
  std::size_t embed_dim = 384;

  std::size_t padded_h() const;
  std::size_t channels(std::size_t stage) const { return base_channels << stage; }
  std::size_t out_h() const { return padded_h() >> stages; }
  std::size_t out_w() const { return in_w >> stages; }
  std::size_t flat_dim() const { return channels(stages - 1) * out_h() * out_w(); }
  void validate() const;
};

template <typename T>
struct CNNStage {
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct CNNParams {
  std::vector<CNNStage<T>> stages;
  Tensor<T> proj_w, proj_b;

  static CNNParams init(const CNNConfig& cfg, Initializer& init);
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// spectra[B, in_h, in_w] -> embedding [B, embed_dim].
template <typename T>
Tensor<T> cnn_forward(const CNNConfig& cfg, const CNNParams<T>& params, const Tensor<T>& spectra);

/// The feature map before flattening, [B, C, out_h, out_w] (for shape tests).
template <typename T>
Tensor<T> cnn_features(const CNNConfig& cfg, const CNNParams<T>& params, const Tensor<T>& spectra);

}  // namespace mvx::models

// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Two-stream classifier: one backbone per recorder channel (independent
// weights), a per-stream affine projection to proj_dim, concatenation, the
// shared fusion layer (fusion_dim, GELU) and the 17-way output layer.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvx/dsp.hpp"
#include "mvx/models/cnn.hpp"
#include "mvx/models/vit.hpp"

namespace mvx::models {

enum class ModelKind { kTransformer, kCnn };

std::string model_kind_name(ModelKind kind);
/// "transformer" or "cnn"; throws mvx::Error otherwise.
ModelKind parse_model_kind(const std::string& name);

struct TwoStreamConfig {
  ModelKind kind = ModelKind::kTransformer;
  ViTConfig vit;
  CNNConfig cnn;
  std::size_t proj_dim = 512;
  std::size_t fusion_dim = 1024;
  std::size_t classes = 17;

  /// Embedding width produced by the selected backbone.
  std::size_t embed_dim() const;
  /// Frequency rows / frames expected in every input spectrum.
  std::size_t input_rows() const;
  std::size_t input_frames() const;
  void validate() const;
};

/// A batch of spectra from one recorder channel, [B, rows, frames].
template <typename T>
struct StreamInput {
  int channel = 1;
  Tensor<T> spectra;
};

/// Stacks segments of one channel; throws mvx::Error when their channel
/// tags disagree or do not match `channel`.
StreamInput<float> make_stream_input(std::span<const dsp::SpectralSegment* const> segments,
                                     int channel);

template <typename T>
struct Backbone {
  ViTParams<T> vit;
  CNNParams<T> cnn;
};

template <typename T>
class TwoStreamModel {
 public:
  TwoStreamModel() = default;
  TwoStreamModel(const TwoStreamConfig& cfg, std::uint64_t seed);

  const TwoStreamConfig& config() const { return cfg_; }
  /// Every trainable tensor with its checkpoint name, in a fixed order.
  const ParamList<T>& params() const { return params_; }
  std::vector<Tensor<T>> tensors() const;
  std::size_t parameter_count() const { return count_values(params_); }

  /// Encoding of one stream before projection, [B, embed_dim].
  Tensor<T> encode(std::size_t stream, const Tensor<T>& spectra,
                   std::vector<std::vector<T>>* attention_probs = nullptr) const;

  /// Logits [B, classes]. Throws mvx::Error unless ch1.channel == 1 and
  /// ch2.channel == 2, and mvx::ShapeError on mismatched batches.
  Tensor<T> forward(const StreamInput<T>& ch1, const StreamInput<T>& ch2) const;

 private:
  TwoStreamConfig cfg_;
  Backbone<T> streams_[2];
  Tensor<T> proj_w_[2], proj_b_[2];
  Tensor<T> fusion_w_, fusion_b_, out_w_, out_b_;
  ParamList<T> params_;
};

/// Analytic parameter count of a configuration.
std::size_t expected_parameter_count(const TwoStreamConfig& cfg);

}  // namespace mvx::models

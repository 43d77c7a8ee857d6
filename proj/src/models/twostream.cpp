// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/models/twostream.hpp"

#include <algorithm>

#include "mvx/error.hpp"
#include "mvx/nn/ops.hpp"

namespace mvx::models {

std::string model_kind_name(ModelKind kind) {
  return kind == ModelKind::kCnn ? "cnn" : "transformer";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "transformer") return ModelKind::kTransformer;
  if (name == "cnn") return ModelKind::kCnn;
  throw Error("unknown model '" + name + "' (expected transformer or cnn)");
}

std::size_t TwoStreamConfig::embed_dim() const {
  return kind == ModelKind::kCnn ? cnn.embed_dim : vit.dim;
}

std::size_t TwoStreamConfig::input_rows() const {
  // The transformer drops the top (Nyquist) row of its input.
  return kind == ModelKind::kCnn ? cnn.in_h : vit.image_h + 1;
}

std::size_t TwoStreamConfig::input_frames() const {
  return kind == ModelKind::kCnn ? cnn.in_w : vit.image_w;
}

void TwoStreamConfig::validate() const {
  if (kind == ModelKind::kCnn) {
    cnn.validate();
  } else {
    vit.validate();
  }
  if (proj_dim == 0 || fusion_dim == 0 || classes == 0) throw Error("two-stream head sizes must be positive");
}

StreamInput<float> make_stream_input(std::span<const dsp::SpectralSegment* const> segments, int channel) {
  std::vector<float> data(segments.size() * dsp::kSegmentValues);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i]->channel != channel) {
      throw Error("segment " + std::to_string(i) + " carries channel tag " + std::to_string(segments[i]->channel) +
                  " in a channel-" + std::to_string(channel) + " batch");
    }
    std::copy(segments[i]->values.begin(), segments[i]->values.end(),
              data.begin() + static_cast<std::ptrdiff_t>(i * dsp::kSegmentValues));
  }
  StreamInput<float> in;
  in.channel = channel;
  in.spectra = nn::TensorF::from_data(
      {segments.size(), static_cast<std::size_t>(dsp::kFreqBins), static_cast<std::size_t>(dsp::kFrames)},
      std::move(data));
  return in;
}

template <typename T>
TwoStreamModel<T>::TwoStreamModel(const TwoStreamConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Initializer init(seed);
  const std::size_t e = cfg_.embed_dim(), p = cfg_.proj_dim, f = cfg_.fusion_dim, c = cfg_.classes;
  for (std::size_t s = 0; s < 2; ++s) {
    const std::string name = "stream" + std::to_string(s + 1);
    if (cfg_.kind == ModelKind::kCnn) {
      streams_[s].cnn = CNNParams<T>::init(cfg_.cnn, init);
      streams_[s].cnn.collect(name, params_);
    } else {
      streams_[s].vit = ViTParams<T>::init(cfg_.vit, init);
      streams_[s].vit.collect(name, params_);
    }
  }
  for (std::size_t s = 0; s < 2; ++s) {
    const std::string name = "head.proj" + std::to_string(s + 1);
    proj_w_[s] = make_param<T>({e, p}, init.xavier_uniform(e * p, e, p));
    proj_b_[s] = zeros_param<T>({p});
    params_.push_back({name + "_w", proj_w_[s]});
    params_.push_back({name + "_b", proj_b_[s]});
  }
  fusion_w_ = make_param<T>({2 * p, f}, init.xavier_uniform(2 * p * f, 2 * p, f));
  fusion_b_ = zeros_param<T>({f});
  out_w_ = make_param<T>({f, c}, init.xavier_uniform(f * c, f, c));
  out_b_ = zeros_param<T>({c});
  params_.push_back({"head.fusion_w", fusion_w_});
  params_.push_back({"head.fusion_b", fusion_b_});
  params_.push_back({"head.out_w", out_w_});
  params_.push_back({"head.out_b", out_b_});
}

template <typename T>
std::vector<Tensor<T>> TwoStreamModel<T>::tensors() const {
  std::vector<Tensor<T>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

template <typename T>
Tensor<T> TwoStreamModel<T>::encode(std::size_t stream, const Tensor<T>& spectra,
                                    std::vector<std::vector<T>>* attention_probs) const {
  const std::size_t rows = cfg_.input_rows(), frames = cfg_.input_frames();
  if (spectra.rank() != 3 || spectra.dim(1) != rows || spectra.dim(2) != frames) {
    throw ShapeError("two-stream input " + nn::shape_str(spectra.shape()) + ", expected [B, " + std::to_string(rows) +
                     ", " + std::to_string(frames) + "]");
  }
  if (cfg_.kind == ModelKind::kCnn) return cnn_forward(cfg_.cnn, streams_[stream].cnn, spectra);
  const ViTConfig& vc = cfg_.vit;
  const std::size_t batch = spectra.dim(0), per = vc.tokens() * vc.patch_values();
  std::vector<T> tokens(batch * per);
  for (std::size_t b = 0; b < batch; ++b) {
    patchify_into<T>(vc, spectra.data().subspan(b * rows * frames, rows * frames), rows,
                     std::span<T>(tokens.data() + b * per, per));
  }
  const Tensor<T> tok = Tensor<T>::from_data({batch, vc.tokens(), vc.patch_values()}, std::move(tokens));
  return vit_forward(vc, streams_[stream].vit, tok, attention_probs);
}

template <typename T>
Tensor<T> TwoStreamModel<T>::forward(const StreamInput<T>& ch1, const StreamInput<T>& ch2) const {
  if (ch1.channel != 1 || ch2.channel != 2) {
    throw Error("two-stream forward expects channels (1, 2), got (" + std::to_string(ch1.channel) + ", " +
                std::to_string(ch2.channel) + ")");
  }
  if (ch1.spectra.dim(0) != ch2.spectra.dim(0)) {
    throw ShapeError("two-stream batches differ: " + nn::shape_str(ch1.spectra.shape()) + " and " +
                     nn::shape_str(ch2.spectra.shape()));
  }
  Tensor<T> z1 = nn::linear(encode(0, ch1.spectra), proj_w_[0], proj_b_[0]);
  Tensor<T> z2 = nn::linear(encode(1, ch2.spectra), proj_w_[1], proj_b_[1]);
  Tensor<T> z = nn::concat_last(z1, z2);
  z = nn::gelu(nn::linear(z, fusion_w_, fusion_b_));
  return nn::linear(z, out_w_, out_b_);
}

std::size_t expected_parameter_count(const TwoStreamConfig& cfg) {
  std::size_t backbone = 0;
  if (cfg.kind == ModelKind::kCnn) {
    const CNNConfig& c = cfg.cnn;
    const std::size_t k2 = c.kernel * c.kernel;
    std::size_t in = 1;
    for (std::size_t s = 0; s < c.stages; ++s) {
      const std::size_t ch = c.channels(s);
      backbone += ch * in * k2 + ch + ch * ch * k2 + ch;
      in = ch;
    }
    backbone += c.flat_dim() * c.embed_dim + c.embed_dim;
  } else {
    const ViTConfig& v = cfg.vit;
    const std::size_t d = v.dim, f = v.ffn_dim;
    backbone = v.patch_values() * d + d + d + (v.tokens() + 1) * d + 2 * d;
    backbone += v.blocks * (4 * d + 3 * d * d + 3 * d + d * d + d + 2 * d * f + f + d);
  }
  const std::size_t e = cfg.embed_dim(), p = cfg.proj_dim, f = cfg.fusion_dim;
  return 2 * backbone + 2 * (e * p + p) + 2 * p * f + f + f * cfg.classes + cfg.classes;
}

template class TwoStreamModel<float>;
template class TwoStreamModel<double>;

}  // namespace mvx::models

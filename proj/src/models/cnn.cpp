// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/models/cnn.hpp"

#include <algorithm>

#include "mvx/error.hpp"
#include "mvx/nn/ops.hpp"

namespace mvx::models {

std::size_t CNNConfig::padded_h() const {
  const std::size_t q = std::size_t{1} << stages;
  return (in_h + q - 1) / q * q;
}

void CNNConfig::validate() const {
  if (stages == 0 || base_channels == 0 || kernel % 2 == 0 || embed_dim == 0) {
    throw Error("cnn: stages, base_channels, embed_dim must be positive and kernel odd");
  }
  if (in_w % (std::size_t{1} << stages) != 0) {
    throw Error("cnn: width " + std::to_string(in_w) + " is not divisible by 2^" + std::to_string(stages));
  }
}

template <typename T>
CNNParams<T> CNNParams<T>::init(const CNNConfig& cfg, Initializer& init) {
  cfg.validate();
  CNNParams p;
  const std::size_t k2 = cfg.kernel * cfg.kernel;
  std::size_t in = 1;
  for (std::size_t s = 0; s < cfg.stages; ++s) {
    const std::size_t c = cfg.channels(s);
    CNNStage<T> st;
    st.w1 = make_param<T>({c, in, cfg.kernel, cfg.kernel}, init.he_normal(c * in * k2, in * k2));
    st.b1 = zeros_param<T>({c});
    st.w2 = make_param<T>({c, c, cfg.kernel, cfg.kernel}, init.he_normal(c * c * k2, c * k2));
    st.b2 = zeros_param<T>({c});
    p.stages.push_back(std::move(st));
    in = c;
  }
  p.proj_w = make_param<T>({cfg.flat_dim(), cfg.embed_dim},
                           init.trunc_normal(cfg.flat_dim() * cfg.embed_dim, kInitStd));
  p.proj_b = zeros_param<T>({cfg.embed_dim});
  return p;
}

template <typename T>
void CNNParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string p = prefix + ".stage" + std::to_string(s);
    out.push_back({p + ".w1", stages[s].w1});
    out.push_back({p + ".b1", stages[s].b1});
    out.push_back({p + ".w2", stages[s].w2});
    out.push_back({p + ".b2", stages[s].b2});
  }
  out.push_back({prefix + ".proj_w", proj_w});
  out.push_back({prefix + ".proj_b", proj_b});
}

template <typename T>
Tensor<T> cnn_features(const CNNConfig& cfg, const CNNParams<T>& params, const Tensor<T>& spectra) {
  if (spectra.rank() != 3 || spectra.dim(1) != cfg.in_h || spectra.dim(2) != cfg.in_w) {
    throw ShapeError("cnn_forward: spectra " + nn::shape_str(spectra.shape()) + ", expected [B, " +
                     std::to_string(cfg.in_h) + ", " + std::to_string(cfg.in_w) + "]");
  }
  const std::size_t batch = spectra.dim(0), h = cfg.padded_h(), w = cfg.in_w;
  std::vector<T> padded(batch * h * w, T{0});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(spectra.data().data() + b * cfg.in_h * w, cfg.in_h * w, padded.data() + b * h * w);
  }
  Tensor<T> x = Tensor<T>::from_data({batch, 1, h, w}, std::move(padded));
  const std::size_t pad = cfg.kernel / 2;
  for (const auto& st : params.stages) {
    x = nn::relu(nn::conv2d(x, st.w1, st.b1, pad));
    x = nn::relu(nn::conv2d(x, st.w2, st.b2, pad));
    x = nn::maxpool2d(x, 2);
  }
  return x;
}

template <typename T>
Tensor<T> cnn_forward(const CNNConfig& cfg, const CNNParams<T>& params, const Tensor<T>& spectra) {
  Tensor<T> x = cnn_features(cfg, params, spectra);
  x = nn::reshape(x, {x.dim(0), cfg.flat_dim()});
  return nn::linear(x, params.proj_w, params.proj_b);
}

template struct CNNParams<float>;
template struct CNNParams<double>;
template Tensor<float> cnn_features(const CNNConfig&, const CNNParams<float>&, const Tensor<float>&);
template Tensor<double> cnn_features(const CNNConfig&, const CNNParams<double>&, const Tensor<double>&);
template Tensor<float> cnn_forward(const CNNConfig&, const CNNParams<float>&, const Tensor<float>&);
template Tensor<double> cnn_forward(const CNNConfig&, const CNNParams<double>&, const Tensor<double>&);

}  // namespace mvx::models

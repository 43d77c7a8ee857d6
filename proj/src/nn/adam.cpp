// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/nn/adam.hpp"

#include <cmath>

#include "mvx/error.hpp"

namespace mvx::nn {

double scheduled_lr(double lr0, double decay, int epoch) {
  return lr0 * std::pow(decay, epoch);
}

AdamState::AdamState(const std::vector<TensorF>& params, AdamOptions options)
    : options_(options) {
  for (const auto& p : params) {
    shapes_.push_back(p.shape());
    m_.emplace_back(p.numel(), 0.0f);
    v_.emplace_back(p.numel(), 0.0f);
  }
}

void adam_step(std::span<float> param, std::span<const float> grad, std::span<float> m,
               std::span<float> v, std::int64_t step, const AdamOptions& o) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw ShapeError("adam_step: parameter has " + std::to_string(param.size()) +
                     " values, gradient " + std::to_string(grad.size()));
  }
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  const auto b1 = static_cast<float>(o.beta1);
  const auto b2 = static_cast<float>(o.beta2);
  const auto step_size = static_cast<float>(o.lr / c1);
  const auto inv_c2 = static_cast<float>(1.0 / c2);
  const auto eps = static_cast<float>(o.eps);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    m[i] = b1 * m[i] + (1.0f - b1) * g;
    v[i] = b2 * v[i] + (1.0f - b2) * g * g;
    param[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
  }
}

void AdamState::step(std::vector<TensorF>& params) {
  if (params.size() != shapes_.size()) {
    throw ShapeError("AdamState::step: built for " + std::to_string(shapes_.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  ++step_;
  std::vector<float> zeros;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != shapes_[i]) {
      throw ShapeError("AdamState::step: parameter " + std::to_string(i) + " has shape " +
                       shape_str(params[i].shape()) + ", expected " + shape_str(shapes_[i]));
    }
    std::span<const float> g = params[i].grad();
    if (g.empty()) {
      zeros.assign(params[i].numel(), 0.0f);
      g = zeros;
    }
    adam_step(params[i].mutable_data(), g, m_[i], v_[i], step_, options_);
  }
}

}  // namespace mvx::nn

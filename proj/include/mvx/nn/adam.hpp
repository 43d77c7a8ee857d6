// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "mvx/nn/tensor.hpp"

namespace mvx::nn {

/// lr0 * decay^epoch
double scheduled_lr(double lr0, double decay, int epoch);

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments for a fixed parameter list, in the order given at construction.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const std::vector<TensorF>& params, AdamOptions options = {});

  AdamOptions& options() { return options_; }
  const AdamOptions& options() const { return options_; }
  std::int64_t step_count() const { return step_; }
  const std::vector<std::vector<float>>& first_moments() const { return m_; }
  const std::vector<std::vector<float>>& second_moments() const { return v_; }

  /// One bias-corrected Adam update of every parameter from its gradient.
  /// Parameters without a gradient are treated as having zero gradient.
  /// Throws mvx::ShapeError when the parameter list no longer matches.
  void step(std::vector<TensorF>& params);

 private:
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::vector<Shape> shapes_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

/// Free-function form: updates `param` in place from `grad`.
void adam_step(std::span<float> param, std::span<const float> grad, std::span<float> m,
               std::span<float> v, std::int64_t step, const AdamOptions& options);

}  // namespace mvx::nn

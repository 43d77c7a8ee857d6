// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mvx/nn/tensor.hpp"

namespace mvx::models {

using nn::Shape;
using nn::Tensor;

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

/// Deterministic parameter initializer. Values are drawn in double precision
/// and rounded, so float and double models built from one seed agree.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  /// Normal(0, std) truncated to [-2 std, 2 std].
  std::vector<double> trunc_normal(std::size_t n, double std);
  /// He normal for relu stacks: std = sqrt(2 / fan_in).
  std::vector<double> he_normal(std::size_t n, std::size_t fan_in);
  /// Uniform on +-sqrt(6 / (fan_in + fan_out)).
  std::vector<double> xavier_uniform(std::size_t n, std::size_t fan_in, std::size_t fan_out);

 private:
  std::mt19937_64 rng_;
};

inline constexpr double kInitStd = 0.02;

template <typename T>
Tensor<T> make_param(Shape shape, const std::vector<double>& values) {
  std::vector<T> data(values.begin(), values.end());
  return Tensor<T>::from_data(std::move(shape), std::move(data), true);
}

template <typename T>
Tensor<T> zeros_param(Shape shape) {
  return Tensor<T>::zeros(std::move(shape), true);
}

template <typename T>
Tensor<T> ones_param(Shape shape) {
  return Tensor<T>::full(std::move(shape), T{1}, true);
}

template <typename T>
std::size_t count_values(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace mvx::models

// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/models/params.hpp"

#include <cmath>

namespace mvx::models {

std::vector<double> Initializer::trunc_normal(std::size_t n, double std) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) {
    double z = dist(rng_);
    while (std::abs(z) > 2.0) z = dist(rng_);
    v = z * std;
  }
  return out;
}

std::vector<double> Initializer::he_normal(std::size_t n, std::size_t fan_in) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> out(n);
  for (double& v : out) v = dist(rng_);
  return out;
}

std::vector<double> Initializer::xavier_uniform(std::size_t n, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> out(n);
  for (double& v : out) v = dist(rng_);
  return out;
}

}  // namespace mvx::models

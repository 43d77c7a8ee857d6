// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvx/kernels.hpp"

namespace mvx::kernels::scalar {

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
          std::size_t ldc, bool accumulate) {
  const bool at = ta == Trans::kYes;
  const bool bt = tb == Trans::kYes;
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (!accumulate) std::fill(crow, crow + n, T{0});
    // i-p-j order keeps the per-element chain ordered over p.
    for (std::size_t p = 0; p < k; ++p) {
      const T av = at ? a[p * lda + i] : a[i * lda + p];
      if (bt) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
      } else {
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template void gemm<float>(Trans, Trans, std::size_t, std::size_t, std::size_t,
                          const float*, std::size_t, const float*, std::size_t,
                          float*, std::size_t, bool);
template void gemm<double>(Trans, Trans, std::size_t, std::size_t, std::size_t,
                           const double*, std::size_t, const double*,
                           std::size_t, double*, std::size_t, bool);

void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void add(std::span<const float> a, std::span<const float> b,
         std::span<float> out) {
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
}

void mul(std::span<const float> a, std::span<const float> b,
         std::span<float> out) {
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
}

void scale(std::span<float> x, float alpha) {
  for (float& v : x) v *= alpha;
}

float dot(std::span<const float> a, std::span<const float> b) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sum(std::span<const float> x) {
  double acc = 0.0;
  for (float v : x) acc += v;
  return acc;
}

double sum_squared_deviation(std::span<const float> x, double mean) {
  double acc = 0.0;
  for (float v : x) {
    const double d = v - mean;
    acc += d * d;
  }
  return acc;
}

float max_value(std::span<const float> x) {
  float best = -std::numeric_limits<float>::infinity();
  for (float v : x) best = std::max(best, v);
  return best;
}

void complex_magnitude(std::span<const float> interleaved,
                       std::span<float> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float re = interleaved[2 * i];
    const float im = interleaved[2 * i + 1];
    out[i] = std::sqrt(re * re + im * im);
  }
}

void softmax_inplace(std::span<float> row) {
  const float peak = max_value(row);
  double total = 0.0;
  for (float& v : row) {
    v = std::exp(v - peak);
    total += v;
  }
  const auto inv = static_cast<float>(1.0 / total);
  for (float& v : row) v *= inv;
}

void gelu(std::span<const float> x, std::span<float> out) {
  constexpr float kInvSqrt2 = 0.70710678118654752f;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = 0.5f * x[i] * (1.0f + std::erf(x[i] * kInvSqrt2));
  }
}

void gelu_backward(std::span<const float> x, std::span<const float> dy,
                   std::span<float> dx) {
  constexpr float kInvSqrt2 = 0.70710678118654752f;
  constexpr float kInvSqrt2Pi = 0.39894228040143268f;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float cdf = 0.5f * (1.0f + std::erf(x[i] * kInvSqrt2));
    const float pdf = kInvSqrt2Pi * std::exp(-0.5f * x[i] * x[i]);
    dx[i] += dy[i] * (cdf + x[i] * pdf);
  }
}

}  // namespace mvx::kernels::scalar

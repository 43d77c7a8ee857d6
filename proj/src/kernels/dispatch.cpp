// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "mvx/kernels.hpp"

namespace mvx::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(MVX_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (const char* env = std::getenv("MVX_KERNELS")) {
    if (std::string(env) == "scalar") return Isa::kScalar;
  }
  return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

inline bool use_avx2() { return current().load(std::memory_order_relaxed) == Isa::kAvx2; }

}  // namespace

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

bool avx2_available() {
  static const bool available = cpu_has_avx2();
  return available;
}

Isa active_isa() { return current().load(); }

void set_isa(Isa isa) {
  if (isa == Isa::kAvx2 && !avx2_available()) {
    throw std::runtime_error("AVX2/FMA kernels are not available on this CPU");
  }
  current().store(isa);
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          const float* a, std::size_t lda, const float* b, std::size_t ldb,
          float* c, std::size_t ldc, bool accumulate) {
  if (use_avx2()) {
    avx2::gemm(ta, tb, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  } else {
    scalar::gemm<float>(ta, tb, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  }
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double* c, std::size_t ldc, bool accumulate) {
  scalar::gemm<double>(ta, tb, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  use_avx2() ? avx2::axpy(alpha, x, y) : scalar::axpy(alpha, x, y);
}

void add(std::span<const float> a, std::span<const float> b,
         std::span<float> out) {
  use_avx2() ? avx2::add(a, b, out) : scalar::add(a, b, out);
}

void mul(std::span<const float> a, std::span<const float> b,
         std::span<float> out) {
  use_avx2() ? avx2::mul(a, b, out) : scalar::mul(a, b, out);
}

void scale(std::span<float> x, float alpha) {
  use_avx2() ? avx2::scale(x, alpha) : scalar::scale(x, alpha);
}

float dot(std::span<const float> a, std::span<const float> b) {
  return use_avx2() ? avx2::dot(a, b) : scalar::dot(a, b);
}

double sum(std::span<const float> x) {
  return use_avx2() ? avx2::sum(x) : scalar::sum(x);
}

double sum_squared_deviation(std::span<const float> x, double mean) {
  return use_avx2() ? avx2::sum_squared_deviation(x, mean)
                    : scalar::sum_squared_deviation(x, mean);
}

float max_value(std::span<const float> x) {
  return use_avx2() ? avx2::max_value(x) : scalar::max_value(x);
}

void complex_magnitude(std::span<const float> interleaved,
                       std::span<float> out) {
  use_avx2() ? avx2::complex_magnitude(interleaved, out)
             : scalar::complex_magnitude(interleaved, out);
}

void softmax_inplace(std::span<float> row) {
  use_avx2() ? avx2::softmax_inplace(row) : scalar::softmax_inplace(row);
}

void gelu(std::span<const float> x, std::span<float> out) {
  use_avx2() ? avx2::gelu(x, out) : scalar::gelu(x, out);
}

void gelu_backward(std::span<const float> x, std::span<const float> dy,
                   std::span<float> dx) {
  use_avx2() ? avx2::gelu_backward(x, dy, dx) : scalar::gelu_backward(x, dy, dx);
}

}  // namespace mvx::kernels

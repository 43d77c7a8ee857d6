// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Data-parallel inner loops. Every kernel has a portable scalar reference in
// mvx::kernels::scalar and, on x86-64, an AVX2/FMA variant in
// mvx::kernels::avx2. The free functions in mvx::kernels route to whichever
// variant was selected at startup (see active_isa()).
//
// GEMM contract shared by all variants: each output element is produced by a
// single left-to-right accumulation chain over k that starts from 0 (or from
// the existing C value when accumulating). The value of C(i, j) therefore does
// not depend on m, on i, or on how the rows were batched.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace mvx::kernels {

enum class Trans : bool { kNo = false, kYes = true };

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

/// True when the CPU and the build both support the AVX2/FMA variants.
bool avx2_available();

/// The variant currently used by the dispatching entry points. Defaults to the
/// best available one; MVX_KERNELS=scalar in the environment forces scalar.
Isa active_isa();

/// Overrides the dispatch choice. Throws std::runtime_error when asking for an
/// ISA that is not available.
void set_isa(Isa isa);

/// C[m,n] = (accumulate ? C : 0) + op(A)[m,k] * op(B)[k,n], row-major.
/// op(A)(i,p) is a[i*lda + p] for kNo and a[p*lda + i] for kYes; same for B.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          const float* a, std::size_t lda, const float* b, std::size_t ldb,
          float* c, std::size_t ldc, bool accumulate);

// Double precision always runs the reference path (gradient checks only).
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double* c, std::size_t ldc, bool accumulate);

/// y += alpha * x
void axpy(float alpha, std::span<const float> x, std::span<float> y);
/// out = a + b
void add(std::span<const float> a, std::span<const float> b,
         std::span<float> out);
/// out = a * b (elementwise)
void mul(std::span<const float> a, std::span<const float> b,
         std::span<float> out);
/// x *= alpha
void scale(std::span<float> x, float alpha);
/// sum(a * b) accumulated in float32.
float dot(std::span<const float> a, std::span<const float> b);
/// Sum with float64 accumulation.
double sum(std::span<const float> x);
/// Sum of (x - mean)^2 with float64 accumulation.
double sum_squared_deviation(std::span<const float> x, double mean);
/// Largest element; -inf for an empty span.
float max_value(std::span<const float> x);
/// out[i] = |re + i*im| for interleaved (re, im) pairs; out.size() pairs.
void complex_magnitude(std::span<const float> interleaved,
                       std::span<float> out);
/// In-place softmax of one row; the normalizer is accumulated in float64.
/// The AVX2 variant uses a polynomial exp (relative error below 2e-7).
void softmax_inplace(std::span<float> row);
/// out = 0.5 x (1 + erf(x / sqrt 2)). The AVX2 variant approximates erf
/// with absolute error below 2e-7.
void gelu(std::span<const float> x, std::span<float> out);
/// dx += dy * gelu'(x)
void gelu_backward(std::span<const float> x, std::span<const float> dy,
                   std::span<float> dx);

namespace scalar {

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
          std::size_t ldc, bool accumulate);

void axpy(float alpha, std::span<const float> x, std::span<float> y);
void add(std::span<const float> a, std::span<const float> b,
         std::span<float> out);
void mul(std::span<const float> a, std::span<const float> b,
         std::span<float> out);
void scale(std::span<float> x, float alpha);
float dot(std::span<const float> a, std::span<const float> b);
double sum(std::span<const float> x);
double sum_squared_deviation(std::span<const float> x, double mean);
float max_value(std::span<const float> x);
void complex_magnitude(std::span<const float> interleaved,
                       std::span<float> out);
/// In-place softmax of one row; the normalizer is accumulated in float64.
void softmax_inplace(std::span<float> row);
/// out = 0.5 x (1 + erf(x / sqrt 2))
void gelu(std::span<const float> x, std::span<float> out);
/// dx += dy * gelu'(x)
void gelu_backward(std::span<const float> x, std::span<const float> dy,
                   std::span<float> dx);

}  // namespace scalar

namespace avx2 {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          const float* a, std::size_t lda, const float* b, std::size_t ldb,
          float* c, std::size_t ldc, bool accumulate);
void axpy(float alpha, std::span<const float> x, std::span<float> y);
void add(std::span<const float> a, std::span<const float> b,
         std::span<float> out);
void mul(std::span<const float> a, std::span<const float> b,
         std::span<float> out);
void scale(std::span<float> x, float alpha);
float dot(std::span<const float> a, std::span<const float> b);
double sum(std::span<const float> x);
double sum_squared_deviation(std::span<const float> x, double mean);
float max_value(std::span<const float> x);
void complex_magnitude(std::span<const float> interleaved,
                       std::span<float> out);
/// In-place softmax of one row; the normalizer is accumulated in float64.
void softmax_inplace(std::span<float> row);
/// out = 0.5 x (1 + erf(x / sqrt 2))
void gelu(std::span<const float> x, std::span<float> out);
/// dx += dy * gelu'(x)
void gelu_backward(std::span<const float> x, std::span<const float> dy,
                   std::span<float> dx);

}  // namespace avx2

}  // namespace mvx::kernels

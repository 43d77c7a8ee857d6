// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Built with -mavx2 -mfma. Nothing in here may run before dispatch.cpp has
// confirmed CPU support.

#include "mvx/kernels.hpp"

#if defined(MVX_HAVE_AVX2_TU)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <vector>

namespace mvx::kernels::avx2 {
namespace {

constexpr std::size_t kMR = 6;
constexpr std::size_t kNR = 16;
constexpr std::size_t kKC = 256;
constexpr std::size_t kNC = 512;

// Lane masks for partial 16-wide column panels.
alignas(32) constexpr std::int32_t kMaskTable[24] = {
    -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1,
    -1, -1, -1, -1, 0,  0,  0,  0,  0,  0,  0,  0};

inline __m256i lane_mask(std::size_t active) {
  // active in [0, 8]
  return _mm256_loadu_si256(
      reinterpret_cast<const __m256i*>(kMaskTable + 16 - active));
}

struct PanelMasks {
  __m256i lo;
  __m256i hi;
  explicit PanelMasks(std::size_t cols)
      : lo(lane_mask(std::min<std::size_t>(cols, 8))),
        hi(lane_mask(cols > 8 ? cols - 8 : 0)) {}
};

// One MR x 16 register tile. Every lane follows acc = fma(a, b, acc) over p in
// order, which is what makes results independent of row position.
template <std::size_t R>
void micro_kernel(std::size_t kc, const float* apack, const float* panel,
                  float* c, std::size_t ldc, std::size_t cols, bool load_c) {
  __m256 acc[R][2];
  const bool full = cols == kNR;
  const PanelMasks masks(cols);
#pragma GCC unroll 6
  for (std::size_t r = 0; r < R; ++r) {
    if (!load_c) {
      acc[r][0] = _mm256_setzero_ps();
      acc[r][1] = _mm256_setzero_ps();
    } else if (full) {
      acc[r][0] = _mm256_loadu_ps(c + r * ldc);
      acc[r][1] = _mm256_loadu_ps(c + r * ldc + 8);
    } else {
      acc[r][0] = _mm256_maskload_ps(c + r * ldc, masks.lo);
      acc[r][1] = _mm256_maskload_ps(c + r * ldc + 8, masks.hi);
    }
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_load_ps(panel + p * kNR);
    const __m256 b1 = _mm256_load_ps(panel + p * kNR + 8);
#pragma GCC unroll 6
    for (std::size_t r = 0; r < R; ++r) {
      const __m256 av = _mm256_broadcast_ss(apack + p * kMR + r);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
  }
#pragma GCC unroll 6
  for (std::size_t r = 0; r < R; ++r) {
    if (full) {
      _mm256_storeu_ps(c + r * ldc, acc[r][0]);
      _mm256_storeu_ps(c + r * ldc + 8, acc[r][1]);
    } else {
      _mm256_maskstore_ps(c + r * ldc, masks.lo, acc[r][0]);
      _mm256_maskstore_ps(c + r * ldc + 8, masks.hi, acc[r][1]);
    }
  }
}

using MicroFn = void (*)(std::size_t, const float*, const float*, float*,
                         std::size_t, std::size_t, bool);

constexpr MicroFn kMicro[kMR + 1] = {nullptr,          micro_kernel<1>,
                                     micro_kernel<2>,  micro_kernel<3>,
                                     micro_kernel<4>,  micro_kernel<5>,
                                     micro_kernel<6>};

struct AlignedBuffer {
  float* data = nullptr;
  std::size_t capacity = 0;
  ~AlignedBuffer() { std::free(data); }
  float* reserve(std::size_t n) {
    if (n > capacity) {
      std::free(data);
      const std::size_t bytes = ((n * sizeof(float) + 63) / 64) * 64;
      data = static_cast<float*>(std::aligned_alloc(64, bytes));
      capacity = bytes / sizeof(float);
    }
    return data;
  }
};

// Packs op(B)[p0:p0+kc, j0:j0+nc] into zero-padded 16-column panels.
void pack_b(bool bt, const float* b, std::size_t ldb, std::size_t p0,
            std::size_t kc, std::size_t j0, std::size_t nc, float* out) {
  const std::size_t panels = (nc + kNR - 1) / kNR;
  for (std::size_t q = 0; q < panels; ++q) {
    float* dst = out + q * kc * kNR;
    const std::size_t jb = j0 + q * kNR;
    const std::size_t cols = std::min(kNR, nc - q * kNR);
    for (std::size_t p = 0; p < kc; ++p) {
      float* row = dst + p * kNR;
      if (!bt) {
        const float* src = b + (p0 + p) * ldb + jb;
        std::memcpy(row, src, cols * sizeof(float));
      } else {
        for (std::size_t j = 0; j < cols; ++j) row[j] = b[(jb + j) * ldb + p0 + p];
      }
      for (std::size_t j = cols; j < kNR; ++j) row[j] = 0.0f;
    }
  }
}

// Interleaves op(A)[i0:i0+rows, p0:p0+kc] as out[p * kMR + r].
void pack_a(bool at, const float* a, std::size_t lda, std::size_t i0,
            std::size_t rows, std::size_t p0, std::size_t kc, float* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t i = i0 + r;
    if (at) {
      for (std::size_t p = 0; p < kc; ++p) out[p * kMR + r] = a[(p0 + p) * lda + i];
    } else {
      const float* src = a + i * lda + p0;
      for (std::size_t p = 0; p < kc; ++p) out[p * kMR + r] = src[p];
    }
  }
}

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          const float* a, std::size_t lda, const float* b, std::size_t ldb,
          float* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0f);
    }
    return;
  }
  const bool at = ta == Trans::kYes;
  const bool bt = tb == Trans::kYes;
  thread_local AlignedBuffer packed;
  thread_local AlignedBuffer packed_a;
  float* pa = packed_a.reserve(kKC * kMR);
  for (std::size_t j0 = 0; j0 < n; j0 += kNC) {
    const std::size_t nc = std::min(kNC, n - j0);
    const std::size_t panels = (nc + kNR - 1) / kNR;
    for (std::size_t p0 = 0; p0 < k; p0 += kKC) {
      const std::size_t kc = std::min(kKC, k - p0);
      float* pb = packed.reserve(panels * kc * kNR);
      pack_b(bt, b, ldb, p0, kc, j0, nc, pb);
      const bool load_c = accumulate || p0 > 0;
      for (std::size_t i0 = 0; i0 < m; i0 += kMR) {
        const std::size_t rows = std::min(kMR, m - i0);
        pack_a(at, a, lda, i0, rows, p0, kc, pa);
        for (std::size_t q = 0; q < panels; ++q) {
          const std::size_t cols = std::min(kNR, nc - q * kNR);
          kMicro[rows](kc, pa, pb + q * kc * kNR, c + i0 * ldc + j0 + q * kNR,
                       ldc, cols, load_c);
        }
      }
    }
  }
}

void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  const std::size_t n = x.size();
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 r = _mm256_fmadd_ps(va, _mm256_loadu_ps(x.data() + i),
                                     _mm256_loadu_ps(y.data() + i));
    _mm256_storeu_ps(y.data() + i, r);
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void add(std::span<const float> a, std::span<const float> b,
         std::span<float> out) {
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out.data() + i, _mm256_add_ps(_mm256_loadu_ps(a.data() + i),
                                                   _mm256_loadu_ps(b.data() + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(std::span<const float> a, std::span<const float> b,
         std::span<float> out) {
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out.data() + i, _mm256_mul_ps(_mm256_loadu_ps(a.data() + i),
                                                   _mm256_loadu_ps(b.data() + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(std::span<float> x, float alpha) {
  const std::size_t n = x.size();
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(x.data() + i, _mm256_mul_ps(va, _mm256_loadu_ps(x.data() + i)));
  }
  for (; i < n; ++i) x[i] *= alpha;
}

namespace {

inline double hsum(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

}  // namespace

float dot(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a.data() + i), _mm256_loadu_ps(b.data() + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a.data() + i + 8), _mm256_loadu_ps(b.data() + i + 8), acc1);
  }
  if (i < n) {
    const std::size_t rest = n - i;
    const __m256i m0 = lane_mask(std::min<std::size_t>(rest, 8));
    acc0 = _mm256_fmadd_ps(_mm256_maskload_ps(a.data() + i, m0), _mm256_maskload_ps(b.data() + i, m0), acc0);
    if (rest > 8) {
      const __m256i m1 = lane_mask(rest - 8);
      acc1 = _mm256_fmadd_ps(_mm256_maskload_ps(a.data() + i + 8, m1),
                             _mm256_maskload_ps(b.data() + i + 8, m1), acc1);
    }
  }
  const __m256 v = _mm256_add_ps(acc0, acc1);
  __m128 h = _mm_add_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  h = _mm_add_ps(h, _mm_movehl_ps(h, h));
  h = _mm_add_ss(h, _mm_shuffle_ps(h, h, 1));
  return _mm_cvtss_f32(h);
}

double sum(std::span<const float> x) {
  const std::size_t n = x.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x.data() + i);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  double total = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) total += x[i];
  return total;
}

double sum_squared_deviation(std::span<const float> x, double mean) {
  const std::size_t n = x.size();
  const __m256d vm = _mm256_set1_pd(mean);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x.data() + i);
    const __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(v)), vm);
    const __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)), vm);
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  double total = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = x[i] - mean;
    total += d * d;
  }
  return total;
}

float max_value(std::span<const float> x) {
  const std::size_t n = x.size();
  float best = -std::numeric_limits<float>::infinity();
  std::size_t i = 0;
  if (n >= 8) {
    __m256 vb = _mm256_set1_ps(best);
    for (; i + 8 <= n; i += 8) vb = _mm256_max_ps(vb, _mm256_loadu_ps(x.data() + i));
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, vb);
    for (float v : lanes) best = std::max(best, v);
  }
  for (; i < n; ++i) best = std::max(best, x[i]);
  return best;
}

void complex_magnitude(std::span<const float> interleaved,
                       std::span<float> out) {
  const std::size_t n = out.size();
  const float* src = interleaved.data();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    // Two loads cover 8 (re, im) pairs; hadd of squares gives re^2+im^2 in
    // lane order 0 1 4 5 2 3 6 7, which the permute restores.
    const __m256 v0 = _mm256_loadu_ps(src + 2 * i);
    const __m256 v1 = _mm256_loadu_ps(src + 2 * i + 8);
    const __m256 s = _mm256_hadd_ps(_mm256_mul_ps(v0, v0), _mm256_mul_ps(v1, v1));
    const __m256 ordered = _mm256_castpd_ps(
        _mm256_permute4x64_pd(_mm256_castps_pd(s), _MM_SHUFFLE(3, 1, 2, 0)));
    _mm256_storeu_ps(out.data() + i, _mm256_sqrt_ps(ordered));
  }
  for (; i < n; ++i) {
    const float re = src[2 * i];
    const float im = src[2 * i + 1];
    out[i] = std::sqrt(re * re + im * im);
  }
}

namespace {

// Cephes-style expf: range reduction by ln 2, degree-5 polynomial.
inline __m256 exp_ps(__m256 x) {
  x = _mm256_min_ps(_mm256_max_ps(x, _mm256_set1_ps(-87.0f)), _mm256_set1_ps(88.0f));
  const __m256 fx = _mm256_round_ps(_mm256_mul_ps(x, _mm256_set1_ps(1.44269504088896341f)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(0.693359375f), x);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(-2.12194440e-4f), x);
  __m256 p = _mm256_set1_ps(1.9875691500e-4f);
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(1.3981999507e-3f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(8.3334519073e-3f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(4.1665795894e-2f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(1.6666665459e-1f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(5.0000001201e-1f));
  const __m256 x2 = _mm256_mul_ps(x, x);
  const __m256 y = _mm256_add_ps(_mm256_fmadd_ps(p, x2, x), _mm256_set1_ps(1.0f));
  const __m256i e = _mm256_slli_epi32(_mm256_add_epi32(_mm256_cvtps_epi32(fx), _mm256_set1_epi32(127)), 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(e));
}

// Abramowitz-Stegun 7.1.26 rational approximation of erf.
inline __m256 erf_ps(__m256 x) {
  const __m256 sign = _mm256_and_ps(x, _mm256_set1_ps(-0.0f));
  const __m256 ax = _mm256_andnot_ps(_mm256_set1_ps(-0.0f), x);
  const __m256 t = _mm256_div_ps(_mm256_set1_ps(1.0f),
                                 _mm256_fmadd_ps(_mm256_set1_ps(0.3275911f), ax, _mm256_set1_ps(1.0f)));
  __m256 p = _mm256_set1_ps(1.061405429f);
  p = _mm256_fmadd_ps(p, t, _mm256_set1_ps(-1.453152027f));
  p = _mm256_fmadd_ps(p, t, _mm256_set1_ps(1.421413741f));
  p = _mm256_fmadd_ps(p, t, _mm256_set1_ps(-0.284496736f));
  p = _mm256_fmadd_ps(p, t, _mm256_set1_ps(0.254829592f));
  p = _mm256_mul_ps(p, t);
  const __m256 e = exp_ps(_mm256_sub_ps(_mm256_setzero_ps(), _mm256_mul_ps(ax, ax)));
  const __m256 y = _mm256_fnmadd_ps(p, e, _mm256_set1_ps(1.0f));
  return _mm256_or_ps(y, sign);
}

__m256 gelu_ps(__m256 v) {
  const __m256 arg = _mm256_mul_ps(v, _mm256_set1_ps(0.70710678118654752f));
  const __m256 cdf = _mm256_mul_ps(_mm256_set1_ps(0.5f), _mm256_add_ps(_mm256_set1_ps(1.0f), erf_ps(arg)));
  return _mm256_mul_ps(v, cdf);
}

__m256 gelu_grad_ps(__m256 v) {
  const __m256 arg = _mm256_mul_ps(v, _mm256_set1_ps(0.70710678118654752f));
  const __m256 cdf = _mm256_mul_ps(_mm256_set1_ps(0.5f), _mm256_add_ps(_mm256_set1_ps(1.0f), erf_ps(arg)));
  const __m256 g = exp_ps(_mm256_mul_ps(_mm256_set1_ps(-0.5f), _mm256_mul_ps(v, v)));
  const __m256 pdf = _mm256_mul_ps(_mm256_set1_ps(0.39894228040143268f), g);
  return _mm256_fmadd_ps(v, pdf, cdf);
}

}  // namespace

void softmax_inplace(std::span<float> row) {
  const std::size_t n = row.size();
  const __m256 vp = _mm256_set1_ps(max_value(row));
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = exp_ps(_mm256_sub_ps(_mm256_loadu_ps(row.data() + i), vp));
    _mm256_storeu_ps(row.data() + i, v);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  double total = hsum(_mm256_add_pd(acc0, acc1));
  if (i < n) {
    const std::size_t rest = n - i;
    const __m256i mask = lane_mask(rest);
    const __m256 v = exp_ps(_mm256_sub_ps(_mm256_maskload_ps(row.data() + i, mask), vp));
    _mm256_maskstore_ps(row.data() + i, mask, v);
    for (std::size_t j = 0; j < rest; ++j) total += row[i + j];
  }
  scale(row, static_cast<float>(1.0 / total));
}

void gelu(std::span<const float> x, std::span<float> out) {
  const std::size_t n = x.size();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(out.data() + i, gelu_ps(_mm256_loadu_ps(x.data() + i)));
  if (i < n) {
    const __m256i mask = lane_mask(n - i);
    _mm256_maskstore_ps(out.data() + i, mask, gelu_ps(_mm256_maskload_ps(x.data() + i, mask)));
  }
}

void gelu_backward(std::span<const float> x, std::span<const float> dy,
                   std::span<float> dx) {
  const std::size_t n = x.size();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = gelu_grad_ps(_mm256_loadu_ps(x.data() + i));
    _mm256_storeu_ps(dx.data() + i,
                     _mm256_fmadd_ps(_mm256_loadu_ps(dy.data() + i), d, _mm256_loadu_ps(dx.data() + i)));
  }
  if (i < n) {
    const __m256i mask = lane_mask(n - i);
    const __m256 d = gelu_grad_ps(_mm256_maskload_ps(x.data() + i, mask));
    const __m256 r = _mm256_fmadd_ps(_mm256_maskload_ps(dy.data() + i, mask), d,
                                     _mm256_maskload_ps(dx.data() + i, mask));
    _mm256_maskstore_ps(dx.data() + i, mask, r);
  }
}

}  // namespace mvx::kernels::avx2

#else  // !MVX_HAVE_AVX2_TU

#include <stdexcept>

namespace mvx::kernels::avx2 {
namespace {
[[noreturn]] void unavailable() { throw std::runtime_error("AVX2 kernels not built"); }
}  // namespace
void gemm(Trans, Trans, std::size_t, std::size_t, std::size_t, const float*,
          std::size_t, const float*, std::size_t, float*, std::size_t, bool) {
  unavailable();
}
void axpy(float, std::span<const float>, std::span<float>) { unavailable(); }
void add(std::span<const float>, std::span<const float>, std::span<float>) { unavailable(); }
void mul(std::span<const float>, std::span<const float>, std::span<float>) { unavailable(); }
void scale(std::span<float>, float) { unavailable(); }
float dot(std::span<const float>, std::span<const float>) { unavailable(); }
double sum(std::span<const float>) { unavailable(); }
double sum_squared_deviation(std::span<const float>, double) { unavailable(); }
float max_value(std::span<const float>) { unavailable(); }
void complex_magnitude(std::span<const float>, std::span<float>) { unavailable(); }
void softmax_inplace(std::span<float>) { unavailable(); }
void gelu(std::span<const float>, std::span<float>) { unavailable(); }
void gelu_backward(std::span<const float>, std::span<const float>, std::span<float>) { unavailable(); }
}  // namespace mvx::kernels::avx2

#endif

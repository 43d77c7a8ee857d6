// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <type_traits>

#include "mvx/error.hpp"
#include "mvx/kernels.hpp"

namespace mvx::nn {
namespace {

using kernels::Trans;

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  kernels::gemm(ta, tb, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

// dst += src
template <typename T>
void accumulate(std::span<T> dst, std::span<const T> src) {
  if constexpr (std::is_same_v<T, float>) {
    kernels::axpy(1.0f, src, dst);
  } else {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  }
}

template <typename T>
double sum_f64(std::span<const T> x) {
  if constexpr (std::is_same_v<T, float>) {
    return kernels::sum(x);
  } else {
    double acc = 0.0;
    for (T v : x) acc += v;
    return acc;
  }
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

template <typename T>
Node<T>* parent(Node<T>& self, std::size_t i) {
  return self.parents[i].get();
}

std::size_t last_dim(const Shape& s) {
  if (s.empty()) throw ShapeError("op needs a tensor of rank >= 1");
  return s.back();
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  gemm<T>(Trans::kNo, Trans::kNo, m, n, k, a.data().data(), k, b.data().data(), n, out.data(), n, false);
  return detail::make_result<T>({m, n}, std::move(out), {a, b}, [m, n, k](Node<T>& self) {
    Node<T>* pa = parent(self, 0);
    Node<T>* pb = parent(self, 1);
    if (pa->requires_grad) {
      gemm<T>(Trans::kNo, Trans::kYes, m, k, n, self.grad.data(), n, pb->value.data(), n,
              pa->ensure_grad().data(), k, true);
    }
    if (pb->requires_grad) {
      gemm<T>(Trans::kYes, Trans::kNo, k, n, m, pa->value.data(), k, self.grad.data(), n,
              pb->ensure_grad().data(), n, true);
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  const std::size_t in = last_dim(x.shape());
  if (w.rank() != 2 || w.dim(0) != in) shape_mismatch("linear", x.shape(), w.shape());
  const std::size_t out_dim = w.dim(1);
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != out_dim)) shape_mismatch("linear(bias)", w.shape(), bias.shape());
  const std::size_t rows = x.numel() / in;
  std::vector<T> out(rows * out_dim);
  if (has_bias) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(bias.data().begin(), bias.data().end(), out.begin() + static_cast<std::ptrdiff_t>(r * out_dim));
    }
  }
  gemm<T>(Trans::kNo, Trans::kNo, rows, out_dim, in, x.data().data(), in, w.data().data(), out_dim,
          out.data(), out_dim, has_bias);
  Shape shape = x.shape();
  shape.back() = out_dim;
  std::vector<Tensor<T>> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return detail::make_result<T>(std::move(shape), std::move(out), std::move(inputs),
                                [rows, in, out_dim, has_bias](Node<T>& self) {
    Node<T>* px = parent(self, 0);
    Node<T>* pw = parent(self, 1);
    const T* dy = self.grad.data();
    if (px->requires_grad) {
      gemm<T>(Trans::kNo, Trans::kYes, rows, in, out_dim, dy, out_dim, pw->value.data(), out_dim,
              px->ensure_grad().data(), in, true);
    }
    if (pw->requires_grad) {
      gemm<T>(Trans::kYes, Trans::kNo, in, out_dim, rows, px->value.data(), in, dy, out_dim,
              pw->ensure_grad().data(), out_dim, true);
    }
    if (has_bias) {
      Node<T>* pb = parent(self, 2);
      if (pb->requires_grad) {
        auto& db = pb->ensure_grad();
        std::vector<double> acc(out_dim, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < out_dim; ++j) acc[j] += dy[r * out_dim + j];
        }
        for (std::size_t j = 0; j < out_dim; ++j) db[j] += static_cast<T>(acc[j]);
      }
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("add", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      Node<T>* p = parent(self, i);
      if (p->requires_grad) accumulate<T>(p->ensure_grad(), self.grad);
    }
  });
}

template <typename T>
Tensor<T> add_broadcast(const Tensor<T>& x, const Tensor<T>& y) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    shape_mismatch("add_broadcast", xs, ys);
  }
  const std::size_t inner = y.numel();
  const std::size_t outer = x.numel() / inner;
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] = x.data()[o * inner + i] + y.data()[i];
  }
  return detail::make_result<T>(xs, std::move(out), {x, y}, [outer, inner](Node<T>& self) {
    Node<T>* px = parent(self, 0);
    Node<T>* py = parent(self, 1);
    if (px->requires_grad) accumulate<T>(px->ensure_grad(), self.grad);
    if (py->requires_grad) {
      auto& dy = py->ensure_grad();
      std::vector<double> acc(inner, 0.0);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) acc[i] += self.grad[o * inner + i];
      }
      for (std::size_t i = 0; i < inner; ++i) dy[i] += static_cast<T>(acc[i]);
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("mul", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>* pa = parent(self, 0);
    Node<T>* pb = parent(self, 1);
    if (pa->requires_grad) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v *= factor;
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [factor](Node<T>& self) {
    Node<T>* pa = parent(self, 0);
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  const T total = static_cast<T>(sum_f64<T>(a.data()));
  return detail::make_result<T>({1}, {total}, {a}, [](Node<T>& self) {
    Node<T>* pa = parent(self, 0);
    auto& g = pa->ensure_grad();
    const T d = self.grad[0];
    for (T& v : g) v += d;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const double n = static_cast<double>(a.numel());
  const T value = static_cast<T>(sum_f64<T>(a.data()) / n);
  return detail::make_result<T>({1}, {value}, {a}, [n](Node<T>& self) {
    Node<T>* pa = parent(self, 0);
    auto& g = pa->ensure_grad();
    const T d = static_cast<T>(self.grad[0] / n);
    for (T& v : g) v += d;
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T{0} ? a.data()[i] : T{0};
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [](Node<T>& self) {
    Node<T>* pa = parent(self, 0);
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (pa->value[i] > T{0}) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T kInvSqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  std::vector<T> out(a.numel());
  if constexpr (std::is_same_v<T, float>) {
    kernels::gelu(a.data(), out);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const T x = a.data()[i];
      out[i] = T{0.5} * x * (T{1} + std::erf(x * kInvSqrt2));
    }
  }
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [](Node<T>& self) {
    constexpr T kInvSqrt2Pi = static_cast<T>(1.0 / std::sqrt(2.0 * std::numbers::pi));
    Node<T>* pa = parent(self, 0);
    auto& g = pa->ensure_grad();
    if constexpr (std::is_same_v<T, float>) {
      kernels::gelu_backward(pa->value, self.grad, g);
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = pa->value[i];
      const T cdf = T{0.5} * (T{1} + std::erf(x * kInvSqrt2));
      const T pdf = kInvSqrt2Pi * std::exp(T{-0.5} * x * x);
      g[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  const std::size_t d = last_dim(x.shape());
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) shape_mismatch("layernorm", x.shape(), gamma.shape());
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  const T* xv = x.data().data();
  const T* gv = gamma.data().data();
  const T* bv = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<const T> row(xv + r * d, d);
    const double mu = sum_f64<T>(row) / static_cast<double>(d);
    double var = 0.0;
    if constexpr (std::is_same_v<T, float>) {
      var = kernels::sum_squared_deviation(row, mu) / static_cast<double>(d);
    } else {
      for (T v : row) var += (v - mu) * (v - mu);
      var /= static_cast<double>(d);
    }
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<T>(is);
    for (std::size_t j = 0; j < d; ++j) {
      const T h = static_cast<T>((row[j] - mu) * is);
      xhat[r * d + j] = h;
      out[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return detail::make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
                                [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
    Node<T>* px = parent(self, 0);
    Node<T>* pg = parent(self, 1);
    Node<T>* pb = parent(self, 2);
    const T* dy = self.grad.data();
    if (pg->requires_grad || pb->requires_grad) {
      std::vector<double> dg(d, 0.0), db(d, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          dg[j] += dy[r * d + j] * xhat[r * d + j];
          db[j] += dy[r * d + j];
        }
      }
      if (pg->requires_grad) {
        auto& g = pg->ensure_grad();
        for (std::size_t j = 0; j < d; ++j) g[j] += static_cast<T>(dg[j]);
      }
      if (pb->requires_grad) {
        auto& g = pb->ensure_grad();
        for (std::size_t j = 0; j < d; ++j) g[j] += static_cast<T>(db[j]);
      }
    }
    if (px->requires_grad) {
      auto& gx = px->ensure_grad();
      const T* gamma_v = pg->value.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = static_cast<double>(dy[r * d + j]) * gamma_v[j];
          mean_dh += dh;
          mean_dh_h += dh * xhat[r * d + j];
        }
        mean_dh /= static_cast<double>(d);
        mean_dh_h /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = static_cast<double>(dy[r * d + j]) * gamma_v[j];
          gx[r * d + j] += static_cast<T>(inv_std[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h));
        }
      }
    }
  });
}

namespace {

// Softmax of `len` values spaced `stride` apart, float64 normalizer.
template <typename T>
void softmax_strided(const T* in, T* out, std::size_t len, std::size_t stride) {
  if constexpr (std::is_same_v<T, float>) {
    if (stride == 1) {
      if (in != out) std::copy_n(in, len, out);
      kernels::softmax_inplace(std::span<float>(out, len));
      return;
    }
  }
  T peak = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < len; ++i) peak = std::max(peak, in[i * stride]);
  double total = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const T e = std::exp(in[i * stride] - peak);
    out[i * stride] = e;
    total += e;
  }
  const T inv = static_cast<T>(1.0 / total);
  for (std::size_t i = 0; i < len; ++i) out[i * stride] *= inv;
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int rank = static_cast<int>(x.rank());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("softmax: axis out of range for shape " + shape_str(x.shape()));
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= s[static_cast<std::size_t>(i)];
  const std::size_t len = s[static_cast<std::size_t>(axis)];
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      softmax_strided(x.data().data() + base, out.data() + base, len, inner);
    }
  }
  return detail::make_result<T>(s, out, {x}, [outer, inner, len, y = out](Node<T>& self) {
    Node<T>* px = parent(self, 0);
    auto& g = px->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += static_cast<double>(self.grad[base + k * inner]) * y[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t idx = base + k * inner;
          g[idx] += static_cast<T>(y[idx] * (self.grad[idx] - dot));
        }
      }
    }
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  std::vector<T> probs(logits.numel());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int t = targets[b];
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw ShapeError("cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(classes) + ")");
    }
    const T* row = logits.data().data() + b * classes;
    T peak = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < classes; ++c) peak = std::max(peak, row[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) total += std::exp(static_cast<double>(row[c] - peak));
    const double lse = std::log(total) + peak;
    loss += lse - row[t];
    for (std::size_t c = 0; c < classes; ++c) {
      probs[b * classes + c] = static_cast<T>(std::exp(static_cast<double>(row[c]) - lse));
    }
  }
  loss /= static_cast<double>(batch);
  std::vector<int> tgt(targets.begin(), targets.end());
  return detail::make_result<T>({1}, {static_cast<T>(loss)}, {logits},
                                [batch, classes, probs = std::move(probs), tgt = std::move(tgt)](Node<T>& self) {
    Node<T>* pl = parent(self, 0);
    auto& g = pl->ensure_grad();
    const T d = static_cast<T>(self.grad[0] / static_cast<double>(batch));
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < classes; ++c) {
        const T onehot = static_cast<int>(c) == tgt[b] ? T{1} : T{0};
        g[b * classes + c] += d * (probs[b * classes + c] - onehot);
      }
    }
  });
}

namespace {

struct ConvGeom {
  std::size_t n, c, h, w, o, k, pad;
  std::size_t cols() const { return c * k * k; }
  std::size_t hw() const { return h * w; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const auto H = static_cast<std::ptrdiff_t>(g.h);
  const auto W = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* dst = cols + ((ch * g.k + ki) * g.k + kj) * g.hw();
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ki) - static_cast<std::ptrdiff_t>(g.pad);
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(g.pad);
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = y + dy;
          T* row = dst + y * W;
          if (sy < 0 || sy >= H) {
            std::fill(row, row + W, T{0});
            continue;
          }
          const T* src = x + (static_cast<std::ptrdiff_t>(ch) * H + sy) * W;
          for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
            const std::ptrdiff_t sx = xx + dx;
            row[xx] = (sx < 0 || sx >= W) ? T{0} : src[sx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* x) {
  const auto H = static_cast<std::ptrdiff_t>(g.h);
  const auto W = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* src = cols + ((ch * g.k + ki) * g.k + kj) * g.hw();
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ki) - static_cast<std::ptrdiff_t>(g.pad);
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(g.pad);
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          T* dst = x + (static_cast<std::ptrdiff_t>(ch) * H + sy) * W;
          const T* row = src + y * W;
          for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
            const std::ptrdiff_t sx = xx + dx;
            if (sx >= 0 && sx < W) dst[sx] += row[xx];
          }
        }
      }
    }
  }
}

// Thin layers (few input channels) spend most of their time building im2col
// buffers, so they run as row-wise shifted axpy/dot passes over a padded copy.
constexpr std::size_t kDirectConvMaxCols = 36;

template <typename T>
void row_axpy(T alpha, const T* x, std::size_t n, T* y) {
  if constexpr (std::is_same_v<T, float>) {
    kernels::axpy(alpha, std::span<const float>(x, n), std::span<float>(y, n));
  } else {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
  }
}

template <typename T>
T row_dot(const T* a, const T* b, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    return kernels::dot(std::span<const float>(a, n), std::span<const float>(b, n));
  } else {
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
  }
}

template <typename T>
void pad_planes(const T* x, const ConvGeom& g, T* xp) {
  const std::size_t hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad;
  std::fill(xp, xp + g.c * hp * wp, T{0});
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t y = 0; y < g.h; ++y) {
      std::copy_n(x + (ch * g.h + y) * g.w, g.w, xp + (ch * hp + y + g.pad) * wp + g.pad);
    }
  }
}

template <typename T>
void direct_conv_forward(const T* xp, const T* w, const ConvGeom& g, T* out) {
  const std::size_t hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad, kk = g.k * g.k;
  for (std::size_t oc = 0; oc < g.o; ++oc) {
    for (std::size_t y = 0; y < g.h; ++y) {
      T* row = out + oc * g.hw() + y * g.w;
      for (std::size_t ch = 0; ch < g.c; ++ch) {
        const T* wk = w + (oc * g.c + ch) * kk;
        for (std::size_t ki = 0; ki < g.k; ++ki) {
          const T* src = xp + (ch * hp + y + ki) * wp;
          for (std::size_t kj = 0; kj < g.k; ++kj) row_axpy(wk[ki * g.k + kj], src + kj, g.w, row);
        }
      }
    }
  }
}

template <typename T>
void direct_conv_weight_grad(const T* xp, const T* dy, const ConvGeom& g, double* dw) {
  const std::size_t hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad, kk = g.k * g.k;
  for (std::size_t y = 0; y < g.h; ++y) {
    for (std::size_t oc = 0; oc < g.o; ++oc) {
      const T* drow = dy + oc * g.hw() + y * g.w;
      for (std::size_t ch = 0; ch < g.c; ++ch) {
        double* acc = dw + (oc * g.c + ch) * kk;
        for (std::size_t ki = 0; ki < g.k; ++ki) {
          const T* src = xp + (ch * hp + y + ki) * wp;
          for (std::size_t kj = 0; kj < g.k; ++kj) acc[ki * g.k + kj] += row_dot(drow, src + kj, g.w);
        }
      }
    }
  }
}

template <typename T>
void direct_conv_input_grad(const T* w, const T* dy, const ConvGeom& g, T* dxp) {
  const std::size_t hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad, kk = g.k * g.k;
  std::fill(dxp, dxp + g.c * hp * wp, T{0});
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t y = 0; y < g.h; ++y) {
      for (std::size_t oc = 0; oc < g.o; ++oc) {
        const T* drow = dy + oc * g.hw() + y * g.w;
        const T* wk = w + (oc * g.c + ch) * kk;
        for (std::size_t ki = 0; ki < g.k; ++ki) {
          T* dst = dxp + (ch * hp + y + ki) * wp;
          for (std::size_t kj = 0; kj < g.k; ++kj) row_axpy(wk[ki * g.k + kj], drow, g.w, dst + kj);
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t pad) {
  if (x.rank() != 4 || w.rank() != 4 || w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3)) {
    shape_mismatch("conv2d", x.shape(), w.shape());
  }
  const ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), pad};
  if (2 * pad + 1 != g.k) throw ShapeError("conv2d: only 'same' padding (pad = (k-1)/2) is supported");
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{g.o}) shape_mismatch("conv2d(bias)", w.shape(), bias.shape());
  std::vector<T> out(g.n * g.o * g.hw());
  const bool direct = g.cols() <= kDirectConvMaxCols;
  const std::size_t padded = g.c * (g.h + 2 * g.pad) * (g.w + 2 * g.pad);
  if (direct) {
    std::vector<T> xp(padded);
    for (std::size_t s = 0; s < g.n; ++s) {
      pad_planes(x.data().data() + s * g.c * g.hw(), g, xp.data());
      T* dst = out.data() + s * g.o * g.hw();
      for (std::size_t oc = 0; oc < g.o; ++oc) {
        std::fill(dst + oc * g.hw(), dst + (oc + 1) * g.hw(), has_bias ? bias.data()[oc] : T{0});
      }
      direct_conv_forward(xp.data(), w.data().data(), g, dst);
    }
  }
  std::vector<T> cols(direct ? 0 : g.cols() * g.hw());
  for (std::size_t s = 0; s < g.n && !direct; ++s) {
    im2col(x.data().data() + s * g.c * g.hw(), g, cols.data());
    T* dst = out.data() + s * g.o * g.hw();
    if (has_bias) {
      for (std::size_t oc = 0; oc < g.o; ++oc) std::fill(dst + oc * g.hw(), dst + (oc + 1) * g.hw(), bias.data()[oc]);
    }
    gemm<T>(Trans::kNo, Trans::kNo, g.o, g.hw(), g.cols(), w.data().data(), g.cols(), cols.data(), g.hw(), dst,
            g.hw(), has_bias);
  }
  std::vector<Tensor<T>> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return detail::make_result<T>({g.n, g.o, g.h, g.w}, std::move(out), std::move(inputs),
                                [g, has_bias, direct, padded](Node<T>& self) {
    Node<T>* px = parent(self, 0);
    Node<T>* pw = parent(self, 1);
    if (direct) {
      const std::size_t hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad;
      std::vector<T> xp(padded);
      std::vector<double> dw(pw->requires_grad ? pw->value.size() : 0, 0.0);
      for (std::size_t s = 0; s < g.n; ++s) {
        const T* dy = self.grad.data() + s * g.o * g.hw();
        if (pw->requires_grad) {
          pad_planes(px->value.data() + s * g.c * g.hw(), g, xp.data());
          direct_conv_weight_grad(xp.data(), dy, g, dw.data());
        }
        if (px->requires_grad) {
          direct_conv_input_grad(pw->value.data(), dy, g, xp.data());
          T* dx = px->ensure_grad().data() + s * g.c * g.hw();
          for (std::size_t ch = 0; ch < g.c; ++ch) {
            for (std::size_t y = 0; y < g.h; ++y) {
              const T* src = xp.data() + (ch * hp + y + g.pad) * wp + g.pad;
              T* dst = dx + (ch * g.h + y) * g.w;
              for (std::size_t i = 0; i < g.w; ++i) dst[i] += src[i];
            }
          }
        }
      }
      if (pw->requires_grad) {
        auto& gw = pw->ensure_grad();
        for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += static_cast<T>(dw[i]);
      }
    }
    std::vector<T> cols(direct ? 0 : g.cols() * g.hw());
    for (std::size_t s = 0; s < g.n && !direct; ++s) {
      const T* dy = self.grad.data() + s * g.o * g.hw();
      if (pw->requires_grad) {
        im2col(px->value.data() + s * g.c * g.hw(), g, cols.data());
        gemm<T>(Trans::kNo, Trans::kYes, g.o, g.cols(), g.hw(), dy, g.hw(), cols.data(), g.hw(),
                pw->ensure_grad().data(), g.cols(), true);
      }
      if (px->requires_grad) {
        gemm<T>(Trans::kYes, Trans::kNo, g.cols(), g.hw(), g.o, pw->value.data(), g.cols(), dy, g.hw(), cols.data(),
                g.hw(), false);
        col2im_add(cols.data(), g, px->ensure_grad().data() + s * g.c * g.hw());
      }
    }
    if (has_bias) {
      Node<T>* pb = parent(self, 2);
      if (pb->requires_grad) {
        auto& db = pb->ensure_grad();
        for (std::size_t s = 0; s < g.n; ++s) {
          for (std::size_t oc = 0; oc < g.o; ++oc) {
            db[oc] += static_cast<T>(sum_f64<T>(std::span<const T>(self.grad.data() + (s * g.o + oc) * g.hw(), g.hw())));
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t window) {
  if (x.rank() != 4 || window == 0) throw ShapeError("maxpool2d expects [N,C,H,W], got " + shape_str(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / window, ow = w / window;
  if (oh == 0 || ow == 0) throw ShapeError("maxpool2d: input " + shape_str(x.shape()) + " smaller than window");
  std::vector<T> out(planes * oh * ow);
  std::vector<std::uint32_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data().data() + p * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (i * window) * w + j * window;
        for (std::size_t di = 0; di < window; ++di) {
          for (std::size_t dj = 0; dj < window; ++dj) {
            const std::size_t idx = (i * window + di) * w + j * window + dj;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = src[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return detail::make_result<T>({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                                [planes, hw = h * w, ohw = oh * ow, argmax = std::move(argmax)](Node<T>& self) {
    Node<T>* px = parent(self, 0);
    auto& g = px->ensure_grad();
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t o = 0; o < ohw; ++o) g[p * hw + argmax[p * ohw + o]] += self.grad[p * ohw + o];
    }
  });
}

template <typename T>
Tensor<T> attention(const Tensor<T>& qkv, std::size_t heads, std::vector<T>* probs_out) {
  if (qkv.rank() != 3 || heads == 0 || qkv.dim(2) % (3 * heads) != 0) {
    throw ShapeError("attention expects [B, T, 3D] with D divisible by heads, got " + shape_str(qkv.shape()));
  }
  const std::size_t batch = qkv.dim(0), len = qkv.dim(1), d = qkv.dim(2) / 3, dh = d / heads;
  const std::size_t ld = 3 * d;
  const T sc = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<T> out(batch * len * d);
  // Without a backward pass only one head's weights are live at a time.
  const bool keep = probs_out || (grad_enabled() && qkv.requires_grad());
  std::vector<T> probs(keep ? batch * heads * len * len : len * len);
  const T* base = qkv.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const T* q = base + b * len * ld + h * dh;
      const T* k = q + d;
      const T* v = q + 2 * d;
      T* p = probs.data() + (keep ? (b * heads + h) * len * len : 0);
      gemm<T>(Trans::kNo, Trans::kYes, len, len, dh, q, ld, k, ld, p, len, false);
      for (std::size_t r = 0; r < len; ++r) {
        T* row = p + r * len;
        for (std::size_t c = 0; c < len; ++c) row[c] *= sc;
        softmax_strided(row, row, len, 1);
      }
      gemm<T>(Trans::kNo, Trans::kNo, len, dh, len, p, len, v, ld, out.data() + b * len * d + h * dh, d, false);
    }
  }
  if (probs_out) *probs_out = probs;
  if (!keep) return Tensor<T>::from_data({batch, len, d}, std::move(out));
  return detail::make_result<T>({batch, len, d}, std::move(out), {qkv},
                                [batch, len, d, dh, heads, ld, sc, probs = std::move(probs)](Node<T>& self) {
    Node<T>* pq = parent(self, 0);
    auto& gq = pq->ensure_grad();
    std::vector<T> dp(len * len);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = b * len * ld + h * dh;
        const T* q = pq->value.data() + off;
        const T* k = q + d;
        const T* v = q + 2 * d;
        T* dq = gq.data() + off;
        T* dk = dq + d;
        T* dv = dq + 2 * d;
        const T* p = probs.data() + (b * heads + h) * len * len;
        const T* dout = self.grad.data() + b * len * d + h * dh;
        gemm<T>(Trans::kYes, Trans::kNo, len, dh, len, p, len, dout, d, dv, ld, true);
        gemm<T>(Trans::kNo, Trans::kYes, len, len, dh, dout, d, v, ld, dp.data(), len, false);
        for (std::size_t r = 0; r < len; ++r) {
          const T* prow = p + r * len;
          T* drow = dp.data() + r * len;
          double dot = 0.0;
          for (std::size_t c = 0; c < len; ++c) dot += static_cast<double>(prow[c]) * drow[c];
          for (std::size_t c = 0; c < len; ++c) drow[c] = prow[c] * (drow[c] - static_cast<T>(dot)) * sc;
        }
        gemm<T>(Trans::kNo, Trans::kNo, len, dh, len, dp.data(), len, k, ld, dq, ld, true);
        gemm<T>(Trans::kYes, Trans::kNo, len, dh, len, dp.data(), len, q, ld, dk, ld, true);
      }
    }
  });
}

template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) shape_mismatch("concat_last", a.shape(), b.shape());
  const std::size_t rows = a.dim(0), na = a.dim(1), nb = b.dim(1), n = na + nb;
  std::vector<T> out(rows * n);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * na, na, out.data() + r * n);
    std::copy_n(b.data().data() + r * nb, nb, out.data() + r * n + na);
  }
  return detail::make_result<T>({rows, n}, std::move(out), {a, b}, [rows, na, nb, n](Node<T>& self) {
    Node<T>* pa = parent(self, 0);
    Node<T>* pb = parent(self, 1);
    if (pa->requires_grad) {
      auto& g = pa->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < na; ++j) g[r * na + j] += self.grad[r * n + j];
      }
    }
    if (pb->requires_grad) {
      auto& g = pb->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < nb; ++j) g[r * nb + j] += self.grad[r * n + na + j];
      }
    }
  });
}

template <typename T>
Tensor<T> select_token(const Tensor<T>& x, std::size_t index) {
  if (x.rank() != 3 || index >= x.dim(1)) throw ShapeError("select_token: bad index for shape " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), len = x.dim(1), d = x.dim(2);
  std::vector<T> out(batch * d);
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(x.data().data() + (b * len + index) * d, d, out.data() + b * d);
  return detail::make_result<T>({batch, d}, std::move(out), {x}, [batch, len, d, index](Node<T>& self) {
    Node<T>* px = parent(self, 0);
    auto& g = px->ensure_grad();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < d; ++j) g[(b * len + index) * d + j] += self.grad[b * d + j];
    }
  });
}

template <typename T>
Tensor<T> prepend_token(const Tensor<T>& x, const Tensor<T>& token) {
  if (x.rank() != 3 || token.shape() != Shape{x.dim(2)}) shape_mismatch("prepend_token", x.shape(), token.shape());
  const std::size_t batch = x.dim(0), len = x.dim(1), d = x.dim(2);
  std::vector<T> out(batch * (len + 1) * d);
  for (std::size_t b = 0; b < batch; ++b) {
    T* dst = out.data() + b * (len + 1) * d;
    std::copy_n(token.data().data(), d, dst);
    std::copy_n(x.data().data() + b * len * d, len * d, dst + d);
  }
  return detail::make_result<T>({batch, len + 1, d}, std::move(out), {x, token}, [batch, len, d](Node<T>& self) {
    Node<T>* px = parent(self, 0);
    Node<T>* pt = parent(self, 1);
    if (px->requires_grad) {
      auto& g = px->ensure_grad();
      for (std::size_t b = 0; b < batch; ++b) {
        const T* src = self.grad.data() + (b * (len + 1) + 1) * d;
        for (std::size_t i = 0; i < len * d; ++i) g[b * len * d + i] += src[i];
      }
    }
    if (pt->requires_grad) {
      auto& g = pt->ensure_grad();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[b * (len + 1) * d + j];
      }
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) shape_mismatch("reshape", x.shape(), shape);
  std::vector<T> out(x.data().begin(), x.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), {x}, [](Node<T>& self) {
    Node<T>* px = parent(self, 0);
    accumulate<T>(px->ensure_grad(), self.grad);
  });
}

#define MVX_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> add_broadcast(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                            \
  template Tensor<T> sum(const Tensor<T>&);                                                 \
  template Tensor<T> mean(const Tensor<T>&);                                                \
  template Tensor<T> relu(const Tensor<T>&);                                                \
  template Tensor<T> gelu(const Tensor<T>&);                                                \
  template Tensor<T> layernorm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double); \
  template Tensor<T> softmax(const Tensor<T>&, int);                                        \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                 \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t); \
  template Tensor<T> maxpool2d(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> attention(const Tensor<T>&, std::size_t, std::vector<T>*);             \
  template Tensor<T> concat_last(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> select_token(const Tensor<T>&, std::size_t);                           \
  template Tensor<T> prepend_token(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);

MVX_INSTANTIATE_OPS(float)
MVX_INSTANTIATE_OPS(double)

#undef MVX_INSTANTIATE_OPS

}  // namespace mvx::nn

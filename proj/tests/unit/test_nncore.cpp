// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "doctest.h"
#include "mvx/error.hpp"
#include "mvx/nn/adam.hpp"
#include "mvx/nn/ops.hpp"

using namespace mvx;
using namespace mvx::nn;
using mvx::testing::grad_check;
using mvx::testing::project;
using mvx::testing::random_tensor;

namespace {

// Direct convolution in double, stride 1, zero padding.
std::vector<double> naive_conv(const std::vector<double>& x, const std::vector<double>& w,
                               const std::vector<double>& b, std::size_t n, std::size_t c, std::size_t h,
                               std::size_t wd, std::size_t o, std::size_t k, std::size_t pad) {
  const std::size_t oh = h + 2 * pad - k + 1, ow = wd + 2 * pad - k + 1;
  std::vector<double> y(n * o * oh * ow, 0.0);
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t oi = 0; oi < o; ++oi)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t s = 0; s < ow; ++s) {
          double acc = b.empty() ? 0.0 : b[oi];
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t p = 0; p < k; ++p)
              for (std::size_t q = 0; q < k; ++q) {
                const long yy = static_cast<long>(r + p) - static_cast<long>(pad);
                const long xx = static_cast<long>(s + q) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
                acc += x[((ni * c + ci) * h + yy) * wd + xx] * w[((oi * c + ci) * k + p) * k + q];
              }
          y[((ni * o + oi) * oh + r) * ow + s] = acc;
        }
  return y;
}

}  // namespace

TEST_SUITE("nncore") {

TEST_CASE("softmax of equal logits is uniform") {
  const auto p = softmax(TensorD::from_data({1, 3}, {0.0, 0.0, 0.0}));
  for (double v : p.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  const auto big = softmax(TensorF::from_data({2}, {1000.0f, 0.0f}));
  CHECK(big.data()[0] == 1.0f);
  CHECK(std::isfinite(big.data()[1]));
}

TEST_CASE("softmax along a leading axis") {
  std::mt19937_64 rng(1);
  const auto x = random_tensor({3, 4, 5}, rng, -3.0, 3.0);
  const auto p = softmax(x, 1);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t c = 0; c < 5; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < 4; ++b) s += p.data()[(a * 4 + b) * 5 + c];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("layernorm output has zero mean and unit variance") {
  std::mt19937_64 rng(2);
  const auto x = random_tensor({4, 64}, rng, -5.0, 9.0);
  const auto y = layernorm(x, TensorD::full({64}, 1.0), TensorD::zeros({64}), 0.0);
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 64; ++i) m += y.data()[r * 64 + i];
    m /= 64;
    for (std::size_t i = 0; i < 64; ++i) v += std::pow(y.data()[r * 64 + i] - m, 2);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 64 == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("cross entropy of equal logits is ln 2") {
  const std::vector<int> t = {1};
  CHECK(cross_entropy(TensorD::from_data({1, 2}, {0.0, 0.0}), t).item() == doctest::Approx(std::log(2.0)));
  const std::vector<int> bad = {2};
  CHECK_THROWS_AS(cross_entropy(TensorD::from_data({1, 2}, {0.0, 0.0}), bad), Error);
}

TEST_CASE("gradient of a sum of squares") {
  auto x = TensorD::from_data({2}, {1.0, 2.0}, true);
  auto l = sum(mul(x, x));
  l.backward();
  REQUIRE(x.has_grad());
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
  CHECK_THROWS_AS(l.backward(), Error);
  CHECK_THROWS_AS(mul(x, x).backward(), Error);  // not a scalar
}

TEST_CASE("gradients accumulate until cleared") {
  auto x = TensorD::from_data({2}, {1.0, 2.0}, true);
  sum(x).backward();
  sum(x).backward();
  CHECK(x.grad()[0] == 2.0);
  x.zero_grad();
  sum(scale(x, 3.0)).backward();
  CHECK(x.grad()[1] == 3.0);
}

TEST_CASE("a loss independent of a leaf leaves its gradient zero") {
  auto x = TensorD::from_data({3}, {1.0, 2.0, 3.0}, true);
  auto y = TensorD::from_data({1}, {4.0}, true);
  auto l = add(scale(sum(x), 0.0), mul(y, y));
  l.backward();
  for (double g : x.grad()) CHECK(g == 0.0);
  CHECK(y.grad()[0] == 8.0);
}

TEST_CASE("no-grad mode records nothing") {
  auto x = TensorF::from_data({2}, {1.0f, 2.0f}, true);
  NoGradGuard guard;
  CHECK_FALSE(grad_enabled());
  const auto y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("shape mismatches are reported") {
  const auto a = TensorF::zeros({2, 3});
  const auto b = TensorF::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string m = e.what();
    CHECK(m.find("[2, 3]") != std::string::npos);
    CHECK(m.find("[4, 5]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("small finite-difference checks") {
  std::mt19937_64 rng(3);
  const auto x = random_tensor({3, 5}, rng), w = random_tensor({5, 4}, rng), b = random_tensor({4}, rng);
  CHECK(grad_check({x, w, b}, [](const auto& v) { return project(linear(v[0], v[1], v[2])); }).max_rel_error < 1e-6);
  CHECK(grad_check({x}, [](const auto& v) { return project(gelu(v[0])); }).max_rel_error < 1e-6);
  const auto g = random_tensor({5}, rng), be = random_tensor({5}, rng);
  CHECK(grad_check({x, g, be}, [](const auto& v) { return project(layernorm(v[0], v[1], v[2])); }).max_rel_error <
        1e-5);
  const std::vector<int> t = {0, 4, 2};
  CHECK(grad_check({x}, [&](const auto& v) { return cross_entropy(v[0], t); }).max_rel_error < 1e-6);
}

TEST_CASE("both convolution paths match a direct oracle in value and gradient") {
  std::mt19937_64 rng(4);
  // 1x3x3 = 9 columns takes the direct path; 8x3x3 = 72 the im2col path.
  for (std::size_t c : {1u, 8u}) {
    const std::size_t n = 2, h = 7, wd = 9, o = 3, k = 3, pad = 1;
    const auto x = random_tensor({n, c, h, wd}, rng);
    const auto w = random_tensor({o, c, k, k}, rng);
    const auto b = random_tensor({o}, rng);
    const auto y = conv2d(x, w, b, pad);
    const std::vector<double> xv(x.data().begin(), x.data().end()), wv(w.data().begin(), w.data().end()),
        bv(b.data().begin(), b.data().end());
    const auto ref = naive_conv(xv, wv, bv, n, c, h, wd, o, k, pad);
    REQUIRE(y.numel() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    CHECK(grad_check({x, w, b}, [&](const auto& v) { return project(conv2d(v[0], v[1], v[2], pad)); })
              .max_rel_error < 1e-6);

    // float agrees with double
    auto cast = [](const TensorD& t) {
      return TensorF::from_data(t.shape(), std::vector<float>(t.data().begin(), t.data().end()));
    };
    const auto yf = conv2d(cast(x), cast(w), cast(b), pad);
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(std::abs(yf.data()[i] - ref[i]) <= 1e-5);
  }
}

TEST_CASE("maxpool keeps the window maximum and routes its gradient") {
  auto x = TensorD::from_data({1, 1, 2, 4}, {1, 5, 2, 0, 3, 4, 8, 7}, true);
  auto y = maxpool2d(x);
  REQUIRE(y.shape() == Shape{1, 1, 1, 2});
  CHECK(y.data()[0] == 5.0);
  CHECK(y.data()[1] == 8.0);
  sum(y).backward();
  const std::vector<double> want = {0, 1, 0, 0, 0, 0, 1, 0};
  for (std::size_t i = 0; i < 8; ++i) CHECK(x.grad()[i] == want[i]);
}

TEST_CASE("attention weights are row-stochastic") {
  std::mt19937_64 rng(5);
  const auto qkv = random_tensor({2, 5, 12}, rng, -2.0, 2.0);
  std::vector<double> probs;
  const auto y = attention(qkv, 2, &probs);
  CHECK(y.shape() == Shape{2, 5, 4});
  REQUIRE(probs.size() == 2u * 2u * 5u * 5u);
  for (std::size_t r = 0; r < probs.size() / 5; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += probs[r * 5 + j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("token helpers") {
  const auto x = TensorF::from_data({1, 2, 2}, {1, 2, 3, 4});
  const auto t = TensorF::from_data({2}, {9, 8});
  const auto p = prepend_token(x, t);
  CHECK(p.shape() == Shape{1, 3, 2});
  CHECK(select_token(p, 0).data()[1] == 8.0f);
  CHECK(select_token(p, 2).data()[0] == 3.0f);
  const auto c = concat_last(TensorF::from_data({1, 2}, {1, 2}), TensorF::from_data({1, 1}, {3}));
  CHECK(c.data()[2] == 3.0f);
  CHECK_THROWS_AS(reshape(x, {3}), ShapeError);
}

TEST_CASE("scheduled learning rate") {
  CHECK(scheduled_lr(3e-4, 0.97, 0) == doctest::Approx(3e-4).epsilon(1e-12));
  CHECK(scheduled_lr(3e-4, 0.97, 1) == doctest::Approx(2.91e-4).epsilon(1e-12));
  CHECK(scheduled_lr(3e-4, 0.97, 2) == doctest::Approx(2.8227e-4).epsilon(1e-12));
}

TEST_CASE("adam first step moves by the learning rate and decreases x^2") {
  auto x = TensorF::from_data({1}, {1.0f}, true);
  std::vector<TensorF> params = {x};
  AdamState adam(params, {.lr = 0.1});
  x.zero_grad();
  sum(mul(x, x)).backward();
  adam.step(params);
  CHECK(x.data()[0] == doctest::Approx(0.9).epsilon(1e-6));
  for (int i = 0; i < 200; ++i) {
    x.zero_grad();
    sum(mul(x, x)).backward();
    adam.step(params);
  }
  CHECK(std::abs(x.data()[0]) < 0.05f);
  CHECK(adam.step_count() == 201);

  std::vector<TensorF> other = {TensorF::zeros({2}, true)};
  CHECK_THROWS_AS(adam.step(other), ShapeError);
}

TEST_CASE("identical seeds give identical updates") {
  auto run = [] {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> wv(20), xv(12);
    for (auto& v : wv) v = u(rng);
    for (auto& v : xv) v = u(rng);
    auto w = TensorF::from_data({4, 5}, wv, true);
    const auto x = TensorF::from_data({3, 4}, xv);
    std::vector<TensorF> params = {w};
    AdamState adam(params);
    const std::vector<int> t = {0, 1, 4};
    for (int i = 0; i < 5; ++i) {
      w.zero_grad();
      cross_entropy(matmul(x, w), t).backward();
      adam.step(params);
    }
    return std::vector<float>(w.data().begin(), w.data().end());
  };
  CHECK(run() == run());
}

}  // TEST_SUITE

// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable primitives. All ops take and return Tensor<T> for T in
// {float, double}; shape mismatches throw mvx::ShapeError naming both shapes.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mvx/nn/tensor.hpp"

namespace mvx::nn {

/// [m,k] x [k,n] -> [m,n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[..., in] * w[in, out] (+ bias[out]) -> [..., out]. `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// x + y where y's shape is a trailing suffix of x's shape.
template <typename T>
Tensor<T> add_broadcast(const Tensor<T>& x, const Tensor<T>& y);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// Sum of every element, shape [1].
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> mean(const Tensor<T>& a);

template <typename T>
Tensor<T> relu(const Tensor<T>& a);

/// 0.5 x (1 + erf(x / sqrt 2))
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);

/// Normalizes over the last axis, then gamma * xhat + beta.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    double eps = 1e-5);

/// Softmax along `axis` (negative counts from the end).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1);

/// Mean softmax cross-entropy of logits[B, C] against class ids.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

/// x[N,C,H,W] conv w[O,C,K,K] + bias[O], stride 1, zero padding `pad`.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t pad);

/// Non-overlapping window x window max pooling of x[N,C,H,W] (floor).
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t window = 2);

/// Multi-head scaled dot-product self-attention over packed qkv[B, T, 3D]
/// ordered (q | k | v), heads split along D. Returns [B, T, D]. When `probs`
/// is non-null it receives the attention weights as [B, heads, T, T].
template <typename T>
Tensor<T> attention(const Tensor<T>& qkv, std::size_t heads, std::vector<T>* probs = nullptr);

/// [B, n] ++ [B, m] -> [B, n + m]
template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b);

/// x[B, T, D] -> x[:, index, :] as [B, D]
template <typename T>
Tensor<T> select_token(const Tensor<T>& x, std::size_t index);

/// Prepends token[D] to every sequence of x[B, T, D] -> [B, T + 1, D].
template <typename T>
Tensor<T> prepend_token(const Tensor<T>& x, const Tensor<T>& token);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

}  // namespace mvx::nn

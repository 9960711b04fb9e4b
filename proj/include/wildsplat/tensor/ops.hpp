// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wildsplat/tensor/tensor.hpp"

#include <span>

namespace wildsplat {

enum class ElementwiseOp { Add, Sub, Mul, Div, Pow, Exp, Log, Sqrt, Relu, Sigmoid };

/// Elementwise arithmetic. Binary ops broadcast with trailing-dimension
/// alignment: dimensions are matched from the right and each pair must be
/// equal or contain a 1. Unary ops ignore `b`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = Tensor());

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor pow(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor silu(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);
/// Values clamped to [lo, hi]; gradient passes only where unclamped.
Tensor clamp(const Tensor& a, float lo, float hi);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, float s) { return scale(a, s); }
inline Tensor operator*(float s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, float s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, float s) { return add_scalar(a, -s); }

/// Batched matrix product over the last two dimensions; leading (batch)
/// dimensions broadcast like elementwise ops.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two dimensions.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Numerically stable softmax along `axis` (max subtracted before exp).
Tensor softmax(const Tensor& a, int64_t axis);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Single-image 2D convolution (cross-correlation).
/// x: [Cin,H,W], w: [Cout,Cin,K,K], bias: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding);
/// [C,H,W] -> [C,2H,2W], nearest neighbour.
Tensor upsample_nearest2(const Tensor& x);
/// Concatenation along dimension 0.
Tensor concat0(const Tensor& a, const Tensor& b);
/// Group normalization of [C,H,W] without affine parameters: each group of
/// C/groups channels is shifted and scaled to zero mean, unit variance.
Tensor group_norm(const Tensor& x, int64_t groups, float eps = 1e-5f);
/// Separable "valid" correlation of every channel of [C,H,W] with the
/// outer product kernel k1d ⊗ k1d. Output [C, H-K+1, W-K+1].
Tensor separable_filter_valid(const Tensor& x, std::span<const float> kernel1d);

} // namespace wildsplat

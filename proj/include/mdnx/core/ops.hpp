#pragma once

#include <vector>

#include "mdnx/core/tensor.hpp"

// Differentiable free functions over Tensor. Every op checks its output for
// non-finite values and throws NumericError naming the op.
namespace mdnx {

// Elementwise binary ops with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, Real s);
Tensor mul_scalar(const Tensor& x, Real s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, Real s) { return add_scalar(a, s); }
inline Tensor operator+(Real s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, Real s) { return add_scalar(a, -s); }
inline Tensor operator-(Real s, const Tensor& a) { return add_scalar(mul_scalar(a, -1), s); }
inline Tensor operator*(const Tensor& a, Real s) { return mul_scalar(a, s); }
inline Tensor operator*(Real s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return mul_scalar(a, -1); }

// Elementwise unary ops.
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
Tensor pow(const Tensor& x, Real exponent);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor silu(const Tensor& x);
/// Exact x * Phi(x) with Phi the standard normal CDF.
Tensor gelu(const Tensor& x);
/// Values outside [lo, hi] are clamped and receive zero gradient.
Tensor clamp(const Tensor& x, Real lo, Real hi);

/// Numerically stable log(1 + e^x) - t * x, elementwise; t is not differentiated.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// Reductions.
Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, Index axis, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, Index axis, bool keepdim = false);

// Shape manipulation.
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<Index>& order);
Tensor transpose(const Tensor& x, Index a, Index b);
Tensor concat(const std::vector<Tensor>& parts, Index axis);
Tensor slice(const Tensor& x, Index axis, Index start, Index length);
Tensor index_select(const Tensor& x, Index axis, const std::vector<Index>& indices);
/// x: [N, T, D]; picks rows indices[n] from batch n, giving [N, Q, D].
Tensor gather_rows(const Tensor& x, const std::vector<std::vector<Index>>& indices);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched matmul over a leading dimension: [B, m, k] x [B, k, n].
Tensor bmm(const Tensor& a, const Tensor& b);
/// y = x W^T + b over the last axis of x; w is [out, in], bias [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// Neural primitives.
Tensor softmax(const Tensor& x, Index axis);
Tensor log_softmax(const Tensor& x, Index axis);
Tensor l2_normalize(const Tensor& x, Index axis, Real eps = Real(1e-12));

struct Conv2dArgs {
  Index stride = 1;
  Index dilation = 1;
  Index padding = 0;
};
Index conv_output_size(Index in, Index kernel, const Conv2dArgs& args);
/// x: [N, Cin, H, W], w: [Cout, Cin, k, k], bias: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, const Conv2dArgs& args);
/// Non-overlapping average pooling with window = stride = factor.
Tensor avg_pool2d(const Tensor& x, Index factor);
Tensor upsample_nearest(const Tensor& x, Index factor);

/// Normalizes over every axis except 1. In training mode the batch statistics
/// are used and the running stats are updated in place with `momentum`.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, Real momentum = Real(0.1),
                  Real eps = Real(1e-5));
/// Normalizes over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps = Real(1e-5));

}  // namespace mdnx

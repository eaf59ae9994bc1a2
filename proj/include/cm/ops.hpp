#pragma once

#include "cm/tensor.hpp"

namespace cm::ad {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double c);

// x: (..., K) times w: (K, N) over the last axis -> (..., N).
Tensor matmul(const Tensor& x, const Tensor& w);

// Adds a length-C vector to every row of x: (..., C).
Tensor add_rowvec(const Tensor& x, const Tensor& b);

Tensor exp(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor silu(const Tensor& x);

// Normalizes over the last axis, then applies gamma/beta (both length C).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Columns [begin, begin+len) of the last axis.
Tensor slice_lastdim(const Tensor& x, Index begin, Index len);

// Stacks rank-3 tensors (B, L_i, C) along the middle axis.
Tensor concat_time(const std::vector<Tensor>& xs);

Tensor reshape(const Tensor& x, Shape shape);

// Swaps the last two axes of a rank-2 or rank-3 tensor.
Tensor transpose_last2(const Tensor& x);

// Depthwise causal convolution along the middle axis of x: (B, L, C) with
// kernel w: (K, C) and bias b: (C). Output at step t sees steps <= t only.
Tensor conv1d_causal(const Tensor& x, const Tensor& w, const Tensor& b);

// sqrt(mean((pred - target)^2)); shapes must match.
Tensor rmse_loss(const Tensor& pred, const Tensor& target);

}  // namespace cm::ad

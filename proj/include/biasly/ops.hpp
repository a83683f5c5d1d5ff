#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "biasly/tensor.hpp"

namespace biasly {

// Per-key keep mask for softmax_rows: entry g*n + j is nonzero when column j
// of group g may receive probability mass. Empty means "keep everything".
using KeyMask = std::vector<std::uint8_t>;

// GELU uses the exact Gaussian CDF, x * Phi(x) = 0.5 x (1 + erf(x / sqrt 2)).
inline constexpr bool kGeluExactCdf = true;
inline constexpr double kLayerNormEps = 1e-5;

// [m,k] @ [k,n] -> [m,n], or batched [g,m,k] @ [g,k,n] -> [g,m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a @ b^T: [m,k] x [n,k] -> [m,n], or batched over a leading axis.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// x[..., n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Row-wise exp(beta*x - max) / sum over the last axis. With a mask, the
// masked columns get exactly zero probability. A fully masked row is an error.
Tensor softmax_rows(const Tensor& x, double beta, const KeyMask& mask = {});

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

Tensor gelu(const Tensor& x);

// Rows of a 2-D table selected by index; gradients scatter-add back.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows);

// [batch*seq, heads*d_head] <-> [batch*heads, seq, d_head]
Tensor split_heads(const Tensor& x, std::size_t batch, std::size_t seq, std::size_t heads);
Tensor merge_heads(const Tensor& x, std::size_t batch, std::size_t seq, std::size_t heads);

Tensor reshape(const Tensor& x, Shape shape);

// Stacks `times` copies of x along a new leading block: [r,d] -> [times*r, d].
Tensor repeat_rows(const Tensor& x, std::size_t times);

// Mean over rows of -sum_c target_c * log(eps + probs_c). `targets` is a
// constant [B,C] matrix; probs is [B,C].
Tensor soft_cross_entropy(const Tensor& probs, const Tensor& targets, double eps);

// Untracked helpers.
double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace biasly

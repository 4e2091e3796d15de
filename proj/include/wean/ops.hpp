#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wean/tensor.hpp"

namespace wean {

// Differentiable operations. Unless noted otherwise 2-D tensors are
// [rows x cols] in row-major order and mismatched shapes raise DimensionError.

/// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [m x k] . [n x k]^T -> [m x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
/// Adds a length-n vector to every row of an [m x n] matrix.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// Elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
/// Sum of all elements as a [1] tensor.
Tensor sum(const Tensor& x);

enum class Activation { kTanh, kSigmoid };
Tensor activation(const Tensor& x, Activation kind);
inline Tensor tanh(const Tensor& x) { return activation(x, Activation::kTanh); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::kSigmoid); }

/// Softmax along the last axis, computed with max subtraction.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

/// Rank-1 or rank-2 concatenation along `axis`. An empty rank-1 operand is
/// the identity.
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
/// Columns [begin, end) of a matrix.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);

/// Rows `ids` of a [V x d] table. Backward scatter-adds, so repeated ids
/// accumulate.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

/// Row r of the result is a[r] when take_a[r] is nonzero, b[r] otherwise.
Tensor select_rows(std::span<const unsigned char> take_a, const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);

/// Stacks T tensors of shape [B x k] into [B x T x k].
Tensor stack_steps(std::span<const Tensor> steps);

/// keys [B x N x k], query [B x k] -> [B x N] with out[b,i] = <keys[b,i], query[b]>.
Tensor batch_matvec(const Tensor& keys, const Tensor& query);
/// weights [B x N], rows [B x N x k] -> [B x k] with out[b] = sum_i weights[b,i] rows[b,i].
Tensor batch_vecmat(const Tensor& weights, const Tensor& rows);
/// a [B x k], b [N x k] -> [B x N x k] with out[r,i] = a[r] + b[i].
Tensor pairwise_add(const Tensor& a, const Tensor& b);
/// x [B x N x k], y [B x k] -> [B x N x k] with out[r,i] = x[r,i] + y[r].
Tensor add_per_step(const Tensor& x, const Tensor& y);

/// Negative log-likelihood of `gold` under softmax(scores), fused in log space.
/// `scores` is [n]; returns a [1] tensor.
Tensor cross_entropy(const Tensor& scores, std::size_t gold);
/// Batched form: scores [B x n], one gold index and one weight per row.
/// Returns sum_b weight[b] * -log softmax(scores[b])[gold[b]].
Tensor cross_entropy(const Tensor& scores, std::span<const std::size_t> gold, std::span<const double> weights);

}  // namespace wean

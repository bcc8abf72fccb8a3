#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "longattn/rng.hpp"
#include "longattn/tensor.hpp"

namespace longattn {

/// Batched matrix product [..., m, k] x [..., k, n] -> [..., m, n]. Batch
/// extents must be equal or 1; a rank-2 operand is shared across the batch.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swaps the last two axes.
Tensor transpose(const Tensor& x);

/// Elementwise add/mul. `b` is either the same shape as `a` or matches a
/// trailing suffix of it (a bias broadcast over leading axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);

/// Inverted dropout. Identity when `training` is false or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

Tensor softmax(const Tensor& x, int axis = -1);

/// Normalizes over the last axis then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6);

/// Gathers rows of `table` [V, d]; backward scatter-adds into the table.
Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> ids);

/// Mean negative log-softmax over positions whose target != ignore_id.
/// Returns 0 (with zero gradient) when every position is ignored.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets, std::int64_t ignore_id);

Tensor sum(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);

/// [L, h*d] -> [h, L, d] and back.
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x);

/// Row-axis (second to last) structural ops on [..., L, d] tensors.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor pad_rows(const Tensor& x, std::size_t before, std::size_t after);
Tensor concat_rows(const Tensor& a, const Tensor& b);

/// Central-difference gradient of scalar-valued `f` at `x`, one element at a
/// time: (f(x + h e_i) - f(x - h e_i)) / 2h. Runs with recording disabled.
Tensor finite_diff_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

}  // namespace longattn

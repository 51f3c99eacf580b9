#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "atnl/graph.hpp"
#include "atnl/rng.hpp"
#include "atnl/tensor.hpp"

namespace atnl {

enum class Mode { train, eval };

/// Standard matrix product [m x k] * [k x n] -> [m x n].
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);

/// Rank-2 transpose.
Tensor transpose(Graph& g, const Tensor& a);

/// Elementwise sum of two same-shape tensors.
Tensor add(Graph& g, const Tensor& a, const Tensor& b);

/// Elementwise product of two same-shape tensors.
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);

/// Multiply every element by a constant.
Tensor scale(Graph& g, const Tensor& a, double c);

/// Add a length-d bias vector to every row of an [n x d] matrix.
Tensor add_row_bias(Graph& g, const Tensor& x, const Tensor& bias);

/// Elementwise max(0, x). The subgradient at exactly 0 is 0.
Tensor relu(Graph& g, const Tensor& x);

/// Row-wise softmax with per-row max subtraction. Entries may be -inf
/// sentinels, which map to exactly 0; a row with no finite entry is an error.
Tensor softmax_rows(Graph& g, const Tensor& x);

/// Softmax restricted to entries with a nonzero mask byte (row-major, one
/// byte per element). Disallowed entries are exactly 0 in the output and
/// receive no gradient; a row with nothing allowed is an error.
Tensor softmax_rows_allowed(Graph& g, const Tensor& x,
                            std::vector<std::uint8_t> allowed);

/// Per-row normalization over the last axis followed by the affine map
/// gain (*) normalized + bias. x is [n x d] (or a single length-d row).
Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps = 1e-6);

/// Inverted dropout: in train mode each element is zeroed independently with
/// probability p and survivors are scaled by 1/(1-p); eval mode is the
/// identity (the same tensor handle, bit for bit).
Tensor dropout(Graph& g, const Tensor& x, double p, Mode mode, Rng& rng);

/// Sum of all elements, as a rank-0 scalar.
Tensor sum(Graph& g, const Tensor& x);

/// Concatenate same-height matrices along the feature (column) axis.
Tensor concat_cols(Graph& g, const std::vector<Tensor>& parts);

/// Select rows of a [v x d] table: out[i] = table[ids[i]].
/// Backward scatter-adds, so repeated ids accumulate.
Tensor gather_rows(Graph& g, const Tensor& table, std::span<const int> ids);

/// Central-difference gradient oracle: (f(x + h e_i) - f(x - h e_i)) / 2h
/// per coordinate. Perturbs x in place and restores it.
Tensor finite_diff_grad(const std::function<double(Tensor&)>& f, Tensor x,
                        double h);

}  // namespace atnl

#pragma once

// Differentiable operations over Graph nodes. All matrices are row-major with
// rank-2 shapes [rows x cols]; vectors are rank 1.

#include <cstddef>
#include <span>
#include <vector>

#include "armt/nn/graph.hpp"

namespace armt::nn {

/// a[n x k] * b[k x m].
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

/// x[n x k] * w[m x k]^T (+ bias[m]).
template <typename T>
Var<T> linear(Var<T> x, Var<T> w);
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

/// Elementwise product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> a, T factor);

/// Sum of all elements, shape [1].
template <typename T>
Var<T> sum(Var<T> a);

template <typename T>
Var<T> sigmoid(Var<T> x);

/// GPT-2 tanh approximation.
template <typename T>
Var<T> gelu(Var<T> x);

/// Row-wise layer normalization over the last dimension.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));

struct AttentionLayout {
  std::size_t batch = 1;  // independent sequences stacked along rows
  std::size_t heads = 1;
  bool causal = true;
};

/// Multi-head scaled dot-product self-attention on a fused [n x 3h] q|k|v
/// projection. Rows are `batch` stacked sequences of equal length.
template <typename T>
Var<T> attention(Var<T> qkv, const AttentionLayout& layout);

/// Rows of `table` selected by token ids.
template <typename T>
Var<T> embedding(Var<T> table, std::span<const int> ids);

/// out[i] = x[index[i]]; backward scatter-adds.
template <typename T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> index);

/// Builds an [n_rows x cols] matrix with out[maps[p][i]] = parts[p][i].
/// Every output row must be written exactly once.
template <typename T>
Var<T> assemble_rows(std::span<const Var<T>> parts, std::vector<std::vector<std::size_t>> maps,
                     std::size_t n_rows);

/// Weighted mean negative log-likelihood of `targets` under softmax(logits).
/// Rows with zero weight are ignored; an all-zero weight vector is an error.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets, std::span<const T> weights);

/// Identity in the forward pass, zero gradient in the backward pass.
template <typename T>
Var<T> detach(Var<T> x);

/// Throws NumericError naming `where` if any value of `x` is non-finite.
template <typename T>
void require_finite(Var<T> x, const std::string& where);

}  // namespace armt::nn

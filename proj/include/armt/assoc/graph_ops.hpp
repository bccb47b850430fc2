#pragma once

// Differentiable, batched forms of the associative memory. A batch of states
// is one node of shape [batch x (d_val * d_phi + d_phi)]: each row holds A
// (row-major) followed by z.

#include <cstddef>

#include "armt/assoc/associative_memory.hpp"
#include "armt/nn/ops.hpp"

namespace armt::assoc {

using nn::Graph;
using nn::Var;

struct StateDims {
  std::size_t d_val = 0;
  std::size_t d_phi = 0;
  std::size_t width() const { return d_val * d_phi + d_phi; }
};

/// Zero states for `batch` independent sequences.
template <typename T>
Var<T> empty_states(Graph<T>& g, std::size_t batch, const StateDims& dims);

/// Feature map applied to every row of x.
template <typename T>
Var<T> feature_map(Var<T> x, const FeatureMapSpec& spec);

/// One delta-rule write per batch row. k_phi [batch x d_phi], value
/// [batch x d_val], beta [batch x 1].
template <typename T>
Var<T> assoc_insert(Var<T> states, Var<T> k_phi, Var<T> value, Var<T> beta, const StateDims& dims,
                    const GammaPolicy& policy);

/// Reads for `rows_per_state` consecutive query rows per state.
template <typename T>
Var<T> assoc_read(Var<T> states, Var<T> q_phi, const StateDims& dims);

/// Writes the memory-token rows `memory` ([batch * n_mem x hidden], grouped by
/// sample) into the states in token order.
template <typename T>
Var<T> memory_update(Var<T> states, Var<T> memory, const AssocProjections<T>& proj,
                     const FeatureMapSpec& spec, const GammaPolicy& policy, const StateDims& dims);

/// x + W_O * query(state, x) for every row of x; rows are grouped by sample.
template <typename T>
Var<T> assoc_block(Var<T> x, Var<T> states, const AssocProjections<T>& proj,
                   const FeatureMapSpec& spec, const StateDims& dims);

}  // namespace armt::assoc

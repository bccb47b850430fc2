#pragma once

#include <cstddef>
#include <string>

#include "armt/nn/ops.hpp"
#include "armt/nn/parameters.hpp"

namespace armt::nn {

/// Pre-norm GPT-2 style decoder block.
template <typename T>
struct TransformerBlockWeights {
  Parameter<T>* ln1_gain = nullptr;
  Parameter<T>* ln1_bias = nullptr;
  Parameter<T>* qkv_weight = nullptr;  // [3h x h]
  Parameter<T>* qkv_bias = nullptr;
  Parameter<T>* proj_weight = nullptr;  // [h x h]
  Parameter<T>* proj_bias = nullptr;
  Parameter<T>* ln2_gain = nullptr;
  Parameter<T>* ln2_bias = nullptr;
  Parameter<T>* ff_in_weight = nullptr;  // [4h x h]
  Parameter<T>* ff_in_bias = nullptr;
  Parameter<T>* ff_out_weight = nullptr;  // [h x 4h]
  Parameter<T>* ff_out_bias = nullptr;
  std::size_t hidden = 0;
  std::size_t heads = 1;

  /// Registers the block's parameters under `prefix`. Throws if heads does not divide hidden.
  static TransformerBlockWeights create(ParameterStore<T>& store, const std::string& prefix,
                                        std::size_t hidden, std::size_t heads, Rng& rng,
                                        double init_std = 0.02);
};

/// x + Attn(LN1(x)), then + FF(LN2(.)). `layout.batch` sequences of equal
/// length are stacked along the rows of x. Non-finite output raises
/// NumericError naming `layer_index`.
template <typename T>
Var<T> transformer_block(Var<T> x, const TransformerBlockWeights<T>& w, const AttentionLayout& layout,
                         std::size_t layer_index = 0);

}  // namespace armt::nn

#include "armt/nn/transformer.hpp"

namespace armt::nn {

template <typename T>
TransformerBlockWeights<T> TransformerBlockWeights<T>::create(ParameterStore<T>& store,
                                                              const std::string& prefix,
                                                              std::size_t hidden, std::size_t heads,
                                                              Rng& rng, double init_std) {
  if (heads == 0 || hidden % heads != 0) {
    throw ConfigError("head count " + std::to_string(heads) + " must divide hidden dimension " +
                      std::to_string(hidden));
  }
  TransformerBlockWeights w;
  w.hidden = hidden;
  w.heads = heads;
  w.ln1_gain = &store.ones(prefix + ".ln1.gain", {hidden});
  w.ln1_bias = &store.zeros(prefix + ".ln1.bias", {hidden});
  w.qkv_weight = &store.normal(prefix + ".attn.qkv.weight", {3 * hidden, hidden}, rng, init_std);
  w.qkv_bias = &store.zeros(prefix + ".attn.qkv.bias", {3 * hidden});
  w.proj_weight = &store.normal(prefix + ".attn.proj.weight", {hidden, hidden}, rng, init_std);
  w.proj_bias = &store.zeros(prefix + ".attn.proj.bias", {hidden});
  w.ln2_gain = &store.ones(prefix + ".ln2.gain", {hidden});
  w.ln2_bias = &store.zeros(prefix + ".ln2.bias", {hidden});
  w.ff_in_weight = &store.normal(prefix + ".ff.in.weight", {4 * hidden, hidden}, rng, init_std);
  w.ff_in_bias = &store.zeros(prefix + ".ff.in.bias", {4 * hidden});
  w.ff_out_weight = &store.normal(prefix + ".ff.out.weight", {hidden, 4 * hidden}, rng, init_std);
  w.ff_out_bias = &store.zeros(prefix + ".ff.out.bias", {hidden});
  return w;
}

template <typename T>
Var<T> transformer_block(Var<T> x, const TransformerBlockWeights<T>& w, const AttentionLayout& layout,
                         std::size_t layer_index) {
  Graph<T>& g = *x.graph;
  if (x.value().rank() != 2 || x.value().dim(1) != w.hidden) {
    throw ConfigError("transformer_block: input " + shape_string(x.shape()) +
                      " does not match hidden " + std::to_string(w.hidden));
  }
  AttentionLayout attn = layout;
  attn.heads = w.heads;

  Var<T> h = layer_norm(x, g.param(*w.ln1_gain), g.param(*w.ln1_bias));
  h = linear(h, g.param(*w.qkv_weight), g.param(*w.qkv_bias));
  h = attention(h, attn);
  h = linear(h, g.param(*w.proj_weight), g.param(*w.proj_bias));
  Var<T> mid = add(x, h);

  h = layer_norm(mid, g.param(*w.ln2_gain), g.param(*w.ln2_bias));
  h = linear(h, g.param(*w.ff_in_weight), g.param(*w.ff_in_bias));
  h = gelu(h);
  h = linear(h, g.param(*w.ff_out_weight), g.param(*w.ff_out_bias));
  Var<T> out = add(mid, h);
  require_finite(out, "transformer block " + std::to_string(layer_index));
  return out;
}

template struct TransformerBlockWeights<float>;
template struct TransformerBlockWeights<double>;
template Var<float> transformer_block<float>(Var<float>, const TransformerBlockWeights<float>&,
                                             const AttentionLayout&, std::size_t);
template Var<double> transformer_block<double>(Var<double>, const TransformerBlockWeights<double>&,
                                               const AttentionLayout&, std::size_t);

}  // namespace armt::nn

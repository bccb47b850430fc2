#include "armt/models/model.hpp"

#include <algorithm>
#include <numeric>

#include "armt/errors.hpp"
#include "armt/nn/ops.hpp"

namespace armt::models {

using nlohmann::json;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::armt: return "armt";
    case Variant::rmt: return "rmt";
    case Variant::prmt: return "prmt";
    case Variant::armt_no_gamma: return "armt_no_gamma";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::armt, Variant::rmt, Variant::prmt, Variant::armt_no_gamma}) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown model variant: " + name);
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string("model config: ") + what + " must be positive");
  };
  positive(layers, "layers");
  positive(hidden, "hidden");
  positive(heads, "heads");
  positive(mem_tokens, "mem_tokens");
  positive(d_mem, "d_mem");
  positive(vocab, "vocab");
  positive(segment_len, "segment_len");
  if (hidden % heads != 0) throw ConfigError("model config: heads must divide hidden");
  if (feature_map.kind != assoc::FeatureMapKind::dpfp) {
    throw ConfigError("model config: only the dpfp feature map is available to models");
  }
  positive(feature_map.nu, "feature_map.nu");
  if (!(init_std > 0.0)) throw ConfigError("model config: init_std must be positive");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"variant", variant_name(c.variant)},
           {"layers", c.layers},
           {"hidden", c.hidden},
           {"heads", c.heads},
           {"mem_tokens", c.mem_tokens},
           {"d_mem", c.d_mem},
           {"feature_map",
            {{"kind", c.feature_map.kind == assoc::FeatureMapKind::dpfp ? "dpfp" : "identity"},
             {"nu", c.feature_map.nu},
             {"normalize", c.feature_map.normalize}}},
           {"vocab", c.vocab},
           {"segment_len", c.segment_len},
           {"max_segments", c.max_segments},
           {"detach_gamma", c.detach_gamma},
           {"clip_gamma", c.clip_gamma},
           {"bptt_window", c.bptt_window},
           {"init_std", c.init_std}};
}

void from_json(const json& j, ModelConfig& c) {
  ModelConfig d;
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {"variant",    "layers",       "hidden",      "heads",       "mem_tokens",
                                  "d_mem",      "feature_map",  "vocab",       "segment_len", "max_segments",
                                  "detach_gamma", "clip_gamma", "bptt_window", "init_std"};
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) ==
        std::end(known)) {
      throw ConfigError("model config: unknown key '" + it.key() + "'");
    }
  }
  try {
    d.variant = parse_variant(j.value("variant", variant_name(d.variant)));
    d.layers = j.value("layers", d.layers);
    d.hidden = j.value("hidden", d.hidden);
    d.heads = j.value("heads", d.heads);
    d.mem_tokens = j.value("mem_tokens", d.mem_tokens);
    d.d_mem = j.value("d_mem", d.d_mem);
    if (j.contains("feature_map")) {
      const json& f = j.at("feature_map");
      const std::string kind = f.value("kind", std::string("dpfp"));
      if (kind == "dpfp") {
        d.feature_map.kind = assoc::FeatureMapKind::dpfp;
      } else if (kind == "identity") {
        d.feature_map.kind = assoc::FeatureMapKind::identity;
      } else {
        throw ConfigError("model config: unknown feature map '" + kind + "'");
      }
      d.feature_map.nu = f.value("nu", d.feature_map.nu);
      d.feature_map.normalize = f.value("normalize", d.feature_map.normalize);
    }
    d.vocab = j.value("vocab", d.vocab);
    d.segment_len = j.value("segment_len", d.segment_len);
    d.max_segments = j.value("max_segments", d.max_segments);
    d.detach_gamma = j.value("detach_gamma", d.detach_gamma);
    d.clip_gamma = j.value("clip_gamma", d.clip_gamma);
    d.bptt_window = j.value("bptt_window", d.bptt_window);
    d.init_std = j.value("init_std", d.init_std);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c = d;
}

std::size_t count_recurrent_floats(const ModelConfig& c) {
  const std::size_t tokens = c.mem_tokens * c.hidden;
  switch (c.variant) {
    case Variant::rmt: return tokens;
    case Variant::prmt: return c.layers * tokens;
    case Variant::armt:
    case Variant::armt_no_gamma: return c.layers * (c.d_mem * c.d_phi() + c.d_phi() + tokens);
  }
  return 0;
}

template <typename T>
std::size_t Carry<T>::float_count() const {
  std::size_t n = 0;
  for (const auto& v : memory) n += v.value().size();
  for (const auto& v : states) n += v.value().size();
  return batch == 0 ? 0 : n / batch;
}

bool SegmentBatch::supervised() const {
  return std::any_of(weights.begin(), weights.end(), [](double w) { return w != 0.0; });
}

template <typename T>
Model<T>::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(mix_seed({seed, 0x6d6f64656cULL}));
  const std::size_t H = config_.hidden, m = config_.mem_tokens;
  const double sd = config_.init_std;
  token_embedding_ = &store_.normal("embed.token", {config_.vocab, H}, rng, sd);
  position_embedding_ = &store_.normal("embed.position", {config_.segment_len, H}, rng, sd);
  if (config_.variant == Variant::rmt) {
    memory_init_ = &store_.normal("memory.init", {m, H}, rng, sd);
  } else {
    write_init_ = &store_.normal("memory.write_init", {m, H}, rng, sd);
  }
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    Layer layer;
    if (config_.variant != Variant::rmt) {
      layer.read_init = &store_.normal(prefix + ".read_init", {m, H}, rng, sd);
    }
    layer.block = nn::TransformerBlockWeights<T>::create(store_, prefix, H, config_.heads, rng, sd);
    if (config_.associative()) {
      layer.assoc = assoc::AssocProjections<T>::create(store_, prefix + ".assoc", H, config_.d_mem,
                                                       config_.d_mem, rng, sd);
    }
    layers_.push_back(layer);
  }
  final_gain_ = &store_.ones("final_ln.gain", {H});
  final_bias_ = &store_.zeros("final_ln.bias", {H});
  head_weight_ = &store_.normal("head.weight", {config_.vocab, H}, rng, sd);
  head_bias_ = &store_.zeros("head.bias", {config_.vocab});
}

template <typename T>
Var<T> Model<T>::broadcast(Graph<T>& g, nn::Parameter<T>& p, std::size_t batch) const {
  const std::size_t rows = p.value.rows();
  std::vector<std::size_t> idx(batch * rows);
  for (std::size_t b = 0; b < batch; ++b) std::iota(idx.begin() + b * rows, idx.begin() + (b + 1) * rows, 0);
  return nn::gather_rows(g.param(p), std::move(idx));
}

template <typename T>
Carry<T> Model<T>::initial_carry(Graph<T>& g, std::size_t batch) const {
  if (batch == 0) throw ConfigError("batch must be positive");
  Carry<T> c;
  c.batch = batch;
  switch (config_.variant) {
    case Variant::rmt:
      c.memory.push_back(broadcast(g, *memory_init_, batch));
      break;
    case Variant::prmt:
      for (const Layer& l : layers_) c.memory.push_back(broadcast(g, *l.read_init, batch));
      break;
    case Variant::armt:
    case Variant::armt_no_gamma:
      for (std::size_t l = 0; l < config_.layers; ++l) {
        // Placeholder for the write rows of the previous segment; never read
        // at segment 0.
        c.memory.push_back(g.constant(Tensor<T>({batch * config_.mem_tokens, config_.hidden})));
        c.states.push_back(assoc::empty_states(g, batch, config_.state_dims()));
      }
      break;
  }
  return c;
}

template <typename T>
SegmentOutput<T> Model<T>::forward_segment(Graph<T>& g, const Carry<T>& carry, std::span<const int> tokens,
                                           std::size_t batch, bool want_logits) {
  if (batch == 0 || batch != carry.batch) throw ConfigError("forward_segment: batch does not match carry");
  if (tokens.size() % batch != 0) throw ConfigError("forward_segment: token count not divisible by batch");
  const std::size_t L = tokens.size() / batch;
  if (L == 0) throw ConfigError("forward_segment: empty segment");
  if (L > config_.segment_len) {
    throw ConfigError("forward_segment: segment of " + std::to_string(L) + " tokens exceeds segment_len " +
                      std::to_string(config_.segment_len));
  }
  if (config_.max_segments != 0 && carry.segments_seen >= config_.max_segments) {
    throw ConfigError("forward_segment: more than max_segments segments");
  }
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab) {
      throw ConfigError("forward_segment: token id " + std::to_string(t) + " outside vocabulary");
    }
  }

  const std::size_t m = config_.mem_tokens, n = 2 * m + L;
  std::vector<std::size_t> read_rows, token_rows, write_rows, non_read_rows, positions;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < m; ++i) read_rows.push_back(b * n + i);
    for (std::size_t t = 0; t < L; ++t) {
      token_rows.push_back(b * n + m + t);
      positions.push_back(t);
    }
    for (std::size_t i = 0; i < m; ++i) write_rows.push_back(b * n + m + L + i);
    for (std::size_t i = m; i < n; ++i) non_read_rows.push_back(b * n + i);
  }

  Var<T> x = nn::add(nn::embedding(g.param(*token_embedding_), tokens),
                     nn::gather_rows(g.param(*position_embedding_), positions));
  Var<T> read_src, write_src;
  switch (config_.variant) {
    case Variant::rmt:
      read_src = write_src = carry.memory[0];
      break;
    case Variant::prmt:
      read_src = carry.memory[0];
      write_src = broadcast(g, *write_init_, batch);
      break;
    case Variant::armt:
    case Variant::armt_no_gamma:
      read_src = broadcast(g, *layers_[0].read_init, batch);
      write_src = broadcast(g, *write_init_, batch);
      break;
  }
  const std::vector<Var<T>> parts{read_src, x, write_src};
  Var<T> h = nn::assemble_rows<T>(parts, {read_rows, token_rows, write_rows}, batch * n);

  Carry<T> next;
  next.batch = batch;
  next.segments_seen = carry.segments_seen + 1;
  const nn::AttentionLayout layout{batch, config_.heads, true};
  const assoc::StateDims dims = config_.state_dims();
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const Layer& layer = layers_[l];
    if (l > 0 && config_.variant != Variant::rmt) {
      Var<T> read = config_.variant == Variant::prmt ? carry.memory[l] : broadcast(g, *layer.read_init, batch);
      const std::vector<Var<T>> rebuilt{nn::gather_rows(h, non_read_rows), read};
      h = nn::assemble_rows<T>(rebuilt, {non_read_rows, read_rows}, batch * n);
    }
    if (config_.associative()) {
      Var<T> state = carry.states[l];
      if (carry.segments_seen > 0) {
        state = assoc::memory_update(state, carry.memory[l], layer.assoc, config_.feature_map,
                                     config_.gamma_policy(), dims);
      }
      next.states.push_back(state);
      h = assoc::assoc_block(h, state, layer.assoc, config_.feature_map, dims);
    }
    h = nn::transformer_block(h, layer.block, layout, l);
    if (config_.variant != Variant::rmt) next.memory.push_back(nn::gather_rows(h, write_rows));
  }
  if (config_.variant == Variant::rmt) next.memory.push_back(nn::gather_rows(h, write_rows));

  SegmentOutput<T> out;
  if (want_logits) {
    Var<T> xo = nn::layer_norm(nn::gather_rows(h, token_rows), g.param(*final_gain_), g.param(*final_bias_));
    out.logits = nn::linear(xo, g.param(*head_weight_), g.param(*head_bias_));
  }
  out.carry = std::move(next);
  return out;
}

namespace {

template <typename T>
Carry<T> detach_carry(const Carry<T>& c) {
  Carry<T> d = c;
  for (auto& v : d.memory) v = nn::detach(v);
  for (auto& v : d.states) v = nn::detach(v);
  return d;
}

}  // namespace

template <typename T>
SequenceOutput<T> Model<T>::forward_sequence(Graph<T>& g, std::span<const SegmentBatch> segments,
                                             bool detach_between) {
  if (segments.empty()) throw ConfigError("forward_sequence: no segments");
  const std::size_t batch = segments[0].batch;
  double total_weight = 0.0;
  for (const SegmentBatch& s : segments) {
    if (s.batch != batch) throw ConfigError("forward_sequence: segments disagree on batch size");
    if (s.tokens.size() != s.batch * s.len || s.targets.size() != s.tokens.size() ||
        s.weights.size() != s.tokens.size()) {
      throw ConfigError("forward_sequence: segment arrays do not match [batch x len]");
    }
    for (double w : s.weights) total_weight += w;
  }

  SequenceOutput<T> out;
  Carry<T> carry = initial_carry(g, batch);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const SegmentBatch& s = segments[i];
    if (i > 0 && (detach_between || (config_.bptt_window != 0 && i % config_.bptt_window == 0))) {
      carry = detach_carry(carry);
    }
    const bool supervised = s.supervised();
    const bool want = supervised || i + 1 == segments.size();
    SegmentOutput<T> so = forward_segment(g, carry, s.tokens, batch, want);
    if (supervised) {
      std::vector<T> w(s.weights.begin(), s.weights.end());
      double seg_weight = 0.0;
      for (double v : s.weights) seg_weight += v;
      Var<T> term = nn::cross_entropy(so.logits, std::span<const int>(s.targets), std::span<const T>(w));
      term = nn::scale(term, static_cast<T>(seg_weight / total_weight));
      out.loss = out.loss.valid() ? nn::add(out.loss, term) : term;
    }
    out.logits.push_back(so.logits);
    carry = std::move(so.carry);
  }
  out.carry = std::move(carry);
  return out;
}

template <typename T>
void Model<T>::copy_parameters_from(const Model& other) {
  for (auto& p : store_) {
    const nn::Parameter<T>* src = other.store_.find(p.name);
    if (!src) continue;
    if (src->value.shape() != p.value.shape()) {
      throw ConfigError("copy_parameters_from: shape mismatch for " + p.name);
    }
    p.value = src->value;
  }
}

template <typename T>
Carry<T> rebind(Graph<T>& g, const Carry<T>& c) {
  Carry<T> out;
  out.batch = c.batch;
  out.segments_seen = c.segments_seen;
  for (const auto& v : c.memory) out.memory.push_back(g.constant(v.value()));
  for (const auto& v : c.states) out.states.push_back(g.constant(v.value()));
  return out;
}

template Carry<float> rebind<float>(Graph<float>&, const Carry<float>&);
template Carry<double> rebind<double>(Graph<double>&, const Carry<double>&);
template struct Carry<float>;
template struct Carry<double>;
template class Model<float>;
template class Model<double>;

}  // namespace armt::models

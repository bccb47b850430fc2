#pragma once

// Segment-recurrent language models over a shared transformer stack.
//
// Every variant lays out one sample's segment as
//
//   [read memory (mem_tokens rows); segment tokens; write memory (mem_tokens rows)]
//
// under causal attention, so segment tokens see the read memory and the write
// memory sees the whole segment. The variants differ in what fills the read
// and write rows and what is carried to the next segment:
//
//   rmt   read and write rows both start from the carried memory (a learned
//         initial set at segment 0) and flow through all layers; the final
//         layer's write rows become the next carry.
//   prmt  at layer l the read rows are replaced by the carry of layer l (a
//         learned per-layer set at segment 0); write rows start from a learned
//         set and flow through the layers; layer l's write rows are its carry.
//   armt  read rows are always the learned per-layer set; write rows flow as in
//         prmt. Before layer l reads, the write rows it produced in the previous
//         segment are inserted into its associative state, and every row gets
//         the associative read-out added before the transformer block.
//
// armt_no_gamma is armt with the normalizer correction fixed at 1.
//
// By default the feature maps are scaled to unit norm and gamma is clamped to
// [0, 1]; without both, overlapping keys drive the normalizer towards zero and
// reads diverge within a few hundred training steps.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "armt/assoc/associative_memory.hpp"
#include "armt/assoc/graph_ops.hpp"
#include "armt/nn/adam.hpp"
#include "armt/nn/graph.hpp"
#include "armt/nn/parameters.hpp"
#include "armt/nn/rng.hpp"
#include "armt/nn/transformer.hpp"

namespace armt::models {

using nn::Graph;
using nn::Tensor;
using nn::Var;

enum class Variant { armt, rmt, prmt, armt_no_gamma };

std::string variant_name(Variant v);
/// Throws ConfigError for unknown names.
Variant parse_variant(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::armt;
  std::size_t layers = 4;
  std::size_t hidden = 128;
  std::size_t heads = 4;
  std::size_t mem_tokens = 10;
  std::size_t d_mem = 32;  // key/query width; values use the same width
  assoc::FeatureMapSpec feature_map{assoc::FeatureMapKind::dpfp, 3, true};
  std::size_t vocab = 20;
  std::size_t segment_len = 9;
  std::size_t max_segments = 0;  // 0 = unbounded
  bool detach_gamma = true;
  bool clip_gamma = true;
  std::size_t bptt_window = 0;  // segments per truncated-BPTT window; 0 = full BPTT
  double init_std = 0.02;

  bool associative() const { return variant == Variant::armt || variant == Variant::armt_no_gamma; }
  std::size_t d_phi() const { return feature_map.output_dim(d_mem); }
  assoc::StateDims state_dims() const { return {d_mem, d_phi()}; }
  assoc::GammaPolicy gamma_policy() const { return {variant != Variant::armt_no_gamma, detach_gamma, clip_gamma}; }

  /// Throws ConfigError on inconsistent settings, including the identity feature map.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Number of floats held between segments for one sample.
std::size_t count_recurrent_floats(const ModelConfig& config);

/// State threaded between segments. Rows are grouped by sample.
template <typename T>
struct Carry {
  std::size_t batch = 0;
  std::size_t segments_seen = 0;
  std::vector<Var<T>> memory;  // rmt: one [batch*mem x hidden]; prmt/armt: one per layer
  std::vector<Var<T>> states;  // armt: one [batch x state width] per layer

  /// Floats per sample currently held.
  std::size_t float_count() const;
};

/// Copies the carry's values into `g` as constants, so a long sequence can be
/// processed one graph per segment when no gradient is needed.
template <typename T>
Carry<T> rebind(Graph<T>& g, const Carry<T>& carry);

template <typename T>
struct SegmentOutput {
  Var<T> logits;  // [batch*len x vocab], or invalid when not requested
  Carry<T> carry;
};

/// One segment of a batch: tokens, next-token targets and loss weights, all
/// [batch x len] row-major.
struct SegmentBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<int> tokens;
  std::vector<int> targets;
  std::vector<double> weights;

  bool supervised() const;
};

template <typename T>
struct SequenceOutput {
  Var<T> loss;                 // weighted mean over all supervised positions
  std::vector<Var<T>> logits;  // per segment; valid only where requested or supervised
  Carry<T> carry;
};

template <typename T>
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore<T>& parameters() { return store_; }
  const nn::ParameterStore<T>& parameters() const { return store_; }

  Carry<T> initial_carry(Graph<T>& g, std::size_t batch) const;

  /// `tokens` is [batch x len] with len <= segment_len.
  SegmentOutput<T> forward_segment(Graph<T>& g, const Carry<T>& carry, std::span<const int> tokens,
                                   std::size_t batch, bool want_logits = true);

  /// Folds forward_segment over the segments. Logits are kept for supervised
  /// segments and for the last one.
  SequenceOutput<T> forward_sequence(Graph<T>& g, std::span<const SegmentBatch> segments,
                                     bool detach_carry = false);

  /// Copies parameter values from another model with the same configuration.
  void copy_parameters_from(const Model& other);

 private:
  struct Layer {
    nn::TransformerBlockWeights<T> block;
    assoc::AssocProjections<T> assoc;     // armt only
    nn::Parameter<T>* read_init = nullptr;  // prmt/armt
  };

  Var<T> broadcast(Graph<T>& g, nn::Parameter<T>& p, std::size_t batch) const;

  ModelConfig config_;
  nn::ParameterStore<T> store_;
  nn::Parameter<T>* token_embedding_ = nullptr;
  nn::Parameter<T>* position_embedding_ = nullptr;
  nn::Parameter<T>* memory_init_ = nullptr;  // rmt
  nn::Parameter<T>* write_init_ = nullptr;   // prmt/armt
  std::vector<Layer> layers_;
  nn::Parameter<T>* final_gain_ = nullptr;
  nn::Parameter<T>* final_bias_ = nullptr;
  nn::Parameter<T>* head_weight_ = nullptr;
  nn::Parameter<T>* head_bias_ = nullptr;
};

/// Everything needed to resume training.
template <typename T>
struct TrainingSnapshot {
  std::optional<nn::AdamState<T>> optimizer;
  nlohmann::json trainer = nlohmann::json::object();
  std::optional<Rng> rng;
};

template <typename T>
struct LoadedCheckpoint {
  Model<T> model;
  TrainingSnapshot<T> snapshot;
};

/// Binary container: "ARCK", u32 version, u64 manifest length, JSON manifest
/// (config, precision, parameter table, optimizer step, trainer state, RNG),
/// then parameter values and optimizer moments as little-endian arrays in
/// manifest order.
template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, const TrainingSnapshot<T>& snapshot = {});

/// Throws io::FormatError on a damaged or wrong-version file and ConfigError
/// if `expected` is given and differs from the stored configuration.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr);

/// Reads only the configuration from a checkpoint.
ModelConfig read_checkpoint_config(const std::string& path);

/// "float32" or "float64".
std::string read_checkpoint_precision(const std::string& path);

}  // namespace armt::models

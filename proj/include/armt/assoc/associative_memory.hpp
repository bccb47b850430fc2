#pragma once

// Fast-weight associative memory.
//
// State is a value matrix A [d_val x d_phi] and a normalization vector z
// [d_phi], both zero at start. Writes follow the delta rule: the value
// currently stored under a key is recalled and replaced,
//
//   v_bar = A phi(k) / max(z . phi(k), eps)
//   A    += beta * (v - v_bar) phi(k)^T
//   z    += gamma * phi(k),   gamma = 1 - (z . phi(k)) / max(|phi(k)|^2, eps)
//
// and reads return A phi(q) / max(z . phi(q), eps). The gamma factor removes
// the part of phi(k) already present in z so that overwriting a key does not
// inflate the normalizer; GammaPolicy::correct = false fixes gamma at 1.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "armt/nn/parameters.hpp"
#include "armt/nn/tensor.hpp"

namespace armt::assoc {

using nn::Parameter;
using nn::ParameterStore;
using nn::Tensor;

/// Denominator stabilizer shared by recall, read and gamma.
inline constexpr double kEpsilon = 1e-6;

enum class FeatureMapKind { identity, dpfp };

struct FeatureMapSpec {
  FeatureMapKind kind = FeatureMapKind::dpfp;
  std::size_t nu = 3;
  bool normalize = false;  // scale each feature vector to unit L2 norm

  std::size_t output_dim(std::size_t input_dim) const {
    return kind == FeatureMapKind::identity ? input_dim : 2 * input_dim * nu;
  }

  friend bool operator==(const FeatureMapSpec&, const FeatureMapSpec&) = default;
};

struct GammaPolicy {
  bool correct = true;  // false: gamma == 1 (uncorrected normalizer)
  bool detach = true;   // no gradient through gamma
  bool clip = false;    // clamp gamma to [0, 1]
};

/// Deterministic parameter-free projection. For dpfp-nu with r = [relu(x); relu(-x)],
/// block j (1-based) of the output is r (.) roll(r, j), where roll(r, j)_i = r_{(i+j) mod 2d}.
/// With spec.normalize the result is divided by max(norm, kEpsilon).
template <typename T>
void phi(std::span<const T> x, const FeatureMapSpec& spec, std::span<T> out);

template <typename T>
std::vector<T> phi(std::span<const T> x, const FeatureMapSpec& spec);

/// Accumulates d(out)/dx^T * out_grad into x_grad.
template <typename T>
void phi_backward(std::span<const T> x, const FeatureMapSpec& spec, std::span<const T> out_grad,
                  std::span<T> x_grad);

template <typename T>
struct AssociativeState {
  Tensor<T> A;  // [d_val x d_phi]
  Tensor<T> z;  // [d_phi]

  AssociativeState() = default;
  AssociativeState(std::size_t d_val, std::size_t d_phi) : A({d_val, d_phi}), z({d_phi}) {}

  std::size_t d_val() const { return A.rows(); }
  std::size_t d_phi() const { return z.size(); }
  std::size_t float_count() const { return A.size() + z.size(); }

  friend bool operator==(const AssociativeState&, const AssociativeState&) = default;
};

/// Value currently associated with a feature-mapped key.
template <typename T>
std::vector<T> recall_prev(const AssociativeState<T>& state, std::span<const T> k_phi);

/// Normalizer correction for inserting k_phi; 1 on an empty state.
template <typename T>
T gamma(const AssociativeState<T>& state, std::span<const T> k_phi);

/// Delta-rule write of (k_phi, v) with gate beta.
template <typename T>
void insert_kv(AssociativeState<T>& state, std::span<const T> k_phi, std::span<const T> v, T beta,
               const GammaPolicy& policy = {});

/// Read with an already feature-mapped query; state is not modified.
template <typename T>
std::vector<T> read(const AssociativeState<T>& state, std::span<const T> q_phi);

/// Learned projections of one associative layer. Shapes follow [out x in].
template <typename T>
struct AssocProjections {
  Parameter<T>* key = nullptr;    // [d_mem x hidden]
  Parameter<T>* value = nullptr;  // [d_val x hidden]
  Parameter<T>* beta = nullptr;   // [1 x hidden]
  Parameter<T>* query = nullptr;  // [d_mem x hidden]
  Parameter<T>* out = nullptr;    // [hidden x d_val], zero at init

  std::size_t hidden() const { return key->value.dim(1); }
  std::size_t d_mem() const { return key->value.dim(0); }
  std::size_t d_val() const { return value->value.dim(0); }

  static AssocProjections create(ParameterStore<T>& store, const std::string& prefix,
                                 std::size_t hidden, std::size_t d_mem, std::size_t d_val, Rng& rng,
                                 double init_std = 0.02);
};

/// Projects memory token m to (k, v, beta) and writes it.
template <typename T>
void insert(AssociativeState<T>& state, std::span<const T> m, const AssocProjections<T>& proj,
            const FeatureMapSpec& spec, const GammaPolicy& policy = {});

/// Association recalled for token x (value space, before the output projection).
template <typename T>
std::vector<T> query(const AssociativeState<T>& state, std::span<const T> x,
                     const AssocProjections<T>& proj, const FeatureMapSpec& spec);

/// Snapshot format: "ARAS" magic, u32 version, u32 element bytes, u64 d_val,
/// u64 d_phi, then A and z as little-endian arrays.
template <typename T>
void write_state(std::ostream& os, const AssociativeState<T>& state);

template <typename T>
AssociativeState<T> read_state(std::istream& is);

// Span-level kernels shared by the vector API above and the graph ops.
namespace detail {

struct DeltaStepTrace {
  double s = 0.0;      // z . phi before the write
  double gamma = 1.0;  // applied normalizer factor
};

/// One write. `gamma_override`, when given, replaces the computed gamma.
template <typename T>
DeltaStepTrace delta_step(T* A, T* z, const T* k_phi, const T* v, T beta, std::size_t d_val,
                          std::size_t d_phi, const GammaPolicy& policy, T* v_bar_out,
                          const T* gamma_override = nullptr);

/// y = A phi / max(z . phi, eps); returns the raw z . phi.
template <typename T>
T read_into(const T* A, const T* z, const T* q_phi, std::size_t d_val, std::size_t d_phi, T* y);

}  // namespace detail

}  // namespace armt::assoc

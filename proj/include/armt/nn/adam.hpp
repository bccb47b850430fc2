#pragma once

#include <cstdint>
#include <vector>

#include "armt/nn/parameters.hpp"

namespace armt::nn {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor<T>> first;   // one per parameter, store order
  std::vector<Tensor<T>> second;

  static AdamState for_parameters(const ParameterStore<T>& params) {
    AdamState s;
    for (const auto& p : params) {
      s.first.emplace_back(p.value.shape());
      s.second.emplace_back(p.value.shape());
    }
    return s;
  }
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// `lr` overrides hyper.lr when positive (used by warmup schedules). A
/// non-finite gradient aborts the step before any parameter is touched and
/// throws NumericError naming the parameter.
template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state, const AdamHyper& hyper, double lr = -1.0);

/// Rescales gradients so their global L2 norm is at most max_norm; returns the
/// pre-clip norm. max_norm <= 0 disables clipping.
template <typename T>
double clip_grad_norm(ParameterStore<T>& params, double max_norm);

}  // namespace armt::nn

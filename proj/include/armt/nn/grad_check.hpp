#pragma once

// Central finite-difference gradient oracle. Runs at 64-bit only.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "armt/nn/graph.hpp"
#include "armt/nn/parameters.hpp"

namespace armt::nn {

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
  // near-zero gradients from reporting noise as error.
  double floor = 1e-5;
  // Check at most this many entries per tensor (evenly strided); 0 = all.
  std::size_t max_entries_per_tensor = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double analytic = 0.0;  // at the worst entry
  double numeric = 0.0;
  std::size_t tensor = 0;
  std::size_t entry = 0;
  std::size_t checked = 0;
};

using ScalarFunction = std::function<Var<double>(Graph<double>&, std::span<const Var<double>>)>;

/// Compares the tape gradient of f with respect to each input tensor against
/// central differences. f must return a scalar node.
GradCheckResult grad_check(const ScalarFunction& f, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& options = {});

/// Same, differentiating with respect to every parameter in `params`.
GradCheckResult grad_check_parameters(const std::function<Var<double>(Graph<double>&)>& f,
                                      ParameterStore<double>& params,
                                      const GradCheckOptions& options = {});

}  // namespace armt::nn

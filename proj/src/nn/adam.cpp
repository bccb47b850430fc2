#include "armt/nn/adam.hpp"

#include <cmath>

namespace armt::nn {

template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state, const AdamHyper& hyper, double lr) {
  if (state.first.size() != params.size() || state.second.size() != params.size()) {
    throw ConfigError("adam_step: optimizer state does not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.first[i].shape() != p.value.shape() || state.second[i].shape() != p.value.shape()) {
      throw ConfigError("adam_step: optimizer state shape mismatch for " + p.name);
    }
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient for parameter " + p.name);
  }

  state.step += 1;
  const double step_lr = lr > 0.0 ? lr : hyper.lr;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    T* m = state.first[i].ptr();
    T* v = state.second[i].ptr();
    T* w = p.value.ptr();
    const T* g = p.grad.ptr();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = hyper.beta1 * static_cast<double>(m[j]) + (1.0 - hyper.beta1) * gj;
      const double vj = hyper.beta2 * static_cast<double>(v[j]) + (1.0 - hyper.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      w[j] = static_cast<T>(static_cast<double>(w[j]) - step_lr * mhat / (std::sqrt(vhat) + hyper.eps));
    }
  }
}

template <typename T>
double clip_grad_norm(ParameterStore<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (T g : p.grad.data()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
      for (T& g : p.grad.storage()) g *= factor;
    }
  }
  return norm;
}

template void adam_step<float>(ParameterStore<float>&, AdamState<float>&, const AdamHyper&, double);
template void adam_step<double>(ParameterStore<double>&, AdamState<double>&, const AdamHyper&, double);
template double clip_grad_norm<float>(ParameterStore<float>&, double);
template double clip_grad_norm<double>(ParameterStore<double>&, double);

}  // namespace armt::nn

#include "armt/assoc/graph_ops.hpp"

#include <algorithm>
#include <memory>
#include <vector>

#include "armt/kernels/kernels.hpp"

namespace armt::assoc {

using kernels::Transpose;

namespace {

template <typename T>
std::size_t batch_of(Var<T> states, const StateDims& dims) {
  const auto& sv = states.value();
  if (sv.rank() != 2 || sv.dim(1) != dims.width()) {
    throw ConfigError("associative states have shape " + nn::shape_string(sv.shape()) +
                      ", expected width " + std::to_string(dims.width()));
  }
  return sv.dim(0);
}

}  // namespace

template <typename T>
Var<T> empty_states(Graph<T>& g, std::size_t batch, const StateDims& dims) {
  return g.constant(Tensor<T>({batch, dims.width()}));
}

template <typename T>
Var<T> feature_map(Var<T> x, const FeatureMapSpec& spec) {
  if (spec.kind == FeatureMapKind::identity) return x;
  Graph<T>* g = x.graph;
  const Tensor<T>& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols(), w = spec.output_dim(d);
  Tensor<T> out({n, w});
  for (std::size_t i = 0; i < n; ++i) {
    phi<T>(std::span<const T>(xv.ptr() + i * d, d), spec, std::span<T>(out.ptr() + i * w, w));
  }
  return g->record(std::move(out), {x}, [g, x, spec, n, d, w](const Tensor<T>& gout) {
    const Tensor<T>& xv = g->value(x);
    Tensor<T>& gx = g->grad(x);
    for (std::size_t i = 0; i < n; ++i) {
      phi_backward<T>(std::span<const T>(xv.ptr() + i * d, d), spec,
                      std::span<const T>(gout.ptr() + i * w, w), std::span<T>(gx.ptr() + i * d, d));
    }
  });
}

template <typename T>
Var<T> assoc_insert(Var<T> states, Var<T> k_phi, Var<T> value, Var<T> beta, const StateDims& dims,
                    const GammaPolicy& policy) {
  Graph<T>* g = states.graph;
  const std::size_t batch = batch_of(states, dims);
  const std::size_t dv = dims.d_val, dp = dims.d_phi, width = dims.width();
  if (k_phi.value().rows() != batch || k_phi.value().cols() != dp) {
    throw ConfigError("assoc_insert: key features must be [batch x d_phi]");
  }
  if (value.value().rows() != batch || value.value().cols() != dv) {
    throw ConfigError("assoc_insert: values must be [batch x d_val]");
  }
  if (beta.value().size() != batch) throw ConfigError("assoc_insert: beta must be [batch x 1]");

  Tensor<T> out = states.value();
  auto v_bar = std::make_shared<std::vector<T>>(batch * dv);
  auto traces = std::make_shared<std::vector<detail::DeltaStepTrace>>(batch);
  const Tensor<T>& kv = k_phi.value();
  const Tensor<T>& vv = value.value();
  const Tensor<T>& bv = beta.value();
  // A detached gamma is a stop-gradient value, so it goes through the graph's
  // detach tape like any other.
  Tensor<T> gammas;
  if (policy.correct && policy.detach) {
    gammas = Tensor<T>({batch});
    for (std::size_t b = 0; b < batch; ++b) {
      const T* z = out.ptr() + b * width + dv * dp;
      const T* k = kv.ptr() + b * dp;
      const T s = kernels::dot<T>(z, k, dp);
      gammas[b] = T(1) - s / std::max(kernels::dot<T>(k, k, dp), T(kEpsilon));
      if (policy.clip) gammas[b] = std::clamp(gammas[b], T(0), T(1));
    }
    gammas = g->stop_gradient(std::move(gammas));
  }
  for (std::size_t b = 0; b < batch; ++b) {
    T* row = out.ptr() + b * width;
    (*traces)[b] = detail::delta_step(row, row + dv * dp, kv.ptr() + b * dp, vv.ptr() + b * dv, bv[b],
                                      dv, dp, policy, v_bar->data() + b * dv,
                                      gammas.empty() ? nullptr : gammas.ptr() + b);
  }

  return g->record(
      std::move(out), {states, k_phi, value, beta},
      [g, states, k_phi, value, beta, v_bar, traces, policy, batch, dv, dp, width](const Tensor<T>& gout) {
        const Tensor<T>& sv = g->value(states);
        const Tensor<T>& kv = g->value(k_phi);
        const Tensor<T>& vv = g->value(value);
        const Tensor<T>& bv = g->value(beta);
        const bool need_s = g->requires_grad(states);
        const bool need_k = g->requires_grad(k_phi);
        const bool need_v = g->requires_grad(value);
        const bool need_b = g->requires_grad(beta);
        T* gs_ptr = need_s ? g->grad(states).ptr() : nullptr;
        T* gk_ptr = need_k ? g->grad(k_phi).ptr() : nullptr;
        T* gv_ptr = need_v ? g->grad(value).ptr() : nullptr;
        T* gb_ptr = need_b ? g->grad(beta).ptr() : nullptr;

        std::vector<T> delta(dv), w(dv), gu(dv), gphi(dp);
        const T eps = T(kEpsilon);
        for (std::size_t b = 0; b < batch; ++b) {
          const T* A = sv.ptr() + b * width;
          const T* z = A + dv * dp;
          const T* gA_next = gout.ptr() + b * width;
          const T* gz_next = gA_next + dv * dp;
          const T* phi_k = kv.ptr() + b * dp;
          const T* vb = v_bar->data() + b * dv;
          const T beta_b = bv[b];
          const T s = static_cast<T>((*traces)[b].s);
          const T gam = static_cast<T>((*traces)[b].gamma);
          const T s_tilde = std::max(s, eps);

          std::fill(gphi.begin(), gphi.end(), T(0));
          T g_beta = T(0);
          T gv_bar_dot_v_bar = T(0);
          for (std::size_t a = 0; a < dv; ++a) {
            delta[a] = vv[b * dv + a] - vb[a];
            w[a] = kernels::dot<T>(gA_next + a * dp, phi_k, dp);
            g_beta += delta[a] * w[a];
            kernels::axpy<T>(dp, beta_b * delta[a], gA_next + a * dp, gphi.data());
            const T gv_bar = -beta_b * w[a];
            gu[a] = gv_bar / s_tilde;
            gv_bar_dot_v_bar += gv_bar * vb[a];
          }
          T g_s = s > eps ? -gv_bar_dot_v_bar / s_tilde : T(0);

          for (std::size_t a = 0; a < dv; ++a) kernels::axpy<T>(dp, gu[a], A + a * dp, gphi.data());

          kernels::axpy<T>(dp, gam, gz_next, gphi.data());
          const T norm2 = kernels::dot<T>(phi_k, phi_k, dp);
          const T n_tilde = std::max(norm2, eps);
          const T raw_gamma = T(1) - s / n_tilde;
          const bool clipped = policy.clip && (raw_gamma < T(0) || raw_gamma > T(1));
          if (policy.correct && !policy.detach && !clipped) {
            const T g_gamma = kernels::dot<T>(gz_next, phi_k, dp);
            g_s += -g_gamma / n_tilde;
            if (norm2 > eps) {
              kernels::axpy<T>(dp, T(2) * g_gamma * s / (n_tilde * n_tilde), phi_k, gphi.data());
            }
          }
          kernels::axpy<T>(dp, g_s, z, gphi.data());

          if (need_s) {
            T* gA = gs_ptr + b * width;
            T* gz = gA + dv * dp;
            kernels::axpy<T>(width, T(1), gA_next, gA);
            for (std::size_t a = 0; a < dv; ++a) kernels::axpy<T>(dp, gu[a], phi_k, gA + a * dp);
            kernels::axpy<T>(dp, g_s, phi_k, gz);
          }
          if (need_k) kernels::axpy<T>(dp, T(1), gphi.data(), gk_ptr + b * dp);
          if (need_v) kernels::axpy<T>(dv, beta_b, w.data(), gv_ptr + b * dv);
          if (need_b) gb_ptr[b] += g_beta;
        }
      });
}

template <typename T>
Var<T> assoc_read(Var<T> states, Var<T> q_phi, const StateDims& dims) {
  Graph<T>* g = states.graph;
  const std::size_t batch = batch_of(states, dims);
  const std::size_t dv = dims.d_val, dp = dims.d_phi, width = dims.width();
  const Tensor<T>& qv = q_phi.value();
  if (qv.cols() != dp || qv.rows() % batch != 0) {
    throw ConfigError("assoc_read: query features must be [batch * rows x d_phi]");
  }
  const std::size_t rows = qv.rows() / batch;
  const Tensor<T>& sv = states.value();
  auto y = std::make_shared<Tensor<T>>(nn::Shape{batch * rows, dv});
  auto s = std::make_shared<std::vector<T>>(batch * rows);
  const T eps = T(kEpsilon);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* A = sv.ptr() + b * width;
    const T* z = A + dv * dp;
    const T* Q = qv.ptr() + b * rows * dp;
    T* Y = y->ptr() + b * rows * dv;
    kernels::gemm<T>(Transpose::no, Transpose::yes, rows, dv, dp, T(1), Q, dp, A, dp, T(0), Y, dv);
    for (std::size_t j = 0; j < rows; ++j) {
      const T sj = kernels::dot<T>(z, Q + j * dp, dp);
      (*s)[b * rows + j] = sj;
      const T inv = T(1) / std::max(sj, eps);
      for (std::size_t a = 0; a < dv; ++a) Y[j * dv + a] *= inv;
    }
  }
  Tensor<T> out = *y;
  return g->record(
      std::move(out), {states, q_phi},
      [g, states, q_phi, y, s, batch, rows, dv, dp, width](const Tensor<T>& gout) {
        const Tensor<T>& sv = g->value(states);
        const Tensor<T>& qv = g->value(q_phi);
        const bool need_s = g->requires_grad(states);
        const bool need_q = g->requires_grad(q_phi);
        const T eps = T(kEpsilon);
        std::vector<T> gu(rows * dv), gs(rows);
        for (std::size_t b = 0; b < batch; ++b) {
          const T* A = sv.ptr() + b * width;
          const T* z = A + dv * dp;
          const T* Q = qv.ptr() + b * rows * dp;
          for (std::size_t j = 0; j < rows; ++j) {
            const T sj = (*s)[b * rows + j];
            const T s_tilde = std::max(sj, eps);
            const T* gy = gout.ptr() + (b * rows + j) * dv;
            const T* yj = y->ptr() + (b * rows + j) * dv;
            T dot_gy_y = T(0);
            for (std::size_t a = 0; a < dv; ++a) {
              gu[j * dv + a] = gy[a] / s_tilde;
              dot_gy_y += gy[a] * yj[a];
            }
            gs[j] = sj > eps ? -dot_gy_y / s_tilde : T(0);
          }
          if (need_s) {
            T* gA = g->grad(states).ptr() + b * width;
            T* gz = gA + dv * dp;
            kernels::gemm<T>(Transpose::yes, Transpose::no, dv, dp, rows, T(1), gu.data(), dv, Q, dp,
                             T(1), gA, dp);
            for (std::size_t j = 0; j < rows; ++j) kernels::axpy<T>(dp, gs[j], Q + j * dp, gz);
          }
          if (need_q) {
            T* gQ = g->grad(q_phi).ptr() + b * rows * dp;
            kernels::gemm<T>(Transpose::no, Transpose::no, rows, dp, dv, T(1), gu.data(), dv, A, dp,
                             T(1), gQ, dp);
            for (std::size_t j = 0; j < rows; ++j) kernels::axpy<T>(dp, gs[j], z, gQ + j * dp);
          }
        }
      });
}

template <typename T>
Var<T> memory_update(Var<T> states, Var<T> memory, const AssocProjections<T>& proj,
                     const FeatureMapSpec& spec, const GammaPolicy& policy, const StateDims& dims) {
  Graph<T>& g = *states.graph;
  const std::size_t batch = batch_of(states, dims);
  const std::size_t total = memory.value().rows();
  if (total % batch != 0) throw ConfigError("memory_update: memory rows not divisible by batch");
  const std::size_t n_mem = total / batch;

  Var<T> keys = feature_map(nn::linear(memory, g.param(*proj.key)), spec);
  Var<T> values = nn::linear(memory, g.param(*proj.value));
  Var<T> betas = nn::sigmoid(nn::linear(memory, g.param(*proj.beta)));
  for (std::size_t i = 0; i < n_mem; ++i) {
    std::vector<std::size_t> idx(batch);
    for (std::size_t b = 0; b < batch; ++b) idx[b] = b * n_mem + i;
    states = assoc_insert(states, nn::gather_rows(keys, idx), nn::gather_rows(values, idx),
                          nn::gather_rows(betas, idx), dims, policy);
  }
  return states;
}

template <typename T>
Var<T> assoc_block(Var<T> x, Var<T> states, const AssocProjections<T>& proj,
                   const FeatureMapSpec& spec, const StateDims& dims) {
  Graph<T>& g = *x.graph;
  Var<T> q = feature_map(nn::linear(x, g.param(*proj.query)), spec);
  Var<T> y = assoc_read(states, q, dims);
  return nn::add(x, nn::linear(y, g.param(*proj.out)));
}

#define ARMT_INSTANTIATE_ASSOC_OPS(T)                                                                \
  template Var<T> empty_states<T>(Graph<T>&, std::size_t, const StateDims&);                         \
  template Var<T> feature_map<T>(Var<T>, const FeatureMapSpec&);                                     \
  template Var<T> assoc_insert<T>(Var<T>, Var<T>, Var<T>, Var<T>, const StateDims&, const GammaPolicy&); \
  template Var<T> assoc_read<T>(Var<T>, Var<T>, const StateDims&);                                   \
  template Var<T> memory_update<T>(Var<T>, Var<T>, const AssocProjections<T>&, const FeatureMapSpec&, \
                                   const GammaPolicy&, const StateDims&);                            \
  template Var<T> assoc_block<T>(Var<T>, Var<T>, const AssocProjections<T>&, const FeatureMapSpec&,  \
                                 const StateDims&);

ARMT_INSTANTIATE_ASSOC_OPS(float)
ARMT_INSTANTIATE_ASSOC_OPS(double)

}  // namespace armt::assoc

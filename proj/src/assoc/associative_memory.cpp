#include "armt/assoc/associative_memory.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "armt/io/binary.hpp"
#include "armt/kernels/kernels.hpp"

namespace armt::assoc {

namespace {

template <typename T>
void phi_raw(std::span<const T> x, const FeatureMapSpec& spec, std::span<T> out) {
  const std::size_t d = x.size();
  if (spec.kind == FeatureMapKind::identity) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  const std::size_t w = 2 * d;
  auto r = [&](std::size_t i) -> T {
    return i < d ? std::max(x[i], T(0)) : std::max(-x[i - d], T(0));
  };
  for (std::size_t j = 1; j <= spec.nu; ++j) {
    T* block = out.data() + (j - 1) * w;
    for (std::size_t i = 0; i < w; ++i) block[i] = r(i) * r((i + j) % w);
  }
}

template <typename T>
void phi_raw_backward(std::span<const T> x, const FeatureMapSpec& spec, std::span<const T> out_grad,
                      std::span<T> x_grad) {
  const std::size_t d = x.size();
  if (spec.kind == FeatureMapKind::identity) {
    for (std::size_t i = 0; i < d; ++i) x_grad[i] += out_grad[i];
    return;
  }
  const std::size_t w = 2 * d;
  auto r = [&](std::size_t i) -> T {
    return i < d ? std::max(x[i], T(0)) : std::max(-x[i - d], T(0));
  };
  // Gradient with respect to r, then through the two relus.
  std::vector<T> gr(w, T(0));
  for (std::size_t j = 1; j <= spec.nu; ++j) {
    const T* g = out_grad.data() + (j - 1) * w;
    for (std::size_t i = 0; i < w; ++i) {
      const std::size_t k = (i + j) % w;
      gr[i] += g[i] * r(k);
      gr[k] += g[i] * r(i);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (x[i] > T(0)) x_grad[i] += gr[i];
    if (x[i] < T(0)) x_grad[i] -= gr[d + i];
  }
}

}  // namespace

template <typename T>
void phi(std::span<const T> x, const FeatureMapSpec& spec, std::span<T> out) {
  const std::size_t d = x.size();
  if (d == 0) throw ConfigError("phi: input dimension must be positive");
  if (out.size() != spec.output_dim(d)) throw ConfigError("phi: output buffer has wrong size");
  if (spec.kind == FeatureMapKind::dpfp && spec.nu == 0) throw ConfigError("phi: dpfp order must be positive");
  phi_raw<T>(x, spec, out);
  if (spec.normalize) {
    const T n = std::sqrt(kernels::dot<T>(out.data(), out.data(), out.size()));
    const T inv = T(1) / std::max(n, T(kEpsilon));
    for (T& v : out) v *= inv;
  }
}

template <typename T>
std::vector<T> phi(std::span<const T> x, const FeatureMapSpec& spec) {
  std::vector<T> out(spec.output_dim(x.size()));
  phi<T>(x, spec, out);
  return out;
}

template <typename T>
void phi_backward(std::span<const T> x, const FeatureMapSpec& spec, std::span<const T> out_grad,
                  std::span<T> x_grad) {
  if (!spec.normalize) {
    phi_raw_backward<T>(x, spec, out_grad, x_grad);
    return;
  }
  // y = u / max(|u|, eps): dy/du g = (g - y (y . g)) / |u| above the floor, g / eps below it.
  std::vector<T> u(spec.output_dim(x.size()));
  phi_raw<T>(x, spec, u);
  const T n = std::sqrt(kernels::dot<T>(u.data(), u.data(), u.size()));
  std::vector<T> gu(out_grad.begin(), out_grad.end());
  if (n > T(kEpsilon)) {
    const T inv = T(1) / n;
    const T yg = kernels::dot<T>(u.data(), out_grad.data(), u.size()) * inv;
    for (std::size_t i = 0; i < u.size(); ++i) gu[i] = (out_grad[i] - u[i] * inv * yg) * inv;
  } else {
    for (T& g : gu) g /= T(kEpsilon);
  }
  phi_raw_backward<T>(x, spec, gu, x_grad);
}

namespace detail {

template <typename T>
T read_into(const T* A, const T* z, const T* q_phi, std::size_t d_val, std::size_t d_phi, T* y) {
  const T s = kernels::dot<T>(z, q_phi, d_phi);
  const T denom = std::max(s, T(kEpsilon));
  for (std::size_t a = 0; a < d_val; ++a) y[a] = kernels::dot<T>(A + a * d_phi, q_phi, d_phi) / denom;
  return s;
}

template <typename T>
DeltaStepTrace delta_step(T* A, T* z, const T* k_phi, const T* v, T beta, std::size_t d_val,
                          std::size_t d_phi, const GammaPolicy& policy, T* v_bar_out,
                          const T* gamma_override) {
  std::vector<T> local;
  T* v_bar = v_bar_out;
  if (!v_bar) {
    local.resize(d_val);
    v_bar = local.data();
  }
  const T s = read_into(A, z, k_phi, d_val, d_phi, v_bar);
  T g = T(1);
  if (gamma_override) {
    g = *gamma_override;
  } else if (policy.correct) {
    const T norm2 = kernels::dot<T>(k_phi, k_phi, d_phi);
    g = T(1) - s / std::max(norm2, T(kEpsilon));
    if (policy.clip) g = std::clamp(g, T(0), T(1));
  }
  for (std::size_t a = 0; a < d_val; ++a) {
    kernels::axpy<T>(d_phi, beta * (v[a] - v_bar[a]), k_phi, A + a * d_phi);
  }
  kernels::axpy<T>(d_phi, g, k_phi, z);
  return {static_cast<double>(s), static_cast<double>(g)};
}

}  // namespace detail

namespace {

template <typename T>
void check_key(const AssociativeState<T>& state, std::size_t n, const char* what) {
  if (n != state.d_phi()) {
    throw ConfigError(std::string(what) + ": feature dimension " + std::to_string(n) +
                      " does not match state d_phi " + std::to_string(state.d_phi()));
  }
}

template <typename T>
std::vector<T> project(const Parameter<T>& w, std::span<const T> x) {
  const std::size_t rows = w.value.dim(0), cols = w.value.dim(1);
  if (x.size() != cols) throw ConfigError("projection input width mismatch for " + w.name);
  std::vector<T> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = kernels::dot<T>(w.value.ptr() + r * cols, x.data(), cols);
  return out;
}

}  // namespace

template <typename T>
std::vector<T> recall_prev(const AssociativeState<T>& state, std::span<const T> k_phi) {
  check_key(state, k_phi.size(), "recall_prev");
  std::vector<T> out(state.d_val());
  detail::read_into(state.A.ptr(), state.z.ptr(), k_phi.data(), state.d_val(), state.d_phi(), out.data());
  return out;
}

template <typename T>
T gamma(const AssociativeState<T>& state, std::span<const T> k_phi) {
  check_key(state, k_phi.size(), "gamma");
  const T s = kernels::dot<T>(state.z.ptr(), k_phi.data(), k_phi.size());
  const T norm2 = kernels::dot<T>(k_phi.data(), k_phi.data(), k_phi.size());
  return T(1) - s / std::max(norm2, T(kEpsilon));
}

template <typename T>
void insert_kv(AssociativeState<T>& state, std::span<const T> k_phi, std::span<const T> v, T beta,
               const GammaPolicy& policy) {
  check_key(state, k_phi.size(), "insert");
  if (v.size() != state.d_val()) throw ConfigError("insert: value dimension does not match state");
  detail::delta_step(state.A.ptr(), state.z.ptr(), k_phi.data(), v.data(), beta, state.d_val(),
                     state.d_phi(), policy, static_cast<T*>(nullptr));
}

template <typename T>
std::vector<T> read(const AssociativeState<T>& state, std::span<const T> q_phi) {
  check_key(state, q_phi.size(), "read");
  std::vector<T> out(state.d_val());
  detail::read_into(state.A.ptr(), state.z.ptr(), q_phi.data(), state.d_val(), state.d_phi(), out.data());
  return out;
}

template <typename T>
AssocProjections<T> AssocProjections<T>::create(ParameterStore<T>& store, const std::string& prefix,
                                                std::size_t hidden, std::size_t d_mem,
                                                std::size_t d_val, Rng& rng, double init_std) {
  AssocProjections p;
  p.key = &store.normal(prefix + ".key", {d_mem, hidden}, rng, init_std);
  p.value = &store.normal(prefix + ".value", {d_val, hidden}, rng, init_std);
  p.beta = &store.normal(prefix + ".beta", {1, hidden}, rng, init_std);
  p.query = &store.normal(prefix + ".query", {d_mem, hidden}, rng, init_std);
  p.out = &store.zeros(prefix + ".out", {hidden, d_val});
  return p;
}

template <typename T>
void insert(AssociativeState<T>& state, std::span<const T> m, const AssocProjections<T>& proj,
            const FeatureMapSpec& spec, const GammaPolicy& policy) {
  const std::vector<T> k = project(*proj.key, m);
  const std::vector<T> v = project(*proj.value, m);
  const T logit = project(*proj.beta, m)[0];
  const T beta = T(1) / (T(1) + std::exp(-logit));
  const std::vector<T> k_phi = phi<T>(k, spec);
  insert_kv<T>(state, k_phi, v, beta, policy);
}

template <typename T>
std::vector<T> query(const AssociativeState<T>& state, std::span<const T> x,
                     const AssocProjections<T>& proj, const FeatureMapSpec& spec) {
  const std::vector<T> q = project(*proj.query, x);
  return read<T>(state, phi<T>(q, spec));
}

namespace {
constexpr char kStateMagic[5] = "ARAS";
constexpr std::uint32_t kStateVersion = 1;
}  // namespace

template <typename T>
void write_state(std::ostream& os, const AssociativeState<T>& state) {
  io::write_magic(os, kStateMagic);
  io::write_scalar<std::uint32_t>(os, kStateVersion);
  io::write_scalar<std::uint32_t>(os, sizeof(T));
  io::write_scalar<std::uint64_t>(os, state.d_val());
  io::write_scalar<std::uint64_t>(os, state.d_phi());
  io::write_le(os, state.A.ptr(), state.A.size());
  io::write_le(os, state.z.ptr(), state.z.size());
}

template <typename T>
AssociativeState<T> read_state(std::istream& is) {
  io::expect_magic(is, kStateMagic, "associative state");
  if (io::read_scalar<std::uint32_t>(is) != kStateVersion) {
    throw io::FormatError("unsupported associative state version");
  }
  if (io::read_scalar<std::uint32_t>(is) != sizeof(T)) {
    throw io::FormatError("associative state precision does not match");
  }
  const auto d_val = io::read_scalar<std::uint64_t>(is);
  const auto d_phi = io::read_scalar<std::uint64_t>(is);
  AssociativeState<T> state(d_val, d_phi);
  io::read_le(is, state.A.ptr(), state.A.size());
  io::read_le(is, state.z.ptr(), state.z.size());
  return state;
}

#define ARMT_INSTANTIATE_ASSOC(T)                                                                     \
  template void phi<T>(std::span<const T>, const FeatureMapSpec&, std::span<T>);                      \
  template std::vector<T> phi<T>(std::span<const T>, const FeatureMapSpec&);                          \
  template void phi_backward<T>(std::span<const T>, const FeatureMapSpec&, std::span<const T>,        \
                                std::span<T>);                                                        \
  template std::vector<T> recall_prev<T>(const AssociativeState<T>&, std::span<const T>);             \
  template T gamma<T>(const AssociativeState<T>&, std::span<const T>);                                \
  template void insert_kv<T>(AssociativeState<T>&, std::span<const T>, std::span<const T>, T,         \
                             const GammaPolicy&);                                                     \
  template std::vector<T> read<T>(const AssociativeState<T>&, std::span<const T>);                    \
  template struct AssocProjections<T>;                                                                \
  template void insert<T>(AssociativeState<T>&, std::span<const T>, const AssocProjections<T>&,       \
                          const FeatureMapSpec&, const GammaPolicy&);                                 \
  template std::vector<T> query<T>(const AssociativeState<T>&, std::span<const T>,                    \
                                   const AssocProjections<T>&, const FeatureMapSpec&);                \
  template void write_state<T>(std::ostream&, const AssociativeState<T>&);                            \
  template AssociativeState<T> read_state<T>(std::istream&);                                          \
  template detail::DeltaStepTrace detail::delta_step<T>(T*, T*, const T*, const T*, T, std::size_t,   \
                                                        std::size_t, const GammaPolicy&, T*,          \
                                                        const T*);                                    \
  template T detail::read_into<T>(const T*, const T*, const T*, std::size_t, std::size_t, T*);

ARMT_INSTANTIATE_ASSOC(float)
ARMT_INSTANTIATE_ASSOC(double)

}  // namespace armt::assoc

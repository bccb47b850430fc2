#include "armt/nn/ops.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <type_traits>
#include <vector>

#include "armt/kernels/kernels.hpp"

namespace armt::nn {

using kernels::Transpose;

namespace {

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw ConfigError(std::string(op) + ": expected a matrix, got shape " + shape_string(t.shape()));
  }
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  kernels::axpy<T>(src.size(), T(1), src.ptr(), dst.ptr());
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Graph<T>* g = a.graph;
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  if (bv.dim(0) != k) {
    throw ConfigError("matmul: inner extents differ " + shape_string(av.shape()) + " x " +
                      shape_string(bv.shape()));
  }
  Tensor<T> out({n, m});
  kernels::gemm<T>(Transpose::no, Transpose::no, n, m, k, T(1), av.ptr(), k, bv.ptr(), m, T(0),
                   out.ptr(), m);
  return g->record(std::move(out), {a, b}, [g, a, b, n, k, m](const Tensor<T>& gout) {
    if (g->requires_grad(a)) {
      kernels::gemm<T>(Transpose::no, Transpose::yes, n, k, m, T(1), gout.ptr(), m,
                       g->value(b).ptr(), m, T(1), g->grad(a).ptr(), k);
    }
    if (g->requires_grad(b)) {
      kernels::gemm<T>(Transpose::yes, Transpose::no, k, m, n, T(1), g->value(a).ptr(), k,
                       gout.ptr(), m, T(1), g->grad(b).ptr(), m);
    }
  });
}

namespace {

template <typename T>
Var<T> linear_impl(Var<T> x, Var<T> w, const Var<T>* bias) {
  Graph<T>* g = x.graph;
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  require_matrix(xv, "linear");
  require_matrix(wv, "linear");
  const std::size_t n = xv.dim(0), k = xv.dim(1), m = wv.dim(0);
  if (wv.dim(1) != k) {
    throw ConfigError("linear: input width " + std::to_string(k) + " does not match weight " +
                      shape_string(wv.shape()));
  }
  Tensor<T> out({n, m});
  kernels::gemm<T>(Transpose::no, Transpose::yes, n, m, k, T(1), xv.ptr(), k, wv.ptr(), k, T(0),
                   out.ptr(), m);
  Var<T> b{};
  if (bias) {
    b = *bias;
    const Tensor<T>& bv = b.value();
    if (bv.size() != m) throw ConfigError("linear: bias length does not match output width");
    for (std::size_t i = 0; i < n; ++i) {
      T* row = out.ptr() + i * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += bv[j];
    }
  }
  auto backward = [g, x, w, b, n, k, m](const Tensor<T>& gout) {
    if (g->requires_grad(x)) {
      kernels::gemm<T>(Transpose::no, Transpose::no, n, k, m, T(1), gout.ptr(), m,
                       g->value(w).ptr(), k, T(1), g->grad(x).ptr(), k);
    }
    if (g->requires_grad(w)) {
      kernels::gemm<T>(Transpose::yes, Transpose::no, m, k, n, T(1), gout.ptr(), m,
                       g->value(x).ptr(), k, T(1), g->grad(w).ptr(), k);
    }
    if (b.valid() && g->requires_grad(b)) {
      Tensor<T>& gb = g->grad(b);
      for (std::size_t i = 0; i < n; ++i) {
        const T* row = gout.ptr() + i * m;
        for (std::size_t j = 0; j < m; ++j) gb[j] += row[j];
      }
    }
  };
  if (bias) return g->record(std::move(out), {x, w, b}, std::move(backward));
  return g->record(std::move(out), {x, w}, std::move(backward));
}

}  // namespace

template <typename T>
Var<T> linear(Var<T> x, Var<T> w) {
  return linear_impl<T>(x, w, nullptr);
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
  return linear_impl<T>(x, w, &bias);
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>* g = a.graph;
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ConfigError("add: shapes differ " + shape_string(av.shape()) + " vs " +
                      shape_string(bv.shape()));
  }
  Tensor<T> out = av;
  accumulate(out, bv);
  return g->record(std::move(out), {a, b}, [g, a, b](const Tensor<T>& gout) {
    if (g->requires_grad(a)) accumulate(g->grad(a), gout);
    if (g->requires_grad(b)) accumulate(g->grad(b), gout);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Graph<T>* g = a.graph;
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.shape() != bv.shape()) throw ConfigError("mul: shapes differ");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return g->record(std::move(out), {a, b}, [g, a, b](const Tensor<T>& gout) {
    const Tensor<T>& av = g->value(a);
    const Tensor<T>& bv = g->value(b);
    if (g->requires_grad(a)) {
      Tensor<T>& ga = g->grad(a);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * bv[i];
    }
    if (g->requires_grad(b)) {
      Tensor<T>& gb = g->grad(b);
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Graph<T>* g = a.graph;
  Tensor<T> out = a.value();
  for (T& v : out.storage()) v *= factor;
  return g->record(std::move(out), {a}, [g, a, factor](const Tensor<T>& gout) {
    kernels::axpy<T>(gout.size(), factor, gout.ptr(), g->grad(a).ptr());
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  Graph<T>* g = a.graph;
  T total = T(0);
  for (T v : a.value().data()) total += v;
  return g->record(Tensor<T>({1}, {total}), {a}, [g, a](const Tensor<T>& gout) {
    Tensor<T>& ga = g->grad(a);
    for (T& v : ga.storage()) v += gout[0];
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Graph<T>* g = x.graph;
  const Tensor<T>& xv = x.value();
  auto y = std::make_shared<Tensor<T>>(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) (*y)[i] = T(1) / (T(1) + std::exp(-xv[i]));
  Tensor<T> out = *y;
  return g->record(std::move(out), {x}, [g, x, y](const Tensor<T>& gout) {
    Tensor<T>& gx = g->grad(x);
    for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i] * (*y)[i] * (T(1) - (*y)[i]);
  });
}

namespace {

template <typename T>
T fast_tanh(T u) {
  if constexpr (std::is_same_v<T, float>) {
    // One expf instead of tanhf; absolute error stays near float epsilon.
    const float e = std::exp(-2.0f * std::abs(u));
    return std::copysign((1.0f - e) / (1.0f + e), u);
  } else {
    return std::tanh(u);
  }
}

}  // namespace

template <typename T>
Var<T> gelu(Var<T> x) {
  Graph<T>* g = x.graph;
  const Tensor<T>& xv = x.value();
  const T c = std::sqrt(T(2) / std::numbers::pi_v<T>);
  const T a = T(0.044715);
  Tensor<T> out(xv.shape());
  auto tanhs = std::make_shared<std::vector<T>>(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    const T t = fast_tanh(c * (v + a * v * v * v));
    (*tanhs)[i] = t;
    out[i] = T(0.5) * v * (T(1) + t);
  }
  return g->record(std::move(out), {x}, [g, x, c, a, tanhs](const Tensor<T>& gout) {
    const Tensor<T>& xv = g->value(x);
    Tensor<T>& gx = g->grad(x);
    for (std::size_t i = 0; i < gout.size(); ++i) {
      const T v = xv[i];
      const T t = (*tanhs)[i];
      const T d = T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * c * (T(1) + T(3) * a * v * v);
      gx[i] += gout[i] * d;
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  Graph<T>* g = x.graph;
  const Tensor<T>& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  if (gain.value().size() != d || bias.value().size() != d) {
    throw ConfigError("layer_norm: gain/bias length does not match width " + std::to_string(d));
  }
  const Tensor<T>& gv = gain.value();
  const Tensor<T>& bv = bias.value();
  auto xhat = std::make_shared<Tensor<T>>(xv.shape());
  auto rstd = std::make_shared<std::vector<T>>(n);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = xv.ptr() + i * d;
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(d);
    const T r = T(1) / std::sqrt(var + eps);
    (*rstd)[i] = r;
    T* xh = xhat->ptr() + i * d;
    T* o = out.ptr() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (row[j] - mean) * r;
      o[j] = xh[j] * gv[j] + bv[j];
    }
  }
  return g->record(std::move(out), {x, gain, bias},
                   [g, x, gain, bias, xhat, rstd, n, d](const Tensor<T>& gout) {
                     const Tensor<T>& gv = g->value(gain);
                     if (g->requires_grad(gain) || g->requires_grad(bias)) {
                       Tensor<T>& gg = g->grad(gain);
                       Tensor<T>& gb = g->grad(bias);
                       for (std::size_t i = 0; i < n; ++i) {
                         const T* go = gout.ptr() + i * d;
                         const T* xh = xhat->ptr() + i * d;
                         for (std::size_t j = 0; j < d; ++j) {
                           gg[j] += go[j] * xh[j];
                           gb[j] += go[j];
                         }
                       }
                     }
                     if (!g->requires_grad(x)) return;
                     Tensor<T>& gx = g->grad(x);
                     for (std::size_t i = 0; i < n; ++i) {
                       const T* go = gout.ptr() + i * d;
                       const T* xh = xhat->ptr() + i * d;
                       T mean_g = T(0), mean_gx = T(0);
                       for (std::size_t j = 0; j < d; ++j) {
                         const T gh = go[j] * gv[j];
                         mean_g += gh;
                         mean_gx += gh * xh[j];
                       }
                       mean_g /= T(d);
                       mean_gx /= T(d);
                       T* gxr = gx.ptr() + i * d;
                       const T r = (*rstd)[i];
                       for (std::size_t j = 0; j < d; ++j) {
                         gxr[j] += r * (go[j] * gv[j] - mean_g - xh[j] * mean_gx);
                       }
                     }
                   });
}

template <typename T>
Var<T> attention(Var<T> qkv, const AttentionLayout& layout) {
  Graph<T>* g = qkv.graph;
  const Tensor<T>& in = qkv.value();
  require_matrix(in, "attention");
  const std::size_t n = in.dim(0);
  const std::size_t width = in.dim(1);
  if (width % 3 != 0) throw ConfigError("attention: fused projection width must be 3 * hidden");
  const std::size_t hidden = width / 3;
  const std::size_t heads = layout.heads;
  if (heads == 0 || hidden % heads != 0) {
    throw ConfigError("attention: head count " + std::to_string(heads) +
                      " does not divide hidden " + std::to_string(hidden));
  }
  if (layout.batch == 0 || n % layout.batch != 0) {
    throw ConfigError("attention: rows not divisible by batch");
  }
  const std::size_t seq = n / layout.batch;
  const std::size_t hd = hidden / heads;
  const T inv_sqrt = T(1) / std::sqrt(T(hd));
  const bool causal = layout.causal;
  const std::size_t batch = layout.batch;

  auto probs = std::make_shared<std::vector<T>>(batch * heads * seq * seq, T(0));
  Tensor<T> out({n, hidden});
  const T* base = in.ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      T* P = probs->data() + (b * heads + h) * seq * seq;
      for (std::size_t i = 0; i < seq; ++i) {
        const T* q = base + (b * seq + i) * width + h * hd;
        const std::size_t jmax = causal ? i + 1 : seq;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < jmax; ++j) {
          const T* k = base + (b * seq + j) * width + hidden + h * hd;
          T s = T(0);
          for (std::size_t t = 0; t < hd; ++t) s += q[t] * k[t];
          s *= inv_sqrt;
          P[i * seq + j] = s;
          mx = std::max(mx, s);
        }
        T denom = T(0);
        for (std::size_t j = 0; j < jmax; ++j) {
          P[i * seq + j] = std::exp(P[i * seq + j] - mx);
          denom += P[i * seq + j];
        }
        T* o = out.ptr() + (b * seq + i) * hidden + h * hd;
        for (std::size_t j = 0; j < jmax; ++j) {
          P[i * seq + j] /= denom;
          const T p = P[i * seq + j];
          const T* v = base + (b * seq + j) * width + 2 * hidden + h * hd;
          for (std::size_t t = 0; t < hd; ++t) o[t] += p * v[t];
        }
      }
    }
  }
  return g->record(
      std::move(out), {qkv},
      [g, qkv, probs, batch, heads, seq, hd, hidden, width, inv_sqrt, causal](const Tensor<T>& gout) {
        const T* base = g->value(qkv).ptr();
        T* gbase = g->grad(qkv).ptr();
        std::vector<T> gp(seq);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const T* P = probs->data() + (b * heads + h) * seq * seq;
            for (std::size_t i = 0; i < seq; ++i) {
              const std::size_t jmax = causal ? i + 1 : seq;
              const T* go = gout.ptr() + (b * seq + i) * hidden + h * hd;
              T weighted = T(0);
              for (std::size_t j = 0; j < jmax; ++j) {
                const T* v = base + (b * seq + j) * width + 2 * hidden + h * hd;
                T* gv = gbase + (b * seq + j) * width + 2 * hidden + h * hd;
                const T p = P[i * seq + j];
                T s = T(0);
                for (std::size_t t = 0; t < hd; ++t) {
                  s += go[t] * v[t];
                  gv[t] += p * go[t];
                }
                gp[j] = s;
                weighted += p * s;
              }
              const T* q = base + (b * seq + i) * width + h * hd;
              T* gq = gbase + (b * seq + i) * width + h * hd;
              for (std::size_t j = 0; j < jmax; ++j) {
                const T gs = P[i * seq + j] * (gp[j] - weighted) * inv_sqrt;
                const T* k = base + (b * seq + j) * width + hidden + h * hd;
                T* gk = gbase + (b * seq + j) * width + hidden + h * hd;
                for (std::size_t t = 0; t < hd; ++t) {
                  gq[t] += gs * k[t];
                  gk[t] += gs * q[t];
                }
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> embedding(Var<T> table, std::span<const int> ids) {
  Graph<T>* g = table.graph;
  const Tensor<T>& tv = table.value();
  require_matrix(tv, "embedding");
  const std::size_t vocab = tv.dim(0), d = tv.dim(1);
  Tensor<T> out({ids.size(), d});
  std::vector<int> idx(ids.begin(), ids.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
      throw ConfigError("embedding: token id " + std::to_string(idx[i]) + " outside vocab of " +
                        std::to_string(vocab));
    }
    std::copy_n(tv.ptr() + idx[i] * d, d, out.ptr() + i * d);
  }
  return g->record(std::move(out), {table}, [g, table, idx = std::move(idx), d](const Tensor<T>& gout) {
    Tensor<T>& gt = g->grad(table);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      kernels::axpy<T>(d, T(1), gout.ptr() + i * d, gt.ptr() + idx[i] * d);
    }
  });
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> index) {
  Graph<T>* g = x.graph;
  const Tensor<T>& xv = x.value();
  const std::size_t rows = xv.rows(), d = xv.cols();
  Tensor<T> out({index.size(), d});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) throw ConfigError("gather_rows: row index out of range");
    std::copy_n(xv.ptr() + index[i] * d, d, out.ptr() + i * d);
  }
  return g->record(std::move(out), {x}, [g, x, index = std::move(index), d](const Tensor<T>& gout) {
    Tensor<T>& gx = g->grad(x);
    for (std::size_t i = 0; i < index.size(); ++i) {
      kernels::axpy<T>(d, T(1), gout.ptr() + i * d, gx.ptr() + index[i] * d);
    }
  });
}

template <typename T>
Var<T> assemble_rows(std::span<const Var<T>> parts, std::vector<std::vector<std::size_t>> maps,
                     std::size_t n_rows) {
  if (parts.empty() || parts.size() != maps.size()) {
    throw ConfigError("assemble_rows: parts and maps must be non-empty and aligned");
  }
  Graph<T>* g = parts[0].graph;
  const std::size_t d = parts[0].value().cols();
  Tensor<T> out({n_rows, d});
  std::vector<char> written(n_rows, 0);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor<T>& pv = parts[p].value();
    if (pv.cols() != d || pv.rows() != maps[p].size()) {
      throw ConfigError("assemble_rows: part " + std::to_string(p) + " shape mismatch");
    }
    for (std::size_t i = 0; i < maps[p].size(); ++i) {
      const std::size_t r = maps[p][i];
      if (r >= n_rows || written[r]) throw ConfigError("assemble_rows: rows must be written once");
      written[r] = 1;
      std::copy_n(pv.ptr() + i * d, d, out.ptr() + r * d);
    }
  }
  if (std::find(written.begin(), written.end(), 0) != written.end()) {
    throw ConfigError("assemble_rows: output row left unwritten");
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return g->record(std::move(out), std::span<const Var<T>>(inputs),
                   [g, inputs, maps = std::move(maps), d](const Tensor<T>& gout) {
                     for (std::size_t p = 0; p < inputs.size(); ++p) {
                       if (!g->requires_grad(inputs[p])) continue;
                       Tensor<T>& gp = g->grad(inputs[p]);
                       for (std::size_t i = 0; i < maps[p].size(); ++i) {
                         kernels::axpy<T>(d, T(1), gout.ptr() + maps[p][i] * d, gp.ptr() + i * d);
                       }
                     }
                   });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets, std::span<const T> weights) {
  Graph<T>* g = logits.graph;
  const Tensor<T>& lv = logits.value();
  require_matrix(lv, "cross_entropy");
  const std::size_t n = lv.dim(0), vocab = lv.dim(1);
  if (targets.size() != n || weights.size() != n) {
    throw ConfigError("cross_entropy: targets/mask length must equal the number of positions");
  }
  T total_weight = T(0);
  for (T w : weights) total_weight += w;
  if (!(total_weight > T(0))) throw ConfigError("cross_entropy: mask selects no supervised positions");

  auto softmax = std::make_shared<Tensor<T>>(lv.shape());
  T loss = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] == T(0)) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
      throw ConfigError("cross_entropy: target " + std::to_string(targets[i]) + " outside vocab");
    }
    const T* row = lv.ptr() + i * vocab;
    const T mx = *std::max_element(row, row + vocab);
    T denom = T(0);
    T* sm = softmax->ptr() + i * vocab;
    for (std::size_t j = 0; j < vocab; ++j) {
      sm[j] = std::exp(row[j] - mx);
      denom += sm[j];
    }
    for (std::size_t j = 0; j < vocab; ++j) sm[j] /= denom;
    const T lse = mx + std::log(denom);
    loss += weights[i] * (lse - row[targets[i]]);
  }
  loss /= total_weight;
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<T> w(weights.begin(), weights.end());
  return g->record(Tensor<T>({1}, {loss}), {logits},
                   [g, logits, softmax, tgt = std::move(tgt), w = std::move(w), total_weight, n,
                    vocab](const Tensor<T>& gout) {
                     Tensor<T>& gl = g->grad(logits);
                     for (std::size_t i = 0; i < n; ++i) {
                       if (w[i] == T(0)) continue;
                       const T f = gout[0] * w[i] / total_weight;
                       const T* sm = softmax->ptr() + i * vocab;
                       T* gr = gl.ptr() + i * vocab;
                       for (std::size_t j = 0; j < vocab; ++j) gr[j] += f * sm[j];
                       gr[tgt[i]] -= f;
                     }
                   });
}

template <typename T>
Var<T> detach(Var<T> x) {
  return x.graph->constant(x.graph->stop_gradient(x.value()));
}

template <typename T>
void require_finite(Var<T> x, const std::string& where) {
  if (!x.value().all_finite()) throw NumericError("non-finite values in " + where);
}

#define ARMT_INSTANTIATE_OPS(T)                                                                  \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                     \
  template Var<T> linear<T>(Var<T>, Var<T>);                                                     \
  template Var<T> linear<T>(Var<T>, Var<T>, Var<T>);                                             \
  template Var<T> add<T>(Var<T>, Var<T>);                                                        \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                        \
  template Var<T> scale<T>(Var<T>, T);                                                           \
  template Var<T> sum<T>(Var<T>);                                                                \
  template Var<T> sigmoid<T>(Var<T>);                                                            \
  template Var<T> gelu<T>(Var<T>);                                                               \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                      \
  template Var<T> attention<T>(Var<T>, const AttentionLayout&);                                  \
  template Var<T> embedding<T>(Var<T>, std::span<const int>);                                    \
  template Var<T> gather_rows<T>(Var<T>, std::vector<std::size_t>);                              \
  template Var<T> assemble_rows<T>(std::span<const Var<T>>, std::vector<std::vector<std::size_t>>, \
                                   std::size_t);                                                 \
  template Var<T> cross_entropy<T>(Var<T>, std::span<const int>, std::span<const T>);            \
  template Var<T> detach<T>(Var<T>);                                                             \
  template void require_finite<T>(Var<T>, const std::string&);

ARMT_INSTANTIATE_OPS(float)
ARMT_INSTANTIATE_OPS(double)

}  // namespace armt::nn

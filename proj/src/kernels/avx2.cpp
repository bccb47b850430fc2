// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the dispatcher has confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "armt/kernels/kernels.hpp"

namespace armt::kernels::avx2 {

namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using type = __m256;
  static constexpr std::size_t lanes = 8;
  static type zero() { return _mm256_setzero_ps(); }
  static type load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, type v) { _mm256_storeu_ps(p, v); }
  static type broadcast(float x) { return _mm256_set1_ps(x); }
  static type fmadd(type a, type b, type c) { return _mm256_fmadd_ps(a, b, c); }
  static float hsum(type v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Vec<double> {
  using type = __m256d;
  static constexpr std::size_t lanes = 4;
  static type zero() { return _mm256_setzero_pd(); }
  static type load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, type v) { _mm256_storeu_pd(p, v); }
  static type broadcast(double x) { return _mm256_set1_pd(x); }
  static type fmadd(type a, type b, type c) { return _mm256_fmadd_pd(a, b, c); }
  static double hsum(type v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

constexpr std::size_t kMr = 6;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 96;

template <typename T>
constexpr std::size_t kNr = 2 * Vec<T>::lanes;

template <typename T>
inline T element(const T* m, std::size_t ld, Transpose t, std::size_t row, std::size_t col) {
  return t == Transpose::no ? m[row * ld + col] : m[col * ld + row];
}

// Packs an mc x kc block of op(A) into row panels of kMr, zero padded.
template <typename T>
void pack_a(Transpose ta, const T* a, std::size_t lda, std::size_t i0, std::size_t mc,
            std::size_t p0, std::size_t kc, T* out) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    const std::size_t rows = std::min(kMr, mc - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      std::size_t r = 0;
      for (; r < rows; ++r) *out++ = element(a, lda, ta, i0 + ir + r, p0 + p);
      for (; r < kMr; ++r) *out++ = T(0);
    }
  }
}

// Packs a kc x nc block of op(B) into column panels of kNr, zero padded.
template <typename T>
void pack_b(Transpose tb, const T* b, std::size_t ldb, std::size_t p0, std::size_t kc,
            std::size_t j0, std::size_t nc, T* out) {
  constexpr std::size_t nr = kNr<T>;
  for (std::size_t jr = 0; jr < nc; jr += nr) {
    const std::size_t cols = std::min(nr, nc - jr);
    for (std::size_t p = 0; p < kc; ++p) {
      if (tb == Transpose::no && cols == nr) {
        std::memcpy(out, b + (p0 + p) * ldb + j0 + jr, nr * sizeof(T));
        out += nr;
        continue;
      }
      std::size_t c = 0;
      for (; c < cols; ++c) *out++ = element(b, ldb, tb, p0 + p, j0 + jr + c);
      for (; c < nr; ++c) *out++ = T(0);
    }
  }
}

// 6 x (2 * lanes) register tile: C[0:rows, 0:cols] += alpha * Apanel * Bpanel.
template <typename T>
void micro_kernel(std::size_t kc, const T* ap, const T* bp, T alpha, T* c, std::size_t ldc,
                  std::size_t rows, std::size_t cols) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  typename V::type c00 = V::zero(), c01 = V::zero(), c10 = V::zero(), c11 = V::zero();
  typename V::type c20 = V::zero(), c21 = V::zero(), c30 = V::zero(), c31 = V::zero();
  typename V::type c40 = V::zero(), c41 = V::zero(), c50 = V::zero(), c51 = V::zero();
  for (std::size_t p = 0; p < kc; ++p) {
    const typename V::type b0 = V::load(bp);
    const typename V::type b1 = V::load(bp + L);
    typename V::type a = V::broadcast(ap[0]);
    c00 = V::fmadd(a, b0, c00);
    c01 = V::fmadd(a, b1, c01);
    a = V::broadcast(ap[1]);
    c10 = V::fmadd(a, b0, c10);
    c11 = V::fmadd(a, b1, c11);
    a = V::broadcast(ap[2]);
    c20 = V::fmadd(a, b0, c20);
    c21 = V::fmadd(a, b1, c21);
    a = V::broadcast(ap[3]);
    c30 = V::fmadd(a, b0, c30);
    c31 = V::fmadd(a, b1, c31);
    a = V::broadcast(ap[4]);
    c40 = V::fmadd(a, b0, c40);
    c41 = V::fmadd(a, b1, c41);
    a = V::broadcast(ap[5]);
    c50 = V::fmadd(a, b0, c50);
    c51 = V::fmadd(a, b1, c51);
    ap += kMr;
    bp += 2 * L;
  }
  alignas(32) T tile[kMr][2 * L];
  V::store(tile[0], c00);
  V::store(tile[0] + L, c01);
  V::store(tile[1], c10);
  V::store(tile[1] + L, c11);
  V::store(tile[2], c20);
  V::store(tile[2] + L, c21);
  V::store(tile[3], c30);
  V::store(tile[3] + L, c31);
  V::store(tile[4], c40);
  V::store(tile[4] + L, c41);
  V::store(tile[5], c50);
  V::store(tile[5] + L, c51);
  if (cols == 2 * L) {
    const typename V::type va = V::broadcast(alpha);
    for (std::size_t r = 0; r < rows; ++r) {
      T* crow = c + r * ldc;
      V::store(crow, V::fmadd(va, V::load(tile[r]), V::load(crow)));
      V::store(crow + L, V::fmadd(va, V::load(tile[r] + L), V::load(crow + L)));
    }
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      T* crow = c + r * ldc;
      for (std::size_t j = 0; j < cols; ++j) crow[j] += alpha * tile[r][j];
    }
  }
}

template <typename T>
struct PackBuffers {
  std::vector<T> a;
  std::vector<T> b;
};

template <typename T>
PackBuffers<T>& buffers() {
  thread_local PackBuffers<T> bufs;
  return bufs;
}

}  // namespace

template <typename T>
void gemm(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
          std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (beta == T(0)) {
      std::fill(crow, crow + n, T(0));
    } else if (beta != T(1)) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (m == 0 || n == 0 || k == 0) return;

  constexpr std::size_t nr = kNr<T>;
  const std::size_t n_padded = (n + nr - 1) / nr * nr;
  auto& bufs = buffers<T>();
  bufs.b.resize(std::min(k, kKc) * n_padded);
  bufs.a.resize(std::min(k, kKc) * ((std::min(m, kMc) + kMr - 1) / kMr * kMr));

  for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
    const std::size_t kc = std::min(kKc, k - p0);
    pack_b(tb, b, ldb, p0, kc, 0, n, bufs.b.data());
    for (std::size_t i0 = 0; i0 < m; i0 += kMc) {
      const std::size_t mc = std::min(kMc, m - i0);
      pack_a(ta, a, lda, i0, mc, p0, kc, bufs.a.data());
      for (std::size_t jr = 0; jr < n; jr += nr) {
        const T* bp = bufs.b.data() + (jr / nr) * kc * nr;
        const std::size_t cols = std::min(nr, n - jr);
        for (std::size_t ir = 0; ir < mc; ir += kMr) {
          const T* ap = bufs.a.data() + (ir / kMr) * kc * kMr;
          micro_kernel(kc, ap, bp, alpha, c + (i0 + ir) * ldc + jr, ldc, std::min(kMr, mc - ir),
                       cols);
        }
      }
    }
  }
}

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  typename V::type acc0 = V::zero(), acc1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * L <= n; i += 2 * L) {
    acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
    acc1 = V::fmadd(V::load(x + i + L), V::load(y + i + L), acc1);
  }
  for (; i + L <= n; i += L) acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
  T acc = V::hsum(acc0) + V::hsum(acc1);
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  const typename V::type va = V::broadcast(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template void gemm<float>(Transpose, Transpose, std::size_t, std::size_t, std::size_t, float,
                          const float*, std::size_t, const float*, std::size_t, float, float*,
                          std::size_t);
template void gemm<double>(Transpose, Transpose, std::size_t, std::size_t, std::size_t, double,
                           const double*, std::size_t, const double*, std::size_t, double,
                           double*, std::size_t);
template float dot<float>(const float*, const float*, std::size_t);
template double dot<double>(const double*, const double*, std::size_t);
template void axpy<float>(std::size_t, float, const float*, float*);
template void axpy<double>(std::size_t, double, const double*, double*);

}  // namespace armt::kernels::avx2

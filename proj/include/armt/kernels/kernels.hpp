#pragma once

// Dense arithmetic kernels used by the numerical substrate.
//
// Every kernel has a portable scalar reference implementation and an AVX2+FMA
// variant. The variant is picked once at startup from CPUID; setting the
// environment variable ARMT_KERNELS=scalar forces the reference path.
// Matrices are row-major throughout.

#include <cstddef>
#include <string_view>

namespace armt::kernels {

enum class Transpose : bool { no = false, yes = true };

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

bool isa_supported(Isa isa);

/// ISA used by the free functions below.
Isa active_isa();

/// Overrides the dispatch choice. Throws if `isa` is not supported on this CPU.
void set_active_isa(Isa isa);

template <typename T>
struct KernelTable {
  // C = alpha * op(A) * op(B) + beta * C, op(A) is m x k and op(B) is k x n.
  void (*gemm)(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k, T alpha,
               const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
               std::size_t ldc);
  T (*dot)(const T* x, const T* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
};

template <typename T>
const KernelTable<T>& table(Isa isa);

template <typename T>
const KernelTable<T>& active() {
  return table<T>(active_isa());
}

template <typename T>
inline void gemm(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k, T alpha,
                 const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
                 std::size_t ldc) {
  active<T>().gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
inline T dot(const T* x, const T* y, std::size_t n) {
  return active<T>().dot(x, y, n);
}

template <typename T>
inline void axpy(std::size_t n, T alpha, const T* x, T* y) {
  active<T>().axpy(n, alpha, x, y);
}

namespace scalar {
template <typename T>
void gemm(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);
template <typename T>
T dot(const T* x, const T* y, std::size_t n);
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
}  // namespace scalar

namespace avx2 {
template <typename T>
void gemm(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);
template <typename T>
T dot(const T* x, const T* y, std::size_t n);
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
}  // namespace avx2

}  // namespace armt::kernels

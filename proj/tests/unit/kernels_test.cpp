#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "armt/kernels/kernels.hpp"
#include "armt/nn/rng.hpp"

namespace {

using armt::Rng;
using armt::kernels::Isa;
using armt::kernels::Transpose;

template <typename T>
std::vector<T> random_vec(Rng& rng, std::size_t n) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.normal());
  return v;
}

template <typename T>
class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!armt::kernels::isa_supported(Isa::avx2)) GTEST_SKIP() << "AVX2 not available";
  }
};

using Precisions = ::testing::Types<float, double>;
TYPED_TEST_SUITE(KernelEquivalence, Precisions);

// The AVX2 path must agree with the scalar reference on every transpose
// combination and on shapes that do not fill the register tile.
TYPED_TEST(KernelEquivalence, GemmMatchesScalarReference) {
  using T = TypeParam;
  const auto& ref = armt::kernels::table<T>(Isa::scalar);
  const auto& simd = armt::kernels::table<T>(Isa::avx2);
  Rng rng(7);
  const T tol = std::is_same_v<T, float> ? T(2e-5) : T(1e-12);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t m = 1 + rng.uniform_int(70);
    const std::size_t n = 1 + rng.uniform_int(70);
    const std::size_t k = 1 + rng.uniform_int(trial % 10 == 0 ? 600 : 90);
    const auto ta = rng.uniform_int(2) ? Transpose::yes : Transpose::no;
    const auto tb = rng.uniform_int(2) ? Transpose::yes : Transpose::no;
    const T alpha = trial % 3 == 0 ? T(1) : static_cast<T>(rng.normal());
    const T beta = trial % 4 == 0 ? T(0) : (trial % 4 == 1 ? T(1) : static_cast<T>(rng.normal()));
    const auto a = random_vec<T>(rng, m * k);
    const auto b = random_vec<T>(rng, k * n);
    const auto c0 = random_vec<T>(rng, m * n);
    const std::size_t lda = ta == Transpose::no ? k : m;
    const std::size_t ldb = tb == Transpose::no ? n : k;
    auto c_ref = c0;
    auto c_simd = c0;
    ref.gemm(ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb, beta, c_ref.data(), n);
    simd.gemm(ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb, beta, c_simd.data(), n);
    for (std::size_t i = 0; i < c_ref.size(); ++i) {
      const T scale = std::max(T(1), std::abs(c_ref[i])) * std::sqrt(T(k));
      ASSERT_NEAR(c_ref[i], c_simd[i], tol * scale) << "m=" << m << " n=" << n << " k=" << k;
    }
  }
}

TYPED_TEST(KernelEquivalence, DotAndAxpyMatchScalarReference) {
  using T = TypeParam;
  const auto& ref = armt::kernels::table<T>(Isa::scalar);
  const auto& simd = armt::kernels::table<T>(Isa::avx2);
  Rng rng(11);
  for (std::size_t n : {0u, 1u, 3u, 7u, 8u, 15u, 16u, 17u, 33u, 192u, 1001u}) {
    const auto x = random_vec<T>(rng, n);
    const auto y = random_vec<T>(rng, n);
    const T tol = std::is_same_v<T, float> ? T(1e-4) : T(1e-12);
    EXPECT_NEAR(ref.dot(x.data(), y.data(), n), simd.dot(x.data(), y.data(), n),
                tol * std::max<T>(1, std::sqrt(T(n))));
    auto y_ref = y, y_simd = y;
    ref.axpy(n, T(0.75), x.data(), y_ref.data());
    simd.axpy(n, T(0.75), x.data(), y_simd.data());
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y_ref[i], y_simd[i], tol);
  }
}

TEST(KernelDispatch, BetaZeroOverwritesGarbage) {
  for (Isa isa : {Isa::scalar, Isa::avx2}) {
    if (!armt::kernels::isa_supported(isa)) continue;
    const auto& t = armt::kernels::table<double>(isa);
    std::vector<double> a{1, 2}, b{3, 4}, c{NAN};
    t.gemm(Transpose::no, Transpose::no, 1, 1, 2, 1.0, a.data(), 2, b.data(), 1, 0.0, c.data(), 1);
    EXPECT_EQ(c[0], 11.0) << armt::kernels::isa_name(isa);
  }
}

TEST(KernelDispatch, ForcingAnIsaIsReflected) {
  const Isa before = armt::kernels::active_isa();
  armt::kernels::set_active_isa(Isa::scalar);
  EXPECT_EQ(armt::kernels::active_isa(), Isa::scalar);
  armt::kernels::set_active_isa(before);
  EXPECT_EQ(armt::kernels::active_isa(), before);
}

}  // namespace

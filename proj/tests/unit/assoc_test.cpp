#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "armt/assoc/associative_memory.hpp"
#include "armt/assoc/graph_ops.hpp"
#include "armt/errors.hpp"
#include "armt/io/binary.hpp"
#include "armt/nn/grad_check.hpp"
#include "armt/nn/ops.hpp"
#include "armt/nn/rng.hpp"

namespace {

using armt::Rng;
using namespace armt::assoc;
using armt::nn::Graph;
using armt::nn::GradCheckResult;
using armt::nn::Var;
using Vec = std::vector<double>;
using Vars = std::span<const Var<double>>;

const FeatureMapSpec kIdentity{FeatureMapKind::identity, 1};

Vec basis(std::size_t n, std::size_t i) {
  Vec v(n, 0.0);
  v[i] = 1.0;
  return v;
}

double norm2(const Tensor<double>& t) {
  double s = 0.0;
  for (double v : t.storage()) s += v * v;
  return s;
}

Tensor<double> random_tensor(Rng& rng, armt::nn::Shape shape, double stddev = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.storage()) v = rng.normal(0.0, stddev);
  return t;
}

TEST(Phi, Examples) {
  EXPECT_EQ(phi<double>(Vec{1.5, -2.0}, kIdentity), (Vec{1.5, -2.0}));
  EXPECT_EQ(phi<double>(Vec{2.0}, FeatureMapSpec{FeatureMapKind::dpfp, 1}), (Vec{0.0, 0.0}));
  EXPECT_EQ(phi<double>(Vec{1.0, -1.0}, FeatureMapSpec{FeatureMapKind::dpfp, 1}), (Vec{0.0, 0.0, 0.0, 1.0}));
}

TEST(Phi, HandEvaluatedSecondOrder) {
  // r = [3, 0, 0, 2]; rot_1 = [0, 0, 2, 3]; rot_2 = [0, 2, 3, 0].
  const Vec out = phi<double>(Vec{3.0, -2.0}, FeatureMapSpec{FeatureMapKind::dpfp, 2});
  EXPECT_EQ(out, (Vec{0, 0, 0, 6, 0, 0, 0, 0}));
}

TEST(Phi, DpfpIsNonNegativeWithExpectedWidth) {
  Rng rng(1);
  for (std::size_t nu : {1u, 2u, 3u}) {
    for (std::size_t d : {1u, 4u, 9u}) {
      for (int trial = 0; trial < 50; ++trial) {
        Vec x(d);
        for (double& v : x) v = rng.normal(0.0, 3.0);
        const Vec out = phi<double>(x, FeatureMapSpec{FeatureMapKind::dpfp, nu});
        ASSERT_EQ(out.size(), 2 * d * nu);
        for (double v : out) ASSERT_GE(v, 0.0);
      }
    }
  }
}

TEST(Phi, BackwardMatchesFiniteDifferences) {
  Rng rng(2);
  const FeatureMapSpec spec{FeatureMapKind::dpfp, 3};
  GradCheckResult r = armt::nn::grad_check(
      [&](Graph<double>& g, Vars v) {
        Var<double> f = feature_map(v[0], spec);
        Rng c(5);
        return armt::nn::sum(armt::nn::mul(f, g.constant(random_tensor(c, f.shape()))));
      },
      {random_tensor(rng, {3, 4})});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Phi, NormalizedHasUnitNormAndMatchesFiniteDifferences) {
  Rng rng(21);
  const FeatureMapSpec spec{FeatureMapKind::dpfp, 3, true};
  for (int trial = 0; trial < 20; ++trial) {
    Vec x(5);
    for (double& v : x) v = rng.normal(0.0, 4.0);
    const Vec out = phi<double>(x, spec);
    double n2 = 0.0;
    for (double v : out) n2 += v * v;
    EXPECT_NEAR(n2, 1.0, 1e-12);
    Vec raw = phi<double>(x, FeatureMapSpec{FeatureMapKind::dpfp, 3});
    const double scale = out[0] == 0.0 ? 0.0 : raw[0] / out[0];
    for (std::size_t i = 0; i < out.size() && scale != 0.0; ++i) EXPECT_NEAR(raw[i], scale * out[i], 1e-9);
  }
  EXPECT_EQ(phi<double>(Vec{0, 0}, spec), Vec(12, 0.0));
  GradCheckResult r = armt::nn::grad_check(
      [&](Graph<double>& g, Vars v) {
        Var<double> f = feature_map(v[0], spec);
        Rng c(5);
        return armt::nn::sum(armt::nn::mul(f, g.constant(random_tensor(c, f.shape()))));
      },
      {random_tensor(rng, {3, 4})});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

// Hand trace with identity phi, d_val = 1, d_phi = 2, beta forced to 1.
TEST(DeltaRule, HandTrace) {
  AssociativeState<double> s(1, 2);
  EXPECT_EQ(recall_prev<double>(s, Vec{1, 0}), (Vec{0}));
  EXPECT_EQ(gamma<double>(s, Vec{1, 0}), 1.0);

  insert_kv<double>(s, Vec{1, 0}, Vec{3}, 1.0);
  EXPECT_EQ(s.A, Tensor<double>({1, 2}, {3, 0}));
  EXPECT_EQ(s.z, Tensor<double>({2}, {1, 0}));
  EXPECT_EQ(recall_prev<double>(s, Vec{1, 0}), (Vec{3}));
  EXPECT_EQ(recall_prev<double>(s, Vec{0, 1}), (Vec{0}));
  EXPECT_EQ(gamma<double>(s, Vec{1, 0}), 0.0);

  insert_kv<double>(s, Vec{1, 0}, Vec{5}, 1.0);
  EXPECT_EQ(s.A, Tensor<double>({1, 2}, {5, 0}));
  EXPECT_EQ(s.z, Tensor<double>({2}, {1, 0}));
  EXPECT_EQ(read<double>(s, Vec{1, 0}), (Vec{5}));
  EXPECT_EQ(read<double>(s, Vec{0, 1}), (Vec{0}));
}

TEST(DeltaRule, GammaOfOverRepresentedKey) {
  AssociativeState<double> s(1, 2);
  s.z[0] = 2.0;
  EXPECT_EQ(gamma<double>(s, Vec{1, 0}), -1.0);
}

TEST(DeltaRule, ClippedGammaStaysInUnitInterval) {
  const GammaPolicy clipped{true, true, true};
  AssociativeState<double> s(1, 2);
  s.z[0] = 2.0;
  insert_kv<double>(s, Vec{1, 0}, Vec{3}, 1.0, clipped);
  EXPECT_EQ(s.z, Tensor<double>({2}, {2, 0}));
  insert_kv<double>(s, Vec{0, 1}, Vec{3}, 1.0, clipped);
  EXPECT_EQ(s.z, Tensor<double>({2}, {2, 1}));
  // Unclipped, the same over-represented key pulls z down.
  AssociativeState<double> u(1, 2);
  u.z[0] = 2.0;
  insert_kv<double>(u, Vec{1, 0}, Vec{3}, 1.0);
  EXPECT_EQ(u.z, Tensor<double>({2}, {1, 0}));
}

TEST(DeltaRule, ClosedGateLeavesStateUnchanged) {
  AssociativeState<double> s(1, 2);
  insert_kv<double>(s, Vec{1, 0}, Vec{3}, 1.0);
  const auto before = s;
  insert_kv<double>(s, Vec{1, 0}, Vec{7}, 0.0);
  EXPECT_EQ(s.A, before.A);
  // z still tracks the key, and gamma is 0 for a key already represented.
  EXPECT_EQ(s.z, before.z);
}

TEST(DeltaRule, ShapeMismatchIsConfigError) {
  AssociativeState<double> s(1, 2);
  EXPECT_THROW(insert_kv<double>(s, Vec{1, 0, 0}, Vec{3}, 1.0), armt::ConfigError);
  EXPECT_THROW(insert_kv<double>(s, Vec{1, 0}, Vec{3, 4}, 1.0), armt::ConfigError);
}

// Random interleavings of writes over orthonormal keys must read back the last
// value written under each key.
TEST(DeltaRuleProperty, LastWriteWinsAgainstHashMap) {
  Rng rng(1234);
  for (int program = 0; program < 200; ++program) {
    const std::size_t n_keys = 1 + rng.uniform_int(64);
    const std::size_t d_val = 1 + rng.uniform_int(4);
    const std::size_t n_ops = 1 + rng.uniform_int(1000);
    AssociativeState<double> s(d_val, n_keys);
    std::unordered_map<std::size_t, Vec> oracle;
    for (std::size_t op = 0; op < n_ops; ++op) {
      const std::size_t key = rng.uniform_int(n_keys);
      Vec v(d_val);
      for (double& x : v) x = rng.normal(0.0, 2.0);
      insert_kv<double>(s, basis(n_keys, key), v, 1.0);
      oracle[key] = v;
    }
    for (const auto& [key, expected] : oracle) {
      const Vec got = read<double>(s, basis(n_keys, key));
      for (std::size_t a = 0; a < d_val; ++a) {
        ASSERT_NEAR(got[a], expected[a], 1e-6) << "program " << program << " key " << key;
      }
    }
    for (std::size_t key = 0; key < n_keys; ++key) {
      if (oracle.count(key)) continue;
      for (double y : read<double>(s, basis(n_keys, key))) ASSERT_EQ(y, 0.0);
    }
    ASSERT_NEAR(norm2(s.z), static_cast<double>(oracle.size()), 1e-6);
  }
}

TEST(DeltaRuleProperty, ReinsertLeavesZUnchanged) {
  Rng rng(77);
  const std::size_t n = 16;
  AssociativeState<double> s(2, n);
  std::vector<bool> seen(n, false);
  std::size_t distinct = 0;
  for (int op = 0; op < 300; ++op) {
    const std::size_t key = rng.uniform_int(n);
    const Tensor<double> z_before = s.z;
    insert_kv<double>(s, basis(n, key), Vec{rng.normal(), rng.normal()}, 1.0);
    if (seen[key]) {
      for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(s.z[i], z_before[i], 1e-6);
    } else {
      seen[key] = true;
      ++distinct;
    }
    ASSERT_NEAR(norm2(s.z), static_cast<double>(distinct), 1e-6);
  }
}

TEST(DeltaRuleProperty, WithoutGammaNormalizerGrowsAndScalesReads) {
  const GammaPolicy no_gamma{false, true};
  Rng rng(5);
  const std::size_t n = 8;
  AssociativeState<double> s(1, n);
  double previous = 0.0;
  for (int op = 0; op < 100; ++op) {
    insert_kv<double>(s, basis(n, rng.uniform_int(n)), Vec{rng.normal()}, 1.0, no_gamma);
    const double now = std::sqrt(norm2(s.z));
    ASSERT_GT(now, previous);
    previous = now;
  }

  // z counts every write, so a key written m times reads back its raw
  // association in A divided by m.
  for (int m = 1; m <= 6; ++m) {
    AssociativeState<double> t(1, n);
    for (int i = 0; i < m; ++i) insert_kv<double>(t, basis(n, 2), Vec{rng.normal()}, 1.0, no_gamma);
    EXPECT_NEAR(t.z[2], static_cast<double>(m), 1e-12);
    EXPECT_NEAR(read<double>(t, basis(n, 2))[0], t.A.at(0, 2) / m, 1e-12) << "m=" << m;
  }
}

// x = c (e_2p + e_2p+1) has a single nonzero DPFP coordinate whose position
// depends only on p and the sign of c, so these keys are mutually orthogonal.
Vec orthogonal_dpfp_key(std::size_t d, std::size_t p, double c) {
  Vec x(d, 0.0);
  x[2 * p] = c;
  x[2 * p + 1] = c;
  return x;
}

TEST(DeltaRuleProperty, OrthogonalDpfpKeysKeepZNonNegative) {
  Rng rng(6);
  const FeatureMapSpec spec{FeatureMapKind::dpfp, 3};
  const std::size_t d = 8;
  AssociativeState<double> s(2, spec.output_dim(d));
  for (int op = 0; op < 500; ++op) {
    const double sign = rng.uniform_int(2) ? 1.0 : -1.0;
    const Vec x = orthogonal_dpfp_key(d, rng.uniform_int(d / 2), sign * (0.2 + 2.0 * rng.uniform01()));
    insert_kv<double>(s, phi<double>(x, spec), Vec{rng.normal(), rng.normal()}, rng.uniform01());
    for (double v : s.z.storage()) ASSERT_GE(v, -1e-9);
  }
}

TEST(DeltaRuleProperty, ArbitraryDpfpKeysStayFinite) {
  Rng rng(6);
  const FeatureMapSpec spec{FeatureMapKind::dpfp, 3};
  const std::size_t d = 4;
  AssociativeState<double> s(3, spec.output_dim(d));
  for (int op = 0; op < 500; ++op) {
    Vec k(d);
    for (double& x : k) x = rng.normal();
    const Vec k_phi = phi<double>(k, spec);
    insert_kv<double>(s, k_phi, Vec{rng.normal(), rng.normal(), rng.normal()}, rng.uniform01());
    ASSERT_TRUE(s.A.all_finite());
    ASSERT_TRUE(s.z.all_finite());
    // The key just written is always represented with its own squared norm.
    double zk = 0.0, kk = 0.0;
    for (std::size_t i = 0; i < k_phi.size(); ++i) {
      zk += s.z[i] * k_phi[i];
      kk += k_phi[i] * k_phi[i];
    }
    ASSERT_NEAR(zk, kk, 1e-9 * std::max(1.0, kk));
  }
}

class ProjectionTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(31);
    proj = AssocProjections<double>::create(store, "assoc", hidden, d_mem, d_val, rng, 0.5);
    proj.out->value = random_tensor(rng, {hidden, d_val}, 0.5);
  }
  static constexpr std::size_t hidden = 6, d_mem = 2, d_val = 3;
  const FeatureMapSpec spec{FeatureMapKind::dpfp, 3};
  armt::nn::ParameterStore<double> store;
  AssocProjections<double> proj;
  StateDims dims{d_val, 2 * d_mem * 3};
};

TEST_F(ProjectionTest, EmptyStateQueryIsZero) {
  AssociativeState<double> s(d_val, dims.d_phi);
  for (double y : query<double>(s, Vec{1, -2, 0.5, 3, 0, 1}, proj, spec)) EXPECT_EQ(y, 0.0);
}

TEST_F(ProjectionTest, QueryIsReadOnly) {
  Rng rng(8);
  AssociativeState<double> s(d_val, dims.d_phi);
  for (int i = 0; i < 5; ++i) {
    Vec m(hidden);
    for (double& v : m) v = rng.normal();
    insert<double>(s, m, proj, spec);
  }
  const auto before = s;
  for (int i = 0; i < 20; ++i) {
    Vec x(hidden);
    for (double& v : x) v = rng.normal();
    query<double>(s, x, proj, spec);
  }
  EXPECT_EQ(s, before);
}

TEST_F(ProjectionTest, InsertComputesKeyValueAndGate) {
  Vec m{0.3, -1.0, 0.7, 0.2, -0.4, 1.1};
  AssociativeState<double> s(d_val, dims.d_phi);
  insert<double>(s, m, proj, spec);

  auto project = [&](const Tensor<double>& w) {
    Vec out(w.rows(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
      for (std::size_t c = 0; c < w.cols(); ++c) out[r] += w.at(r, c) * m[c];
    }
    return out;
  };
  const Vec k_phi = phi<double>(project(proj.key->value), spec);
  const Vec v = project(proj.value->value);
  const double beta = 1.0 / (1.0 + std::exp(-project(proj.beta->value)[0]));
  for (std::size_t a = 0; a < d_val; ++a) {
    for (std::size_t j = 0; j < dims.d_phi; ++j) EXPECT_NEAR(s.A.at(a, j), beta * v[a] * k_phi[j], 1e-12);
  }
  for (std::size_t j = 0; j < dims.d_phi; ++j) EXPECT_NEAR(s.z[j], k_phi[j], 1e-12);
}

Tensor<double> pack_states(const std::vector<AssociativeState<double>>& states) {
  const std::size_t width = states[0].float_count();
  Tensor<double> t({states.size(), width});
  for (std::size_t b = 0; b < states.size(); ++b) {
    std::copy(states[b].A.storage().begin(), states[b].A.storage().end(), t.ptr() + b * width);
    std::copy(states[b].z.storage().begin(), states[b].z.storage().end(),
              t.ptr() + b * width + states[b].A.size());
  }
  return t;
}

TEST_F(ProjectionTest, GraphMemoryUpdateMatchesVectorApi) {
  Rng rng(9);
  const std::size_t batch = 2, n_mem = 3;
  Tensor<double> mem = random_tensor(rng, {batch * n_mem, hidden});
  std::vector<AssociativeState<double>> expected(batch, AssociativeState<double>(d_val, dims.d_phi));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n_mem; ++i) {
      insert<double>(expected[b], std::span<const double>(mem.ptr() + (b * n_mem + i) * hidden, hidden), proj,
                     spec);
    }
  }
  Graph<double> g(false);
  Var<double> states = memory_update(empty_states(g, batch, dims), g.constant(mem), proj, spec,
                                     GammaPolicy{}, dims);
  const Tensor<double> want = pack_states(expected);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(states.value()[i], want[i], 1e-12);

  Tensor<double> x = random_tensor(rng, {batch * 2, hidden});
  Var<double> out = assoc_block(g.constant(x), states, proj, spec, dims);
  for (std::size_t r = 0; r < batch * 2; ++r) {
    const Vec y = query<double>(expected[r / 2], std::span<const double>(x.ptr() + r * hidden, hidden), proj,
                                spec);
    for (std::size_t c = 0; c < hidden; ++c) {
      double want_c = x.at(r, c);
      for (std::size_t a = 0; a < d_val; ++a) want_c += proj.out->value.at(c, a) * y[a];
      EXPECT_NEAR(out.value().at(r, c), want_c, 1e-12);
    }
  }
}

TEST_F(ProjectionTest, AssocBlockOnEmptyStateIsIdentity) {
  Rng rng(10);
  Graph<double> g(false);
  Tensor<double> x = random_tensor(rng, {5, hidden});
  EXPECT_EQ(assoc_block(g.constant(x), empty_states(g, 1, dims), proj, spec, dims).value(), x);
}

TEST_F(ProjectionTest, IdenticalTokensGiveIdenticalOutputs) {
  Rng rng(11);
  Graph<double> g(false);
  Var<double> states =
      memory_update(empty_states(g, 1, dims), g.constant(random_tensor(rng, {4, hidden})), proj, spec,
                    GammaPolicy{}, dims);
  Tensor<double> x = random_tensor(rng, {3, hidden});
  for (std::size_t c = 0; c < hidden; ++c) x.at(2, c) = x.at(0, c);
  const Tensor<double> out = assoc_block(g.constant(x), states, proj, spec, dims).value();
  for (std::size_t c = 0; c < hidden; ++c) EXPECT_EQ(out.at(0, c), out.at(2, c));
}

// Loss after writing memory tokens and reading with a 3-token segment; checks
// gradients into every projection and into the memory and input tokens.
TEST_F(ProjectionTest, GradientsMatchFiniteDifferences) {
  Rng rng(12);
  auto& mem = store.add("mem", random_tensor(rng, {2 * 2, hidden}));
  auto& x = store.add("x", random_tensor(rng, {2 * 3, hidden}));
  const Tensor<double> weights = random_tensor(rng, {2 * 3, hidden});
  for (bool detach : {true, false}) {
    for (bool correct : {true, false}) {
      const GammaPolicy policy{correct, detach};
      GradCheckResult r = armt::nn::grad_check_parameters(
          [&](Graph<double>& g) {
            Var<double> states = empty_states(g, 2, dims);
            states = memory_update(states, g.param(mem), proj, spec, policy, dims);
            states = memory_update(states, armt::nn::scale(g.param(mem), -0.7), proj, spec, policy, dims);
            Var<double> out = assoc_block(g.param(x), states, proj, spec, dims);
            return armt::nn::sum(armt::nn::mul(out, g.constant(weights)));
          },
          store);
      EXPECT_LT(r.max_rel_error, 1e-4)
          << "correct=" << correct << " detach=" << detach << " at " << store[r.tensor].name << "["
          << r.entry << "] analytic " << r.analytic << " numeric " << r.numeric;
    }
  }
}

// The model's configuration: unit-norm features and gamma clamped to [0, 1].
TEST_F(ProjectionTest, NormalizedClippedGradientsMatchFiniteDifferences) {
  Rng rng(15);
  auto& mem = store.add("mem", random_tensor(rng, {2 * 3, hidden}));
  auto& x = store.add("x", random_tensor(rng, {2 * 3, hidden}));
  const Tensor<double> weights = random_tensor(rng, {2 * 3, hidden});
  FeatureMapSpec unit = spec;
  unit.normalize = true;
  for (bool detach : {true, false}) {
    const GammaPolicy policy{true, detach, true};
    GradCheckResult r = armt::nn::grad_check_parameters(
        [&](Graph<double>& g) {
          Var<double> states = empty_states(g, 2, dims);
          states = memory_update(states, g.param(mem), proj, unit, policy, dims);
          states = memory_update(states, armt::nn::scale(g.param(mem), 0.9), proj, unit, policy, dims);
          Var<double> out = assoc_block(g.param(x), states, proj, unit, dims);
          return armt::nn::sum(armt::nn::mul(out, g.constant(weights)));
        },
        store);
    EXPECT_LT(r.max_rel_error, 1e-4) << "detach=" << detach << " at " << store[r.tensor].name << "[" << r.entry
                                     << "] analytic " << r.analytic << " numeric " << r.numeric;
  }
}

TEST(AssocGraphOps, InsertGradientsWithForcedInputs) {
  const StateDims dims{2, 3};
  Rng rng(13);
  Tensor<double> k({2, 3});
  for (double& v : k.storage()) v = 0.2 + rng.uniform01();
  for (bool detach : {true, false}) {
    GradCheckResult r = armt::nn::grad_check(
        [&](Graph<double>& g, Vars v) {
          Var<double> s = empty_states(g, 2, dims);
          s = assoc_insert(s, v[0], v[1], v[2], dims, GammaPolicy{true, detach});
          s = assoc_insert(s, armt::nn::scale(v[0], 0.5), armt::nn::scale(v[1], -1.0), v[2], dims,
                           GammaPolicy{true, detach});
          Var<double> y = assoc_read(s, v[3], dims);
          Rng c(3);
          return armt::nn::add(armt::nn::sum(armt::nn::mul(y, g.constant(random_tensor(c, y.shape())))),
                               armt::nn::sum(armt::nn::mul(s, g.constant(random_tensor(c, s.shape())))));
        },
        {k, random_tensor(rng, {2, 2}), Tensor<double>({2, 1}, {0.7, 0.4}),
         [&] {
           Tensor<double> q({4, 3});
           for (double& v : q.storage()) v = 0.1 + rng.uniform01();
           return q;
         }()});
    EXPECT_LT(r.max_rel_error, 1e-4) << "detach=" << detach;
  }
}

TEST(AssocState, SerializationRoundTrip) {
  Rng rng(14);
  AssociativeState<float> s(3, 12);
  for (float& v : s.A.storage()) v = static_cast<float>(rng.normal());
  for (float& v : s.z.storage()) v = static_cast<float>(rng.uniform01());
  std::stringstream ss;
  write_state(ss, s);
  EXPECT_EQ(read_state<float>(ss), s);

  std::stringstream wrong(ss.str());
  EXPECT_THROW(read_state<double>(wrong), armt::io::FormatError);
  std::stringstream garbage("nope");
  EXPECT_THROW(read_state<float>(garbage), armt::io::FormatError);
}

}  // namespace

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "armt/errors.hpp"
#include "armt/nn/adam.hpp"
#include "armt/nn/grad_check.hpp"
#include "armt/nn/graph.hpp"
#include "armt/nn/ops.hpp"
#include "armt/nn/rng.hpp"
#include "armt/nn/transformer.hpp"

namespace {

using armt::Rng;
using namespace armt::nn;
using Vars = std::span<const Var<double>>;

Tensor<double> random_tensor(Rng& rng, Shape shape, double stddev = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.storage()) v = rng.normal(0.0, stddev);
  return t;
}

// Weighted sum with fixed random coefficients, so every output entry
// contributes a distinct gradient.
Var<double> probe(Var<double> y, std::uint64_t seed = 99) {
  Rng rng(seed);
  Graph<double>& g = *y.graph;
  return sum(mul(y, g.constant(random_tensor(rng, y.shape()))));
}

TEST(Matmul, Examples) {
  Graph<double> g(false);
  auto a = g.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  auto b = g.constant(Tensor<double>({2, 2}, {5, 6, 7, 8}));
  EXPECT_EQ(matmul(a, b).value(), b.value());

  auto r = g.constant(Tensor<double>({1, 2}, {1, 2}));
  auto c = g.constant(Tensor<double>({2, 1}, {3, 4}));
  EXPECT_EQ(matmul(r, c).value()[0], 11.0);

  auto z = g.constant(Tensor<double>({2, 3}));
  EXPECT_EQ(matmul(b, z).value(), Tensor<double>({2, 3}));
}

TEST(Matmul, ShapeMismatchIsConfigError) {
  Graph<double> g(false);
  auto a = g.constant(Tensor<double>({2, 3}));
  auto b = g.constant(Tensor<double>({2, 3}));
  EXPECT_THROW(matmul(a, b), armt::ConfigError);
}

TEST(Ops, GradCheckMatrixOps) {
  Rng rng(1);
  GradCheckResult r = grad_check(
      [](Graph<double>&, Vars v) { return probe(matmul(v[0], v[1])); },
      {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5})});
  EXPECT_LT(r.max_rel_error, 1e-6);

  r = grad_check([](Graph<double>&, Vars v) { return probe(linear(v[0], v[1], v[2])); },
                 {random_tensor(rng, {3, 4}), random_tensor(rng, {5, 4}), random_tensor(rng, {5})});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Ops, GradCheckElementwiseOps) {
  Rng rng(2);
  auto x = random_tensor(rng, {3, 5});
  auto y = random_tensor(rng, {3, 5});
  EXPECT_LT(grad_check([](Graph<double>&, Vars v) { return probe(add(v[0], v[1])); }, {x, y}).max_rel_error,
            1e-6);
  EXPECT_LT(grad_check([](Graph<double>&, Vars v) { return probe(mul(v[0], v[1])); }, {x, y}).max_rel_error,
            1e-6);
  EXPECT_LT(grad_check([](Graph<double>&, Vars v) { return probe(scale(v[0], 0.3)); }, {x}).max_rel_error,
            1e-6);
  EXPECT_LT(grad_check([](Graph<double>&, Vars v) { return probe(sigmoid(v[0])); }, {x}).max_rel_error,
            1e-6);
  EXPECT_LT(grad_check([](Graph<double>&, Vars v) { return probe(gelu(v[0])); }, {x}).max_rel_error, 1e-6);
}

TEST(Ops, GradCheckLayerNormAndAttention) {
  Rng rng(3);
  GradCheckResult r = grad_check(
      [](Graph<double>&, Vars v) { return probe(layer_norm(v[0], v[1], v[2])); },
      {random_tensor(rng, {4, 6}), random_tensor(rng, {6}), random_tensor(rng, {6})});
  EXPECT_LT(r.max_rel_error, 1e-4);

  for (bool causal : {true, false}) {
    AttentionLayout layout{2, 2, causal};
    r = grad_check([&](Graph<double>&, Vars v) { return probe(attention(v[0], layout)); },
                   {random_tensor(rng, {2 * 5, 3 * 4})});
    EXPECT_LT(r.max_rel_error, 1e-4) << "causal=" << causal;
  }
}

TEST(Ops, GradCheckRowOps) {
  Rng rng(4);
  const std::vector<int> ids{2, 0, 2, 1};
  GradCheckResult r = grad_check(
      [&](Graph<double>&, Vars v) { return probe(embedding(v[0], std::span<const int>(ids))); },
      {random_tensor(rng, {3, 4})});
  EXPECT_LT(r.max_rel_error, 1e-6);

  r = grad_check([](Graph<double>&, Vars v) { return probe(gather_rows(v[0], {1, 1, 0})); },
                 {random_tensor(rng, {2, 3})});
  EXPECT_LT(r.max_rel_error, 1e-6);

  r = grad_check(
      [](Graph<double>&, Vars v) {
        const std::vector<Var<double>> parts{v[0], v[1]};
        return probe(assemble_rows<double>(parts, {{0, 3}, {1, 2, 4}}, 5));
      },
      {random_tensor(rng, {2, 3}), random_tensor(rng, {3, 3})});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Ops, AssembleRowsPlacesEveryRow) {
  Graph<double> g(false);
  auto a = g.constant(Tensor<double>({1, 2}, {1, 2}));
  auto b = g.constant(Tensor<double>({2, 2}, {3, 4, 5, 6}));
  const std::vector<Var<double>> parts{a, b};
  auto out = assemble_rows<double>(parts, {{1}, {2, 0}}, 3);
  EXPECT_EQ(out.value(), Tensor<double>({3, 2}, {5, 6, 1, 2, 3, 4}));
  EXPECT_THROW(assemble_rows<double>(parts, {{1}, {1, 0}}, 3), armt::ConfigError);
}

TEST(CrossEntropy, Examples) {
  Graph<double> g(false);
  const std::vector<int> target0{0};
  const std::vector<double> one{1.0};

  auto confident = g.constant(Tensor<double>({1, 3}, {50, 0, 0}));
  EXPECT_NEAR(cross_entropy(confident, std::span<const int>(target0), std::span<const double>(one)).value()[0],
              0.0, 1e-12);

  auto uniform = g.constant(Tensor<double>({1, 7}));
  EXPECT_NEAR(cross_entropy(uniform, std::span<const int>(target0), std::span<const double>(one)).value()[0],
              std::log(7.0), 1e-12);

  auto two = g.constant(Tensor<double>({1, 2}, {2, 0}));
  EXPECT_NEAR(cross_entropy(two, std::span<const int>(target0), std::span<const double>(one)).value()[0],
              std::log1p(std::exp(-2.0)), 1e-12);
}

TEST(CrossEntropy, MaskSelectsPositions) {
  Graph<double> g(false);
  auto logits = g.constant(Tensor<double>({2, 2}, {2, 0, 0, 0}));
  const std::vector<int> targets{0, 1};
  const std::vector<double> mask{1.0, 0.0};
  EXPECT_NEAR(cross_entropy(logits, std::span<const int>(targets), std::span<const double>(mask)).value()[0],
              std::log1p(std::exp(-2.0)), 1e-12);
  const std::vector<double> none{0.0, 0.0};
  EXPECT_THROW(cross_entropy(logits, std::span<const int>(targets), std::span<const double>(none)),
               armt::ConfigError);
}

TEST(CrossEntropy, GradCheck) {
  Rng rng(5);
  const std::vector<int> targets{1, 0, 3};
  const std::vector<double> mask{1.0, 0.0, 2.0};
  GradCheckResult r = grad_check(
      [&](Graph<double>&, Vars v) {
        return cross_entropy(v[0], std::span<const int>(targets), std::span<const double>(mask));
      },
      {random_tensor(rng, {3, 4})});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, SquareAtThree) {
  GradCheckResult r = grad_check([](Graph<double>&, Vars v) { return sum(mul(v[0], v[0])); },
                                 {Tensor<double>({1}, {3.0})});
  EXPECT_NEAR(r.analytic, 6.0, 1e-12);
  EXPECT_NEAR(r.numeric, 6.0, 1e-8);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

// sum(x * x) + sum(x * detach(x)): the detached factor is a constant, so the
// declared gradient is 3x; finite differences hold the detached value fixed.
TEST(GradCheck, DetachedPathIsHeldConstant) {
  const Tensor<double> x({3}, {0.5, -1.0, 2.0});
  GradCheckResult r = grad_check(
      [](Graph<double>&, Vars v) { return add(sum(mul(v[0], v[0])), sum(mul(v[0], detach(v[0])))); }, {x});
  EXPECT_LT(r.max_rel_error, 1e-9);
  EXPECT_NEAR(std::abs(r.analytic), 3.0 * std::abs(x[r.entry]), 1e-9);

  Graph<double> g;
  Parameter<double> p("x", x);
  Var<double> v = g.param(p);
  g.backward(sum(detach(v)));
  EXPECT_EQ(p.grad, Tensor<double>({3}));
}

class TransformerBlockTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(21);
    w = TransformerBlockWeights<double>::create(store, "block", 8, 2, rng, 0.3);
    Rng xr(22);
    x = random_tensor(xr, {4, 8});
  }
  ParameterStore<double> store;
  TransformerBlockWeights<double> w;
  Tensor<double> x;
};

TEST_F(TransformerBlockTest, ZeroOutputWeightsGiveIdentity) {
  w.proj_weight->value.fill(0.0);
  w.proj_bias->value.fill(0.0);
  w.ff_out_weight->value.fill(0.0);
  w.ff_out_bias->value.fill(0.0);
  Graph<double> g(false);
  EXPECT_EQ(transformer_block(g.constant(x), w, AttentionLayout{1, 2, true}).value(), x);
}

TEST_F(TransformerBlockTest, CausalOutputsIgnoreLaterTokens) {
  const AttentionLayout layout{1, 2, true};
  Graph<double> g(false);
  const Tensor<double> base = transformer_block(g.constant(x), w, layout).value();
  for (std::size_t j = 1; j < 4; ++j) {
    Tensor<double> moved = x;
    for (std::size_t c = 0; c < 8; ++c) moved.at(j, c) += 1.7;
    const Tensor<double> out = transformer_block(g.constant(moved), w, layout).value();
    for (std::size_t i = 0; i < j; ++i) {
      for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out.at(i, c), base.at(i, c));
    }
    EXPECT_NE(out.at(j, 0), base.at(j, 0));
  }
}

TEST_F(TransformerBlockTest, OutputShapeAndHeadValidation) {
  Graph<double> g(false);
  EXPECT_EQ(transformer_block(g.constant(x), w, AttentionLayout{1, 2, true}).shape(), x.shape());
  ParameterStore<double> other;
  Rng rng(1);
  EXPECT_THROW(TransformerBlockWeights<double>::create(other, "bad", 8, 3, rng), armt::ConfigError);
}

TEST_F(TransformerBlockTest, GradientMatchesFiniteDifferences) {
  const AttentionLayout layout{1, 2, true};
  GradCheckResult r =
      grad_check([&](Graph<double>&, Vars v) { return probe(transformer_block(v[0], w, layout)); }, {x});
  EXPECT_LT(r.max_rel_error, 1e-4);

  Parameter<double>& input = store.add("input", x);
  r = grad_check_parameters(
      [&](Graph<double>& g) { return probe(transformer_block(g.param(input), w, layout)); }, store);
  EXPECT_LT(r.max_rel_error, 1e-4) << store[r.tensor].name << "[" << r.entry << "]";
}

TEST_F(TransformerBlockTest, NonFiniteActivationNamesLayer) {
  w.ff_out_weight->value.fill(std::numeric_limits<double>::infinity());
  Graph<double> g(false);
  try {
    transformer_block(g.constant(x), w, AttentionLayout{1, 2, true}, 3);
    FAIL() << "expected NumericError";
  } catch (const armt::NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterStore<float> store;
  Rng rng(3);
  store.normal("w", {3, 3}, rng, 1.0);
  const Tensor<float> before = store.at("w").value;
  auto state = AdamState<float>::for_parameters(store);
  for (int i = 0; i < 5; ++i) adam_step(store, state, AdamHyper{});
  EXPECT_EQ(store.at("w").value, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore<double> store;
  Parameter<double>& p = store.add("s", Tensor<double>({1}, {0.25}));
  auto state = AdamState<double>::for_parameters(store);
  p.grad[0] = 1.0;
  AdamHyper hyper;
  hyper.lr = 1e-3;
  adam_step(store, state, hyper);
  EXPECT_NEAR(p.value[0], 0.25 - 1e-3, 1e-10);
}

TEST(Adam, IdenticalRunsAreBitIdentical) {
  auto run = [] {
    ParameterStore<float> store;
    Rng rng(8);
    Parameter<float>& w = store.normal("w", {4, 3}, rng, 0.5);
    auto state = AdamState<float>::for_parameters(store);
    Rng data(9);
    for (int step = 0; step < 25; ++step) {
      Tensor<float> x({5, 3});
      for (float& v : x.storage()) v = static_cast<float>(data.normal());
      store.zero_grad();
      Graph<float> g;
      Var<float> y = linear(g.constant(x), g.param(w));
      g.backward(sum(mul(y, y)));
      adam_step(store, state, AdamHyper{1e-2});
    }
    return store.at("w").value;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, NonFiniteGradientAbortsAndNamesParameter) {
  ParameterStore<double> store;
  store.add("first", Tensor<double>({2}, {1, 2}));
  store.add("second", Tensor<double>({2}, {3, 4}));
  auto state = AdamState<double>::for_parameters(store);
  store.at("first").grad[0] = 1.0;
  store.at("second").grad[1] = std::nan("");
  try {
    adam_step(store, state, AdamHyper{});
    FAIL() << "expected NumericError";
  } catch (const armt::NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("second"), std::string::npos);
  }
  EXPECT_EQ(store.at("first").value, Tensor<double>({2}, {1, 2}));
  EXPECT_EQ(state.step, 0u);
}

TEST(Adam, ClipGradNormRescales) {
  ParameterStore<double> store;
  Parameter<double>& p = store.add("p", Tensor<double>({2}));
  p.grad[0] = 3.0;
  p.grad[1] = 4.0;
  EXPECT_NEAR(clip_grad_norm(store, 1.0), 5.0, 1e-12);
  EXPECT_NEAR(p.grad[0], 0.6, 1e-12);
  EXPECT_NEAR(p.grad[1], 0.8, 1e-12);
}

TEST(Determinism, ForwardIsRepeatable) {
  auto run = [] {
    ParameterStore<float> store;
    Rng rng(4);
    auto w = TransformerBlockWeights<float>::create(store, "b", 16, 4, rng);
    Tensor<float> x({6, 16});
    for (float& v : x.storage()) v = static_cast<float>(rng.normal());
    Graph<float> g(false);
    return transformer_block(g.constant(x), w, AttentionLayout{2, 4, true}).value();
  };
  EXPECT_EQ(run(), run());
}

}  // namespace

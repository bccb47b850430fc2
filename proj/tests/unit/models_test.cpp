#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "armt/errors.hpp"
#include "armt/io/binary.hpp"
#include "armt/models/model.hpp"
#include "armt/nn/grad_check.hpp"
#include "armt/nn/ops.hpp"

namespace {

using namespace armt::models;
using armt::Rng;
using armt::nn::Graph;
using armt::nn::Tensor;
using armt::nn::Var;

ModelConfig tiny(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.layers = 2;
  c.hidden = 8;
  c.heads = 2;
  c.mem_tokens = 2;
  c.d_mem = 4;
  c.feature_map.nu = 2;
  c.vocab = 20;
  c.segment_len = 4;
  return c;
}

std::vector<int> random_tokens(Rng& rng, std::size_t n, std::size_t vocab = 20) {
  std::vector<int> t(n);
  for (int& x : t) x = static_cast<int>(rng.uniform_int(vocab));
  return t;
}

SegmentBatch make_segment(std::vector<int> tokens, std::size_t batch, bool supervised, Rng& rng) {
  SegmentBatch s;
  s.batch = batch;
  s.len = tokens.size() / batch;
  s.tokens = std::move(tokens);
  s.targets = random_tokens(rng, s.tokens.size());
  s.weights.assign(s.tokens.size(), supervised ? 1.0 : 0.0);
  return s;
}

template <typename T>
void randomize(Model<T>& m, std::uint64_t seed, double stddev) {
  Rng rng(seed);
  for (auto& p : m.parameters()) {
    for (T& v : p.value.storage()) v += static_cast<T>(rng.normal(0.0, stddev));
  }
}

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "armt_models_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TEST(ModelConfig, RecurrentFloatExamples) {
  ModelConfig c;
  c.mem_tokens = 10;
  c.hidden = 128;
  c.layers = 1;
  c.variant = Variant::rmt;
  EXPECT_EQ(count_recurrent_floats(c), 1280u);
  c.layers = 4;
  EXPECT_EQ(count_recurrent_floats(c), 1280u);
  c.variant = Variant::armt;
  c.d_mem = 32;
  c.feature_map.nu = 3;
  EXPECT_EQ(c.d_phi(), 192u);
  EXPECT_EQ(count_recurrent_floats(c), 30464u);
  c.variant = Variant::prmt;
  EXPECT_EQ(count_recurrent_floats(c), 5120u);
}

TEST(ModelConfig, RecurrentSizeOrdering) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    ModelConfig c;
    c.layers = 2 + rng.uniform_int(8);
    c.hidden = 1 + rng.uniform_int(256);
    c.mem_tokens = 1 + rng.uniform_int(32);
    c.d_mem = 1 + rng.uniform_int(64);
    c.feature_map.nu = 1 + rng.uniform_int(4);
    c.variant = Variant::rmt;
    const auto rmt = count_recurrent_floats(c);
    c.variant = Variant::prmt;
    const auto prmt = count_recurrent_floats(c);
    c.variant = Variant::armt;
    const auto armt = count_recurrent_floats(c);
    ASSERT_LT(rmt, prmt);
    ASSERT_LT(prmt, armt);
  }
}

TEST(ModelConfig, ValidationAndJson) {
  ModelConfig c = tiny(Variant::armt);
  EXPECT_NO_THROW(c.validate());
  ModelConfig bad = c;
  bad.feature_map.kind = armt::assoc::FeatureMapKind::identity;
  EXPECT_THROW(bad.validate(), armt::ConfigError);
  bad = c;
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), armt::ConfigError);
  bad = c;
  bad.mem_tokens = 0;
  EXPECT_THROW(bad.validate(), armt::ConfigError);

  for (Variant v : {Variant::armt, Variant::rmt, Variant::prmt, Variant::armt_no_gamma}) {
    c.variant = v;
    EXPECT_EQ(nlohmann::json(c).get<ModelConfig>(), c);
  }
  EXPECT_THROW(nlohmann::json({{"layerz", 2}}).get<ModelConfig>(), armt::ConfigError);
  EXPECT_THROW(nlohmann::json({{"variant", "lstm"}}).get<ModelConfig>(), armt::ConfigError);
  EXPECT_THROW((Model<float>(bad, 1)), armt::ConfigError);
}

TEST(Model, CarrySizeIsConstantAndMatchesCount) {
  for (Variant v : {Variant::armt, Variant::rmt, Variant::prmt, Variant::armt_no_gamma}) {
    Model<float> model(tiny(v), 5);
    Rng rng(1);
    Graph<float> g0(false);
    Carry<float> carry = model.initial_carry(g0, 2);
    std::size_t after_first = 0;
    std::unique_ptr<Graph<float>> g = std::make_unique<Graph<float>>(false);
    carry = rebind(*g, carry);
    for (int s = 0; s < 100; ++s) {
      auto next = std::make_unique<Graph<float>>(false);
      auto out = model.forward_segment(*g, carry, random_tokens(rng, 2 * 4), 2, false);
      carry = rebind(*next, out.carry);
      g = std::move(next);
      if (s == 0) after_first = carry.float_count();
      ASSERT_EQ(carry.float_count(), after_first);
    }
    EXPECT_EQ(after_first, count_recurrent_floats(model.config())) << variant_name(v);
    EXPECT_EQ(carry.segments_seen, 100u);
  }
}

TEST(Model, ArmtAtFirstSegmentEqualsPrmt) {
  Model<double> armt(tiny(Variant::armt), 7);
  Model<double> prmt(tiny(Variant::prmt), 8);
  randomize(prmt, 9, 0.3);
  armt.copy_parameters_from(prmt);
  Rng rng(2);
  const auto tokens = random_tokens(rng, 3 * 4);
  Graph<double> ga(false), gp(false);
  const Tensor<double> la =
      armt.forward_segment(ga, armt.initial_carry(ga, 3), tokens, 3).logits.value();
  const Tensor<double> lp =
      prmt.forward_segment(gp, prmt.initial_carry(gp, 3), tokens, 3).logits.value();
  EXPECT_EQ(la, lp);
}

TEST(Model, SegmentErrors) {
  ModelConfig c = tiny(Variant::rmt);
  c.max_segments = 2;
  Model<float> model(c, 1);
  Graph<float> g(false);
  auto carry = model.initial_carry(g, 1);
  EXPECT_THROW(model.forward_segment(g, carry, std::vector<int>(5, 1), 1), armt::ConfigError);
  EXPECT_THROW(model.forward_segment(g, carry, std::vector<int>{1, 99}, 1), armt::ConfigError);
  EXPECT_THROW(model.forward_segment(g, carry, std::vector<int>{1, 2}, 2), armt::ConfigError);
  carry = model.forward_segment(g, carry, std::vector<int>{1, 2}, 1).carry;
  carry = model.forward_segment(g, carry, std::vector<int>{1, 2}, 1).carry;
  EXPECT_THROW(model.forward_segment(g, carry, std::vector<int>{1, 2}, 1), armt::ConfigError);
  EXPECT_THROW(model.forward_sequence(g, {}), armt::ConfigError);
}

TEST(Model, SingleSegmentSequenceMatchesSegmentPlusLoss) {
  Model<double> model(tiny(Variant::armt), 3);
  randomize(model, 4, 0.2);
  Rng rng(5);
  const std::vector<SegmentBatch> seq{make_segment(random_tokens(rng, 2 * 3), 2, true, rng)};
  Graph<double> g(false);
  auto out = model.forward_sequence(g, seq);
  Graph<double> h(false);
  auto so = model.forward_segment(h, model.initial_carry(h, 2), seq[0].tokens, 2);
  EXPECT_EQ(out.logits[0].value(), so.logits.value());
  auto loss = armt::nn::cross_entropy(so.logits, std::span<const int>(seq[0].targets),
                                      std::span<const double>(seq[0].weights));
  EXPECT_DOUBLE_EQ(out.loss.value()[0], loss.value()[0]);
}

TEST(Model, LaterSegmentsNeverChangeEarlierLogits) {
  for (Variant v : {Variant::armt, Variant::rmt, Variant::prmt}) {
    Model<double> model(tiny(v), 11);
    randomize(model, 12, 0.3);
    Rng rng(6);
    std::vector<SegmentBatch> seq;
    for (int s = 0; s < 4; ++s) seq.push_back(make_segment(random_tokens(rng, 4), 1, true, rng));
    Graph<double> g(false);
    auto base = model.forward_sequence(g, seq);
    seq[2].tokens = random_tokens(rng, 4);
    auto moved = model.forward_sequence(g, seq);
    for (int s = 0; s < 2; ++s) EXPECT_EQ(base.logits[s].value(), moved.logits[s].value()) << variant_name(v);
    EXPECT_NE(base.logits[3].value(), moved.logits[3].value()) << variant_name(v);
  }
}

TEST(Model, BackpropagationCrossesSegments) {
  for (Variant v : {Variant::armt, Variant::rmt, Variant::prmt}) {
    Model<double> model(tiny(v), 13);
    randomize(model, 14, 0.3);
    Rng rng(7);
    const std::vector<SegmentBatch> seq{make_segment(random_tokens(rng, 4), 1, false, rng),
                                        make_segment(random_tokens(rng, 4), 1, true, rng)};
    auto grads = [&](bool detach) {
      model.parameters().zero_grad();
      Graph<double> g;
      g.backward(model.forward_sequence(g, seq, detach).loss);
      return model.parameters().at("layer0.ff.in.weight").grad;
    };
    const Tensor<double> full = grads(false), cut = grads(true);
    double diff = 0.0;
    for (std::size_t i = 0; i < full.size(); ++i) diff += std::abs(full[i] - cut[i]);
    EXPECT_GT(diff, 1e-8) << variant_name(v);
  }
}

TEST(Model, TwoSegmentArmtGradientMatchesFiniteDifferences) {
  ModelConfig c = tiny(Variant::armt);
  c.mem_tokens = 1;
  for (bool detach : {true, false}) {
    c.detach_gamma = detach;
    Model<double> model(c, 21);
    randomize(model, 22, 0.3);
    Rng rng(8);
    const std::vector<SegmentBatch> seq{make_segment(random_tokens(rng, 2 * 4), 2, false, rng),
                                        make_segment(random_tokens(rng, 2 * 4), 2, true, rng)};
    auto r = armt::nn::grad_check_parameters(
        [&](Graph<double>& g) { return model.forward_sequence(g, seq).loss; }, model.parameters());
    EXPECT_LT(r.max_rel_error, 1e-4) << model.parameters()[r.tensor].name << "[" << r.entry << "]";
  }
}

TEST(Model, ThreeSegmentGradientsForEveryVariant) {
  for (Variant v : {Variant::armt, Variant::rmt, Variant::prmt, Variant::armt_no_gamma}) {
    Model<double> model(tiny(v), 31);
    randomize(model, 32, 0.3);
    Rng rng(9);
    std::vector<SegmentBatch> seq;
    for (int s = 0; s < 3; ++s) seq.push_back(make_segment(random_tokens(rng, 2 * 3), 2, s != 0, rng));
    armt::nn::GradCheckOptions opt;
    opt.max_entries_per_tensor = 16;
    auto r = armt::nn::grad_check_parameters(
        [&](Graph<double>& g) { return model.forward_sequence(g, seq).loss; }, model.parameters(), opt);
    EXPECT_LT(r.max_rel_error, 1e-4) << variant_name(v) << " " << model.parameters()[r.tensor].name;
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Model<float> model(tiny(Variant::armt), 41);
  randomize(model, 42, 0.1);
  armt::models::TrainingSnapshot<float> snap;
  snap.optimizer = armt::nn::AdamState<float>::for_parameters(model.parameters());
  snap.optimizer->step = 17;
  snap.optimizer->first[3][0] = 0.5f;
  snap.trainer = {{"stage", 2}};
  Rng rng(43);
  rng.normal();
  snap.rng = rng;
  const auto path = temp_path("round_trip.ckpt").string();
  save_checkpoint(path, model, snap);

  auto loaded = load_checkpoint<float>(path, &model.config());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    EXPECT_EQ(loaded.model.parameters()[i].value, model.parameters()[i].value);
  }
  ASSERT_TRUE(loaded.snapshot.optimizer.has_value());
  EXPECT_EQ(loaded.snapshot.optimizer->step, 17u);
  EXPECT_EQ(loaded.snapshot.optimizer->first[3][0], 0.5f);
  EXPECT_EQ(loaded.snapshot.trainer.at("stage"), 2);
  ASSERT_TRUE(loaded.snapshot.rng.has_value());
  EXPECT_TRUE(*loaded.snapshot.rng == rng);
  EXPECT_EQ(loaded.snapshot.rng->normal(), rng.normal());

  Rng data(44);
  const auto tokens = random_tokens(data, 2 * 4);
  Graph<float> a(false), b(false);
  EXPECT_EQ(model.forward_segment(a, model.initial_carry(a, 2), tokens, 2).logits.value(),
            loaded.model.forward_segment(b, loaded.model.initial_carry(b, 2), tokens, 2).logits.value());
  EXPECT_EQ(read_checkpoint_config(path), model.config());
}

TEST(Checkpoint, MismatchesAreRejected) {
  Model<float> model(tiny(Variant::rmt), 51);
  const auto path = temp_path("mismatch.ckpt").string();
  save_checkpoint(path, model);

  ModelConfig other = model.config();
  other.vocab = 21;
  EXPECT_THROW(load_checkpoint<float>(path, &other), armt::ConfigError);
  EXPECT_THROW(load_checkpoint<double>(path), armt::ConfigError);

  std::string bytes;
  {
    std::ifstream is(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(is), {});
  }
  std::string bumped = bytes;
  bumped[4] = 9;
  const auto bad_version = temp_path("version.ckpt").string();
  std::ofstream(bad_version, std::ios::binary) << bumped;
  EXPECT_THROW(load_checkpoint<float>(bad_version), armt::io::FormatError);

  const auto truncated = temp_path("truncated.ckpt").string();
  std::ofstream(truncated, std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(load_checkpoint<float>(truncated), armt::io::FormatError);
  EXPECT_THROW(load_checkpoint<float>(temp_path("missing.ckpt").string()), armt::ConfigError);
}

}  // namespace

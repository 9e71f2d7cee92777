// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#include "c2f/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "c2f/ctc.hpp"
#include "c2f/optim.hpp"
#include "oracles.hpp"

namespace c2f {
namespace {

const Alphabet& czech() {
  static const Alphabet a = Alphabet::from_name("czech");
  return a;
}
const Alphabet& english() {
  static const Alphabet a = Alphabet::from_name("english");
  return a;
}

Model micro(const Alphabet& a, std::uint64_t seed = 1) {
  return build_model(ModelConfig::micro(static_cast<int>(a.num_labels())), a, CounterRng(seed, "init"));
}

template <typename T>
SequenceBatch<T> random_input(std::vector<std::size_t> lens, std::uint64_t seed, std::size_t feats = 64) {
  std::size_t tmax = 0;
  for (auto l : lens) tmax = std::max(tmax, l);
  SequenceBatch<T> x(lens.size(), tmax, feats);
  x.lens = lens;
  std::mt19937 gen(static_cast<unsigned>(seed));
  std::normal_distribution<double> n(0, 1);
  for (std::size_t b = 0; b < lens.size(); ++b)
    for (std::size_t t = 0; t < lens[b]; ++t)
      for (std::size_t f = 0; f < feats; ++f) x.frame(b, t)[f] = static_cast<T>(n(gen));
  return x;
}

TEST(ModelConfig, Presets) {
  auto q = ModelConfig::quartznet15x5(29);
  ASSERT_EQ(q.blocks.size(), 5u);
  EXPECT_EQ(q.c1.kernel, 33);
  EXPECT_EQ(q.c1.channels, 256);
  const int kernels[] = {33, 39, 51, 63, 75};
  const int channels[] = {256, 256, 512, 512, 512};
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(q.blocks[i].kernel, kernels[i]);
    EXPECT_EQ(q.blocks[i].channels, channels[i]);
    EXPECT_EQ(q.blocks[i].repeats, 3);
    EXPECT_EQ(q.blocks[i].modules, 5);
  }
  EXPECT_EQ(q.c2.kernel, 87);
  EXPECT_EQ(q.c3_channels, 1024);
  EXPECT_THROW(ModelConfig::from_preset("jasper", 29), Error);
  auto bad = ModelConfig::micro(29);
  bad.c1.kernel = 8;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Model, QuartzNetSize) {
  Model m(ModelConfig::quartznet15x5(29), english());
  // Roughly 18.9 million parameters.
  EXPECT_NEAR(static_cast<double>(m.parameter_count()), 18.9e6, 0.5e6);
}

TEST(Model, LabelCountMustMatchAlphabet) {
  EXPECT_THROW(Model(ModelConfig::micro(29), czech()), Error);
}

TEST(Model, DecoderShapeAndPartition) {
  auto m = micro(czech());
  const auto& w = m.tensor("decoder.c4.pw.weight");
  EXPECT_EQ(w.shape, (std::vector<std::size_t>{128, 44}));
  EXPECT_EQ(w.partition, Partition::kDecoder);
  for (const auto& t : m.tensors())
    EXPECT_EQ(t.partition == Partition::kDecoder, t.name.starts_with("decoder.")) << t.name;
  EXPECT_FALSE(m.has_tensor("decoder.c4.bn.gamma"));
  EXPECT_FALSE(m.tensor("encoder.c1.bn.running_mean").trainable);
}

TEST(Model, GlorotBoundAndDeterminism) {
  auto a = micro(czech(), 4);
  auto b = micro(czech(), 4);
  auto c = micro(czech(), 5);
  bool differs = false;
  for (std::size_t i = 0; i < a.tensors().size(); ++i) {
    const auto& t = a.tensors()[i];
    EXPECT_EQ(t.values, b.tensors()[i].values) << t.name;
    differs |= t.values != c.tensors()[i].values;
    if (t.role == TensorRole::kWeight) {
      const double bound = glorot_bound(a.config(), t);
      double mx = 0;
      for (float v : t.values) mx = std::max(mx, static_cast<double>(std::abs(v)));
      EXPECT_LE(mx, bound) << t.name;
      EXPECT_GT(mx, 0.5 * bound) << t.name;
    }
  }
  EXPECT_TRUE(differs);
  // Depthwise: fan_in = K, fan_out = C * K.
  EXPECT_DOUBLE_EQ(glorot_bound(a.config(), a.tensor("encoder.c1.dw.weight")), std::sqrt(6.0 / (9 + 64 * 9)));
  EXPECT_DOUBLE_EQ(glorot_bound(a.config(), a.tensor("decoder.c4.pw.weight")), std::sqrt(6.0 / (128 + 44)));
}

TEST(Model, OutputLength) {
  auto cfg = ModelConfig::micro(29);
  EXPECT_EQ(output_length(100, cfg), 50u);
  EXPECT_EQ(output_length(101, cfg), 51u);
  EXPECT_EQ(output_length(1, cfg), 1u);
}

TEST(Model, ForwardLengths) {
  auto m = micro(czech());
  auto y = forward(m, random_input<float>({100, 60}, 1));
  EXPECT_EQ(y.lens, (std::vector<std::size_t>{50, 30}));
  EXPECT_EQ(y.steps, 50u);
  EXPECT_EQ(y.channels, 44u);
  for (float v : y.data) ASSERT_TRUE(std::isfinite(v));
}

TEST(Model, EvalForwardIsPure) {
  auto m = micro(czech());
  m.mode = Mode::kEval;
  auto x = random_input<float>({37, 20}, 2);
  auto snapshot = m.tensors();
  auto a = forward(m, x);
  auto b = forward(m, x);
  EXPECT_EQ(a.data, b.data);
  for (std::size_t i = 0; i < snapshot.size(); ++i) EXPECT_EQ(snapshot[i].values, m.tensors()[i].values);
}

TEST(Model, EvalOutputIndependentOfBatchAndPadding) {
  auto m = micro(czech());
  m.mode = Mode::kEval;
  auto pair = random_input<float>({41, 17}, 3);
  SequenceBatch<float> alone(1, 17, 64);
  for (std::size_t t = 0; t < 17; ++t)
    std::copy_n(pair.frame(1, t), 64, alone.frame(0, t));
  auto y2 = forward(m, pair);
  auto y1 = forward(m, alone);
  ASSERT_EQ(y1.lens[0], y2.lens[1]);
  for (std::size_t t = 0; t < y1.lens[0]; ++t)
    for (std::size_t k = 0; k < 44; ++k) EXPECT_FLOAT_EQ(y1.frame(0, t)[k], y2.frame(1, t)[k]);
}

TEST(Model, ZeroInputGivesConstantLogits) {
  auto m = micro(czech());
  m.mode = Mode::kEval;
  SequenceBatch<float> x(1, 30, 64);
  auto y = forward(m, x);
  for (std::size_t t = 1; t < y.lens[0]; ++t)
    for (std::size_t k = 0; k < 44; ++k) EXPECT_EQ(y.frame(0, t)[k], y.frame(0, 0)[k]);
}

TEST(Model, ForwardRejectsBadInput) {
  auto m = micro(czech());
  EXPECT_THROW(forward(m, random_input<float>({10}, 1, 32)), Error);
  auto x = random_input<float>({10}, 1);
  x.lens[0] = 11;
  EXPECT_THROW(forward(m, x), Error);
  m.mode = Mode::kEval;
  ForwardCache<float> cache;
  EXPECT_THROW(forward(m, random_input<float>({10}, 1), &cache), Error);
}

TEST(Model, TrainModeUpdatesRunningStatsUnlessFrozen) {
  auto m = micro(czech());
  auto x = random_input<float>({30, 24}, 5);
  const auto before = m.tensor("encoder.c1.bn.running_mean").values;
  forward(m, x);
  EXPECT_NE(m.tensor("encoder.c1.bn.running_mean").values, before);
  auto n = micro(czech());
  set_trainable(n, PartitionSelector::kEncoder, false);
  const auto digest = partition_digest(n, Partition::kEncoder);
  forward(n, x);
  EXPECT_EQ(partition_digest(n, Partition::kEncoder), digest);
}

double batch_loss(ModelD& m, const SequenceBatch<double>& x, const std::vector<std::vector<int>>& targets) {
  return ctc_loss<double>(forward<double>(m, x, nullptr, {.update_running_stats = false}), targets, nullptr);
}

// batch_stats=false freezes the normalization gains, which switches those
// layers to running statistics while the kernels stay trainable.
void check_gradients(bool batch_stats, std::uint64_t seed) {
  ModelD m = micro(czech(), seed).cast<double>();
  for (auto& t : m.tensors()) {
    std::mt19937 gen(static_cast<unsigned>(seed + t.values.size()));
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    if (t.role == TensorRole::kRunningMean || t.role == TensorRole::kShift || t.role == TensorRole::kBias)
      for (auto& v : t.values) v = u(gen);
    if (t.role == TensorRole::kRunningVar || t.role == TensorRole::kGain)
      for (auto& v : t.values) v = 1.0 + u(gen);
    if (!batch_stats && (t.role == TensorRole::kGain || t.role == TensorRole::kShift)) t.trainable = false;
  }
  auto x = random_input<double>({20, 14}, seed);
  std::vector<std::vector<int>> targets{{3, 7, 7, 1}, {12, 0}};
  ForwardCache<double> cache;
  SequenceBatch<double> dlogits;
  const double loss = ctc_loss(forward(m, x, &cache, {.update_running_stats = false}), targets, &dlogits);
  ASSERT_TRUE(std::isfinite(loss));
  auto grads = backward(m, cache, dlogits);

  const std::uint64_t signature = cache.activation_signature();
  auto signature_at = [&](double& w, double value) {
    const double saved = w;
    w = value;
    ForwardCache<double> c;
    forward<double>(m, x, &c, {.update_running_stats = false});
    w = saved;
    return c.activation_signature();
  };

  // Biases directly followed by batch normalization cancel exactly.
  auto cancelled = [&](const NamedTensor<double>& t) {
    if (t.role != TensorRole::kBias || !batch_stats) return false;
    const std::string unit = t.name.substr(0, t.name.rfind('.', t.name.rfind('.') - 1));
    return m.has_tensor(unit + ".bn.gamma");
  };

  std::mt19937 gen(static_cast<unsigned>(seed));
  std::vector<std::pair<std::string, std::size_t>> picks;
  for (const auto& t : m.tensors())
    if (t.trainable && t.is_parameter()) {
      if (cancelled(t)) {
        for (double g : grads.at(t.name)) EXPECT_LT(std::abs(g), 1e-12) << t.name;
        continue;
      }
      for (int i = 0; i < 2; ++i) picks.emplace_back(t.name, gen() % t.values.size());
    }
  std::shuffle(picks.begin(), picks.end(), gen);
  int checked = 0, kinks = 0;
  const double eps = 1e-4;
  for (const auto& [name, idx] : picks) {
    if (checked == 24) break;
    double& w = m.tensor(name).values[idx];
    if (signature_at(w, w + eps) != signature || signature_at(w, w - eps) != signature) {
      ++kinks;
      continue;
    }
    const double fd = oracle::central_difference([&] { return batch_loss(m, x, targets); }, w, eps);
    const double an = grads.at(name)[idx];
    EXPECT_LT(oracle::rel_error(an, fd), 1e-5) << name << "[" << idx << "] analytic " << an << " fd " << fd;
    ++checked;
  }
  EXPECT_EQ(checked, 24) << kinks << " samples straddled a ReLU kink";
}

TEST(ModelGradient, FiniteDifferencesBatchStatistics) { check_gradients(true, 11); }
TEST(ModelGradient, FiniteDifferencesFrozenNormalization) { check_gradients(false, 12); }

TEST(ModelGradient, FrozenAndZeroCases) {
  auto m = micro(czech());
  auto x = random_input<float>({16}, 7);
  ForwardCache<float> cache;
  auto y = forward(m, x, &cache);
  SequenceBatch<float> zero(y.batch, y.steps, y.channels);
  zero.lens = y.lens;
  auto g = backward(m, cache, zero);
  EXPECT_FALSE(g.empty());
  for (const auto& [name, v] : g)
    for (float e : v) ASSERT_EQ(e, 0.0f) << name;

  set_trainable(m, PartitionSelector::kAll, false);
  ForwardCache<float> c2;
  auto y2 = forward(m, x, &c2);
  EXPECT_TRUE(backward(m, c2, zero).empty());
  EXPECT_THROW(backward(m, ForwardCache<float>{}, zero), Error);
}

TEST(ModelGradient, EncoderFrozenYieldsDecoderOnly) {
  auto m = micro(czech());
  set_trainable(m, PartitionSelector::kEncoder, false);
  auto x = random_input<float>({16}, 8);
  ForwardCache<float> cache;
  auto y = forward(m, x, &cache);
  SequenceBatch<float> d;
  ctc_loss(y, std::vector<std::vector<int>>{{1, 2}}, &d);
  auto g = backward(m, cache, d);
  for (const auto& [name, v] : g) EXPECT_TRUE(name.starts_with("decoder.")) << name;
  EXPECT_EQ(g.size(), 2u);
}

TEST(Freezing, FlagsAndInvolution) {
  auto m = micro(czech());
  std::vector<bool> original;
  for (const auto& t : m.tensors()) original.push_back(t.trainable);
  set_trainable(m, PartitionSelector::kEncoder, false);
  for (const auto& t : m.tensors())
    EXPECT_EQ(t.trainable, t.partition == Partition::kDecoder) << t.name;
  set_trainable(m, PartitionSelector::kAll, false);
  set_trainable(m, PartitionSelector::kAll, true);
  for (std::size_t i = 0; i < original.size(); ++i)
    if (m.tensors()[i].is_parameter()) EXPECT_EQ(m.tensors()[i].trainable, original[i]);
}

TEST(Freezing, FrozenEncoderSurvivesTraining) {
  auto m = micro(czech());
  set_trainable(m, PartitionSelector::kEncoder, false);
  const auto enc = partition_digest(m, Partition::kEncoder);
  const auto dec = partition_digest(m, Partition::kDecoder);
  OptimState state;
  OptimConfig cfg;
  std::vector<std::vector<int>> targets{{1, 2, 3}, {4, 4}};
  for (int step = 1; step <= 10; ++step) {
    ForwardCache<float> cache;
    auto y = forward(m, random_input<float>({30, 22}, step), &cache);
    SequenceBatch<float> d;
    ctc_loss(y, targets, &d);
    novograd_step(m, backward(m, cache, d), state, cfg, 0.01);
    EXPECT_EQ(partition_digest(m, Partition::kEncoder), enc);
  }
  EXPECT_NE(partition_digest(m, Partition::kDecoder), dec);
}

TEST(SwapDecoder, EnglishToCzech) {
  auto en = micro(english());
  set_trainable(en, PartitionSelector::kEncoder, false);
  en.step = 17;
  auto cs = swap_decoder(en, czech(), CounterRng(1, "swap"));
  EXPECT_EQ(partition_digest(cs, Partition::kEncoder), partition_digest(en, Partition::kEncoder));
  EXPECT_EQ(cs.tensor("decoder.c4.pw.weight").shape, (std::vector<std::size_t>{128, 44}));
  EXPECT_EQ(cs.alphabet(), czech());
  EXPECT_EQ(cs.step, 17u);
  EXPECT_FALSE(cs.tensor("encoder.c2.pw.weight").trainable);
  cs.mode = Mode::kEval;
  auto y = forward(cs, random_input<float>({25}, 9));
  EXPECT_EQ(y.channels, 44u);
  for (float v : y.data) ASSERT_TRUE(std::isfinite(v));
}

TEST(SwapDecoder, SameAlphabetReinitializes) {
  auto m = micro(czech(), 1);
  auto s = swap_decoder(m, czech(), CounterRng(1, "other"));
  EXPECT_NE(s.tensor("decoder.c4.pw.weight").values, m.tensor("decoder.c4.pw.weight").values);
  EXPECT_EQ(partition_digest(s, Partition::kEncoder), partition_digest(m, Partition::kEncoder));
}

TEST(PartitionDigest, SensitiveToEveryBit) {
  auto m = micro(czech());
  const auto d = partition_digest(m, Partition::kEncoder);
  EXPECT_EQ(d.size(), 64u);
  auto& v = m.tensor("encoder.b2.s1.m2.pw.weight").values[7];
  v = std::nextafter(v, 1.0f);
  EXPECT_NE(partition_digest(m, Partition::kEncoder), d);
}

}  // namespace
}  // namespace c2f

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "gradient_oracle.hpp"
#include "mkbd/verification_head.hpp"
#include "test_support.hpp"

namespace mkbd {
namespace {

using testing::TempDir;

TEST(Combine, Examples) {
  const std::vector<float> v{0.25f, -1.5f, 3.0f};
  EXPECT_EQ(combine(std::span<const float>(v), std::span<const float>(v)), std::vector<double>(3, 0.0));
  const std::vector<double> a{1, -2}, b{3, 1};
  EXPECT_EQ(combine(std::span<const double>(a), std::span<const double>(b)), (std::vector<double>{2, 3}));
}

TEST(Combine, SymmetricBitExact) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto x = testing::random_embedding(17, rng);
    const auto y = testing::random_embedding(17, rng);
    EXPECT_EQ(combine(std::span<const float>(x), std::span<const float>(y)),
              combine(std::span<const float>(y), std::span<const float>(x)));
  }
}

TEST(Combine, ShapeMismatch) {
  const std::vector<float> a(3), b(4);
  EXPECT_THROW(combine(std::span<const float>(a), std::span<const float>(b)), ShapeError);
}

TEST(Forward, ZeroParamsGiveHalf) {
  const auto params = HeadParameters::zeros(4, 3);
  const std::vector<double> delta{0.1, 0.2, 0.3, 0.4};
  const auto trace = forward(params, delta);
  EXPECT_EQ(trace.prob, 0.5);
  EXPECT_EQ(trace.logit, 0.0);
}

TEST(Forward, ZeroDeltaGivesBias) {
  auto params = testing::random_head(5, 4, 3);
  std::fill(params.b1.begin(), params.b1.end(), 0.0);
  params.b2 = -0.375;
  const auto trace = forward(params, std::vector<double>(5, 0.0));
  EXPECT_EQ(trace.logit, -0.375);
  EXPECT_DOUBLE_EQ(trace.prob, sigmoid(-0.375));
}

TEST(Forward, TraceInvariantsAndRange) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto params = testing::random_head(8, 6, rng(), 3.0);
    std::vector<double> delta(8);
    for (auto& x : delta) x = std::fabs(std::normal_distribution<double>(0, 5)(rng));
    const auto t = forward(params, delta);
    EXPECT_GT(t.prob, 0.0);
    EXPECT_LT(t.prob, 1.0);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(t.hidden[j], std::max(t.pre_act[j], 0.0));
  }
  // Saturated logits stay strictly inside (0, 1).
  auto params = HeadParameters::zeros(2, 1);
  params.b2 = 1e4;
  EXPECT_LT(forward(params, std::vector<double>{0, 0}).prob, 1.0);
  params.b2 = -1e4;
  EXPECT_GT(forward(params, std::vector<double>{0, 0}).prob, 0.0);
}

TEST(Forward, Errors) {
  const auto params = HeadParameters::zeros(4, 3);
  EXPECT_THROW(forward(params, std::vector<double>(3, 0.0)), ShapeError);
  auto huge = HeadParameters::zeros(1, 2);
  huge.w1 = {1e308, 1e308};
  huge.w2 = {1e308, 1e308};
  EXPECT_THROW(forward(huge, std::vector<double>{10.0}), NumericError);
}

TEST(Decide, StrictThreshold) {
  EXPECT_EQ(decide(0.5), Decision::kNo);
  EXPECT_EQ(decide(0.5000001), Decision::kYes);
  EXPECT_EQ(decide(0.0), Decision::kNo);
  EXPECT_EQ(decide(1.0), Decision::kYes);
}

TEST(CeLoss, Examples) {
  const std::vector<double> perfect{1.0 - kProbClamp};
  const std::vector<std::uint8_t> yes{1};
  EXPECT_NEAR(ce_loss(perfect, yes), 0.0, 1e-11);

  const std::vector<double> half{0.5, 0.5};
  const std::vector<std::uint8_t> mixed{1, 0};
  EXPECT_NEAR(ce_loss(half, mixed), 2.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(ce_loss(half, mixed), 1.3863, 1e-4);
}

TEST(CeLoss, ClampKeepsLossFinite) {
  const std::vector<double> probs{0.0, 1.0};
  const std::vector<std::uint8_t> wrong{1, 0};
  const double loss = ce_loss(probs, wrong);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, -2.0 * std::log(kProbClamp), 1e-3);
}

TEST(CeLoss, AdditiveOverConcatenation) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<double> p(30);
  std::vector<std::uint8_t> t(30);
  for (std::size_t i = 0; i < 30; ++i) {
    p[i] = u(rng);
    t[i] = rng() & 1;
  }
  const std::span<const double> ps(p);
  const std::span<const std::uint8_t> ts(t);
  EXPECT_NEAR(ce_loss(ps, ts), ce_loss(ps.first(12), ts.first(12)) + ce_loss(ps.subspan(12), ts.subspan(12)), 1e-12);
}

TEST(CeLoss, LengthMismatch) {
  const std::vector<double> p{0.5};
  const std::vector<std::uint8_t> t{1, 0};
  EXPECT_THROW(ce_loss(p, t), ShapeError);
}

TEST(Backward, OutputBiasGradientIsProbMinusLabel) {
  const auto inst = testing::gradient_instance(4);
  const auto trace = forward(inst.params, inst.delta);
  EXPECT_EQ(backward(inst.params, trace, true).b2, trace.prob - 1.0);
  EXPECT_EQ(backward(inst.params, trace, false).b2, trace.prob);
}

TEST(Backward, StationaryWhenPredictionMatchesLabel) {
  auto params = testing::random_head(4, 3, 2, 0.1);
  params.b2 = 60.0;  // prob clamps to 1 - 1e-12
  const std::vector<double> delta{0.1, 0.2, 0.3, 0.4};
  const auto trace = forward(params, delta);
  EXPECT_EQ(trace.prob, 1.0 - kProbClamp);
  const auto g = backward(params, trace, true);
  EXPECT_NEAR(g.b2, 0.0, 1e-11);
  for (double v : g.w1) EXPECT_NEAR(v, 0.0, 1e-11);
  for (double v : g.w2) EXPECT_NEAR(v, 0.0, 1e-11);
}

TEST(Backward, DeadUnitsHaveZeroGradient) {
  auto params = testing::random_head(3, 2, 8);
  params.b1 = {-100.0, 0.0};
  params.w1 = {1, 1, 1, 0, 0, 0};  // unit 1 pre-activation is exactly 0
  const auto trace = forward(params, std::vector<double>{0.5, 0.5, 0.5});
  const auto g = backward(params, trace, true);
  EXPECT_EQ(g.b1[0], 0.0);
  EXPECT_EQ(g.b1[1], 0.0);
  EXPECT_EQ(g.w2[0], 0.0);
}

TEST(Backward, MatchesCentralFiniteDifferences) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = testing::gradient_instance(seed);
    const auto analytic = backward(inst.params, forward(inst.params, inst.delta), inst.label);
    const auto numeric = testing::finite_difference_gradient(inst.params, inst.delta, inst.label, 1e-6);
    const double err = testing::max_relative_error(analytic, numeric);
    worst = std::max(worst, err);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
  RecordProperty("max_relative_error", std::to_string(worst));
}

TEST(Backward, AccumulateMatchesScaledBackward) {
  const auto inst = testing::gradient_instance(12, 7, 9);
  const auto trace = forward(inst.params, inst.delta);
  auto acc = HeadParameters::zeros(7, 9);
  accumulate_backward(inst.params, trace, inst.label, 0.25, acc);
  accumulate_backward(inst.params, trace, inst.label, 0.75, acc);
  const auto full = backward(inst.params, trace, inst.label);
  for (std::size_t i = 0; i < acc.w1.size(); ++i) EXPECT_NEAR(acc.w1[i], full.w1[i], 1e-15);
  EXPECT_NEAR(acc.b2, full.b2, 1e-15);
}

TEST(Adam, ZeroGradientZeroDecayIsNoop) {
  auto params = testing::random_head(4, 3, 1);
  const auto before = params;
  auto state = AdamState::zeros_like(params);
  adam_step(params, HeadParameters::zeros(4, 3), state, {1e-3, 0.0});
  EXPECT_EQ(params, before);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepClosedForm) {
  auto params = testing::random_head(3, 2, 1);
  const auto before = params;
  auto grads = testing::random_head(3, 2, 2);
  AdamConfig cfg{1e-3, 0.0};
  auto state = AdamState::zeros_like(params);
  adam_step(params, grads, state, cfg);
  // m_hat = g, v_hat = g^2 after one bias-corrected step.
  auto expect = [&](double p0, double g) { return p0 - cfg.lr * g / (std::fabs(g) + cfg.epsilon); };
  for (std::size_t i = 0; i < params.w1.size(); ++i) EXPECT_NEAR(params.w1[i], expect(before.w1[i], grads.w1[i]), 1e-15);
  for (std::size_t i = 0; i < params.b1.size(); ++i) EXPECT_NEAR(params.b1[i], expect(before.b1[i], grads.b1[i]), 1e-15);
  for (std::size_t i = 0; i < params.w2.size(); ++i) EXPECT_NEAR(params.w2[i], expect(before.w2[i], grads.w2[i]), 1e-15);
  EXPECT_NEAR(params.b2, expect(before.b2, grads.b2), 1e-15);
  for (double v : state.second_moment.w1) EXPECT_GE(v, 0.0);
}

TEST(Adam, DecoupledDecayHitsWeightsOnly) {
  auto params = testing::random_head(3, 2, 1);
  const auto before = params;
  auto state = AdamState::zeros_like(params);
  const AdamConfig cfg{1e-2, 0.5};
  adam_step(params, HeadParameters::zeros(3, 2), state, cfg);
  const double shrink = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.w1.size(); ++i) EXPECT_DOUBLE_EQ(params.w1[i], before.w1[i] * shrink);
  for (std::size_t i = 0; i < params.w2.size(); ++i) EXPECT_DOUBLE_EQ(params.w2[i], before.w2[i] * shrink);
  EXPECT_EQ(params.b1, before.b1);
  EXPECT_EQ(params.b2, before.b2);
}

TEST(Adam, ShapeMismatch) {
  auto params = HeadParameters::zeros(3, 2);
  auto state = AdamState::zeros_like(params);
  EXPECT_THROW(adam_step(params, HeadParameters::zeros(2, 2), state, {}), ShapeError);
}

/// Fixed tiny dataset: 20 (delta, label) pairs at d=6.
struct TinyData {
  std::vector<std::vector<double>> deltas;
  std::vector<bool> labels;
};

TinyData tiny_data(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TinyData data;
  for (int i = 0; i < 20; ++i) {
    const bool label = i % 2 == 0;
    std::vector<double> delta(6);
    for (auto& x : delta) x = label ? 0.3 * u(rng) : 0.2 + 0.8 * u(rng);
    data.deltas.push_back(delta);
    data.labels.push_back(label);
  }
  return data;
}

double tiny_loss(const HeadParameters& params, const TinyData& data) {
  double loss = 0.0;
  for (std::size_t i = 0; i < data.deltas.size(); ++i) loss += ce_term(forward(params, data.deltas[i]).prob, data.labels[i]);
  return loss;
}

HeadParameters fit_tiny(const TinyData& data, std::size_t steps) {
  auto params = init_params(6, 5, 3);
  auto state = AdamState::zeros_like(params);
  for (std::size_t s = 0; s < steps; ++s) {
    auto grads = HeadParameters::zeros(6, 5);
    for (std::size_t i = 0; i < data.deltas.size(); ++i) {
      accumulate_backward(params, forward(params, data.deltas[i]), data.labels[i], 1.0 / 20, grads);
    }
    adam_step(params, grads, state, {1e-2, 0.0});
  }
  return params;
}

TEST(Adam, ReducesLossOnTinyDataset) {
  const auto data = tiny_data(21);
  const double initial = tiny_loss(init_params(6, 5, 3), data);
  const double final_loss = tiny_loss(fit_tiny(data, 200), data);
  EXPECT_LE(final_loss, 0.5 * initial) << "initial " << initial << " final " << final_loss;
}

TEST(Adam, Deterministic) {
  const auto data = tiny_data(4);
  EXPECT_EQ(fit_tiny(data, 50), fit_tiny(data, 50));
}

TEST(InitParams, BiasesZeroAndSeeded) {
  const auto a = init_params(10, 7, 5);
  EXPECT_EQ(a.b1, std::vector<double>(7, 0.0));
  EXPECT_EQ(a.b2, 0.0);
  EXPECT_EQ(a, init_params(10, 7, 5));
  EXPECT_FALSE(a == init_params(10, 7, 6));
}

TEST(InitParams, HeScaleAtReferenceShape) {
  const std::size_t d = 1792, h = 4096;
  const auto p = init_params(d, h, 1);
  const double mean = std::accumulate(p.w1.begin(), p.w1.end(), 0.0) / double(p.w1.size());
  double var = 0.0;
  for (double w : p.w1) var += (w - mean) * (w - mean);
  const double sd = std::sqrt(var / double(p.w1.size()));
  const double target = std::sqrt(2.0 / double(d));
  EXPECT_NEAR(sd, target, 0.1 * target);
}

TEST(Checkpoint, RoundTripAndLayout) {
  TempDir dir("ckpt");
  Checkpoint ckpt{testing::random_head(3, 2, 1), 42};
  save_checkpoint(ckpt, dir / "f.mkhd");
  EXPECT_EQ(load_checkpoint(dir / "f.mkhd"), ckpt);
  const auto bytes = testing::read_file(dir / "f.mkhd");
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 4 + 8 * (6 + 2 + 2 + 1) + 8);
  EXPECT_EQ(bytes.substr(0, 4), "MKHD");
  EXPECT_EQ(bytes[8], 3);
  EXPECT_EQ(bytes[12], 2);
  EXPECT_EQ(bytes[bytes.size() - 8], 42);
}

TEST(Checkpoint, RejectsMalformedFiles) {
  TempDir dir("ckpt_bad");
  save_checkpoint({HeadParameters::zeros(3, 2), 0}, dir / "f.mkhd");
  auto bytes = testing::read_file(dir / "f.mkhd");

  std::ofstream(dir / "magic.mkhd", std::ios::binary) << "XKHD" + bytes.substr(4);
  EXPECT_THROW(load_checkpoint(dir / "magic.mkhd"), FormatError);

  std::ofstream(dir / "short.mkhd", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  try {
    load_checkpoint(dir / "short.mkhd");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), bytes.size() - 3);
  }
}

}  // namespace
}  // namespace mkbd

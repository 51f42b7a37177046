/*
 * Copyright 2026 The ESN Toolkit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include "esn/intervene.h"

#include <cmath>
#include <string>
#include <vector>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "esn/error.h"
#include "esn/rng.h"

namespace esn {
namespace {

using ::testing::IsNull;
using ::testing::MockFunction;
using ::testing::NotNull;
using ::testing::Return;

using Vec = std::vector<double>;

NeuronMask Mask(std::map<int, std::vector<int>> layers, std::string emotion = "e") {
  NeuronMask m;
  m.model_id = "m";
  m.emotion = std::move(emotion);
  m.layers = std::move(layers);
  return m;
}

GateBlock Block(Vec& values, int tokens, int width,
                std::span<const std::uint8_t> mask = {}) {
  return GateBlock{values, tokens, width, mask};
}

// w = softmax(q / tau) computed independently in the oracle script.
constexpr double kW0 = 0.7310585786300049;
constexpr double kW1 = 0.2689414213699951;

TEST(AblateTest, Examples) {
  EXPECT_EQ(AblateGate(Vec{2.0, -1.0, 3.0}, 0, Mask({{0, {2}}})), (Vec{2.0, -1.0, 0.0}));
  EXPECT_EQ(AblateGate(Vec{2.0, -1.0, 3.0}, 0, Mask({})), (Vec{2.0, -1.0, 3.0}));
  EXPECT_EQ(AblateGate(Vec{2.0, -1.0, 3.0}, 0, Mask({{0, {0, 1, 2}}})), (Vec{0, 0, 0}));
  // Other layers are untouched.
  EXPECT_EQ(AblateGate(Vec{2.0, -1.0}, 1, Mask({{0, {0}}})), (Vec{2.0, -1.0}));
}

TEST(SteerTest, Examples) {
  EXPECT_EQ(SteerGate(Vec{2.0, -1.0}, 0, Mask({{0, {0}}}), 0.5), (Vec{3.0, -1.0}));
  EXPECT_EQ(SteerGate(Vec{2.0, -1.0}, 0, Mask({{0, {0, 1}}}), 0.0), (Vec{2.0, -1.0}));
  EXPECT_EQ(SteerGate(Vec{2.0, -1.0}, 0, Mask({{0, {1}}}), 1.0), (Vec{2.0, -2.0}));
  try {
    SteerGate(Vec{1.0}, 0, Mask({{0, {0}}}), -0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParameter);
  }
}

TEST(SteerTest, OutOfRangeMaskIsAnError) {
  try {
    SteerGate(Vec{1.0, 2.0}, 0, Mask({{0, {2}}}), 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMaskMismatch);
  }
  EXPECT_THROW(AblateGate(Vec{1.0}, 0, Mask({{0, {-1}}})), Error);
}

TEST(UnionTest, Examples) {
  const std::vector<NeuronMask> two = {Mask({{0, {0}}}, "a"), Mask({{0, {1}}}, "b")};
  EXPECT_EQ(InjectUnion(Vec{1, 1, 1}, 0, two, 1.0), (Vec{2, 2, 1}));
  const std::vector<NeuronMask> same = {Mask({{0, {0}}}, "a"), Mask({{0, {0}}}, "b")};
  EXPECT_EQ(InjectUnion(Vec{1, 1, 1}, 0, same, 1.0), (Vec{2, 1, 1}));
}

TEST(MixTest, WeightsMatchSoftmaxOracle) {
  // q = (2, 1): mask a sits on a neuron with value 2, mask b on one with 1.
  Vec g = {2.0, 1.0};
  const auto block = Block(g, 1, 2);
  const std::vector<NeuronMask> masks = {Mask({{0, {0}}}, "a"), Mask({{0, {1}}}, "b")};
  const auto w = MixWeights(block, 0, masks, 1.0);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_NEAR(w[0], kW0, 1e-12);
  EXPECT_NEAR(w[1], kW1, 1e-12);
  EXPECT_NEAR(w[0], 0.731059, 1e-6);
  EXPECT_NEAR(w[1], 0.268941, 1e-6);
}

TEST(MixTest, InjectMixExample) {
  const std::vector<NeuronMask> masks = {Mask({{0, {0}}}, "a"), Mask({{0, {1}}}, "b")};
  const auto out = InjectMix(Vec{2.0, 1.0}, 0, masks, Vec{kW0, kW1}, 1.0);
  EXPECT_NEAR(out[0], 3.462118, 1e-6);
  EXPECT_NEAR(out[1], 1.268941, 1e-6);
}

TEST(MixTest, OverlapTakesStrongestGain) {
  const std::vector<NeuronMask> masks = {Mask({{0, {0}}}, "a"), Mask({{0, {0}}}, "b")};
  EXPECT_NEAR(InjectMix(Vec{1.0}, 0, masks, Vec{0.7, 0.3}, 1.0)[0], 1.7, 1e-15);
  EXPECT_NEAR(InjectMix(Vec{1.0}, 0, masks, Vec{0.3, 0.7}, 1.0)[0], 1.7, 1e-15);
}

TEST(MixTest, AlphaZeroIsIdentity) {
  const std::vector<NeuronMask> masks = {Mask({{0, {0, 2}}}, "a"), Mask({{0, {1}}}, "b")};
  EXPECT_EQ(InjectMix(Vec{1.5, -2.0, 3.0}, 0, masks, Vec{0.4, 0.6}, 0.0),
            (Vec{1.5, -2.0, 3.0}));
}

TEST(MixTest, SymmetricEvidenceGivesUniformWeights) {
  Vec g = {0.7, 0.7, 0.7, 0.2};
  const std::vector<NeuronMask> masks = {Mask({{0, {0}}}, "a"), Mask({{0, {1}}}, "b"),
                                         Mask({{0, {2}}}, "c")};
  for (double tau : {1e-3, 0.5, 1.0, 100.0}) {
    const auto w = MixWeights(Block(g, 1, 4), 0, masks, tau);
    for (double v : w) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  }
}

TEST(MixTest, TinyTemperatureIsOneHot) {
  Vec g = {0.30, 0.31, 0.29};
  const std::vector<NeuronMask> masks = {Mask({{0, {0}}}, "a"), Mask({{0, {1}}}, "b"),
                                         Mask({{0, {2}}}, "c")};
  const auto w = MixWeights(Block(g, 1, 3), 0, masks, 1e-6);
  EXPECT_NEAR(w[0], 0.0, 1e-9);
  EXPECT_NEAR(w[1], 1.0, 1e-9);
  EXPECT_NEAR(w[2], 0.0, 1e-9);
  EXPECT_THROW(MixWeights(Block(g, 1, 3), 0, masks, 0.0), Error);
}

TEST(MixTest, EvidenceAveragesValidTokensAndNeurons) {
  // Two tokens, the second invalid; mask a covers neurons 0 and 1.
  Vec g = {1.0, 3.0, -4.0, 100.0, 100.0, 100.0};
  const std::vector<std::uint8_t> valid = {1, 0};
  const std::vector<NeuronMask> masks = {Mask({{0, {0, 1}}}, "a"), Mask({{0, {2}}}, "b")};
  const auto w = MixWeights(Block(g, 2, 3, valid), 0, masks, 1.0);
  // q = (2, -4)
  EXPECT_NEAR(w[0], 1.0 / (1.0 + std::exp(-6.0)), 1e-15);
  const auto r = MixWeights(Block(g, 2, 3, valid), 0, masks, 1.0, true);
  // Rectified q = (2, 0)
  EXPECT_NEAR(r[0], 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
}

TEST(MixTest, EmptyLayerMaskHasZeroEvidence) {
  Vec g = {-1.0, 5.0};
  const std::vector<NeuronMask> masks = {Mask({{0, {0}}}, "a"), Mask({{3, {1}}}, "b")};
  const auto w = MixWeights(Block(g, 1, 2), 0, masks, 1.0);
  EXPECT_NEAR(w[1], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

class AlgebraTest : public ::testing::TestWithParam<std::uint64_t> {
 protected:
  Vec RandomGate(Rng& rng, int n) {
    Vec g(n);
    for (auto& v : g) v = rng.Normal() * 2;
    return g;
  }
  NeuronMask RandomMask(Rng& rng, int width, double p, std::string emotion = "e") {
    std::vector<int> idx;
    for (int n = 0; n < width; ++n)
      if (rng.Uniform() < p) idx.push_back(n);
    return Mask({{0, idx}}, std::move(emotion));
  }
};

TEST_P(AlgebraTest, AblateIsIdempotent) {
  Rng rng(GetParam());
  const auto g = RandomGate(rng, 32);
  const auto m = RandomMask(rng, 32, 0.3);
  const auto once = AblateGate(g, 0, m);
  EXPECT_EQ(AblateGate(once, 0, m), once);
}

TEST_P(AlgebraTest, SteerZeroIsIdentity) {
  Rng rng(GetParam());
  const auto g = RandomGate(rng, 32);
  EXPECT_EQ(SteerGate(g, 0, RandomMask(rng, 32, 0.5), 0.0), g);
}

TEST_P(AlgebraTest, SteerComposesMultiplicatively) {
  Rng rng(GetParam());
  const auto g = RandomGate(rng, 32);
  const auto m = RandomMask(rng, 32, 0.4);
  const double a = rng.Uniform(), b = 2 * rng.Uniform();
  const auto twice = SteerGate(SteerGate(g, 0, m, a), 0, m, b);
  for (int n = 0; n < 32; ++n) {
    const double want = m.Contains(0, n) ? g[n] * (1 + a) * (1 + b) : g[n];
    EXPECT_NEAR(twice[n], want, 1e-12 * std::abs(want));
  }
}

TEST_P(AlgebraTest, DisjointSteersCommuteAndEqualUnion) {
  Rng rng(GetParam());
  const auto g = RandomGate(rng, 32);
  auto a = RandomMask(rng, 32, 0.3, "a");
  std::vector<int> rest;
  for (int n = 0; n < 32; ++n)
    if (!a.Contains(0, n) && rng.Uniform() < 0.5) rest.push_back(n);
  const auto b = Mask({{0, rest}}, "b");
  const double alpha = rng.Uniform();
  const auto ab = SteerGate(SteerGate(g, 0, a, alpha), 0, b, alpha);
  const auto ba = SteerGate(SteerGate(g, 0, b, alpha), 0, a, alpha);
  const std::vector<NeuronMask> both = {a, b};
  EXPECT_EQ(ab, ba);
  EXPECT_EQ(ab, InjectUnion(g, 0, both, alpha));
}

TEST_P(AlgebraTest, UnionOfSingletonIsSteer) {
  Rng rng(GetParam());
  const auto g = RandomGate(rng, 32);
  const std::vector<NeuronMask> one = {RandomMask(rng, 32, 0.3)};
  const double alpha = rng.Uniform();
  EXPECT_EQ(InjectUnion(g, 0, one, alpha), SteerGate(g, 0, one[0], alpha));
}

TEST_P(AlgebraTest, OneHotMixIsTargetedSteer) {
  Rng rng(GetParam());
  const auto g = RandomGate(rng, 32);
  const std::vector<NeuronMask> masks = {RandomMask(rng, 32, 0.2, "a"),
                                         RandomMask(rng, 32, 0.2, "b"),
                                         RandomMask(rng, 32, 0.2, "c")};
  const double alpha = 0.5;
  for (int k = 0; k < 3; ++k) {
    Vec w(3, 0.0);
    w[k] = 1.0;
    const auto mixed = InjectMix(g, 0, masks, w, alpha);
    const auto steered = SteerGate(g, 0, masks[k], alpha);
    for (int n = 0; n < 32; ++n) {
      // Coordinates outside mask k keep factor max(1, ...) = 1.
      EXPECT_EQ(mixed[n], steered[n]);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, AlgebraTest, ::testing::Range<std::uint64_t>(1, 21));

TEST(HookTest, SteerHookScalesEveryToken) {
  InterventionSpec spec;
  spec.mode = InterventionMode::kSteer;
  spec.alpha = 1.0;
  spec.masks = {Mask({{1, {0}}})};
  const auto hook = MakeGateHook(spec);
  Vec g = {1.0, 2.0, 3.0, 4.0};
  auto block = Block(g, 2, 2);
  hook(0, block);
  EXPECT_EQ(g, (Vec{1.0, 2.0, 3.0, 4.0}));
  hook(1, block);
  EXPECT_EQ(g, (Vec{2.0, 2.0, 6.0, 4.0}));
}

TEST(HookTest, MixHookLeavesUncoveredLayers) {
  InterventionSpec spec;
  spec.mode = InterventionMode::kInjectMix;
  spec.alpha = 1.0;
  spec.tau = 1.0;
  spec.masks = {Mask({{0, {0}}}, "a"), Mask({{0, {1}}}, "b")};
  const auto hook = MakeGateHook(spec);
  Vec g = {2.0, 1.0};
  auto block = Block(g, 1, 2);
  hook(1, block);
  EXPECT_EQ(g, (Vec{2.0, 1.0}));
  hook(0, block);
  EXPECT_NEAR(g[0], 3.462118, 1e-6);
  EXPECT_NEAR(g[1], 1.268941, 1e-6);
}

TEST(HookTest, TwoPassHasNoSingleHook) {
  InterventionSpec spec;
  spec.mode = InterventionMode::kInject2Pass;
  spec.masks = {Mask({})};
  EXPECT_THROW(MakeGateHook(spec), Error);
}

TEST(InterventionSpecTest, Validate) {
  const std::vector<int> widths = {4, 4};
  InterventionSpec spec;
  spec.mode = InterventionMode::kSteer;
  spec.alpha = 0.3;
  spec.masks = {Mask({{1, {3}}})};
  EXPECT_NO_THROW(spec.Validate(widths));
  spec.masks = {Mask({{2, {0}}})};
  EXPECT_THROW(spec.Validate(widths), Error);
  spec.masks = {Mask({{0, {0}}}), Mask({{0, {1}}})};
  EXPECT_THROW(spec.Validate(widths), Error);
  spec.mode = InterventionMode::kInjectUnion;
  EXPECT_NO_THROW(spec.Validate(widths));
  spec.masks[1].model_id = "other";
  EXPECT_THROW(spec.Validate(widths), Error);
  spec.masks[1].model_id = "m";
  spec.alpha = -1.0;
  EXPECT_THROW(spec.Validate(widths), Error);
  spec.alpha = 0.5;
  spec.mode = InterventionMode::kInjectMix;
  spec.tau = 0.0;
  EXPECT_THROW(spec.Validate(widths), Error);
}

TEST(ModeTest, Names) {
  for (auto m : {InterventionMode::kAblate, InterventionMode::kSteer,
                 InterventionMode::kInject2Pass, InterventionMode::kInjectMix,
                 InterventionMode::kInjectUnion}) {
    EXPECT_EQ(ParseMode(ModeName(m)), m);
  }
  EXPECT_EQ(ParseMode("2pass"), InterventionMode::kInject2Pass);
  EXPECT_EQ(ParseMode("mix"), InterventionMode::kInjectMix);
  EXPECT_THROW(ParseMode("boost"), Error);
  EXPECT_TRUE(IsInjection(InterventionMode::kInjectUnion));
  EXPECT_FALSE(IsInjection(InterventionMode::kSteer));
}

class TwoPassTest : public ::testing::Test {
 protected:
  std::vector<NeuronMask> masks = {Mask({{0, {0}}}, "a"), Mask({{0, {1}}}, "b")};
  AnswerDecoder decode = [](const std::string& s) -> std::optional<int> {
    if (s == "a") return 0;
    if (s == "b") return 1;
    return std::nullopt;
  };
};

TEST_F(TwoPassTest, SecondPassSteersPredictedEmotion) {
  // The forward "model" reports which neurons its hook scaled.
  const HookedForward forward = [](const GateHook* hook) -> std::string {
    if (!hook) return "b";
    Vec g = {1.0, 1.0};
    GateBlock block{g, 1, 2, {}};
    (*hook)(0, block);
    return g[1] == 1.5 && g[0] == 1.0 ? "steered-b" : "wrong";
  };
  const auto r = Run2Pass(forward, decode, masks, 0.5);
  EXPECT_EQ(r.first_answer, "b");
  EXPECT_EQ(r.first_emotion, 1);
  EXPECT_EQ(r.answer, "steered-b");
  EXPECT_FALSE(r.invalid_first_pass);
}

TEST_F(TwoPassTest, InvalidFirstPassRunsUnintervened) {
  MockFunction<std::string(const GateHook*)> forward;
  EXPECT_CALL(forward, Call(IsNull())).WillOnce(Return("??")).WillOnce(Return("a"));
  EXPECT_CALL(forward, Call(NotNull())).Times(0);
  const auto r = Run2Pass(forward.AsStdFunction(), decode, masks, 0.5);
  EXPECT_TRUE(r.invalid_first_pass);
  EXPECT_FALSE(r.first_emotion.has_value());
  EXPECT_EQ(r.answer, "a");
}

TEST_F(TwoPassTest, AlphaZeroKeepsFirstPrediction) {
  const HookedForward forward = [](const GateHook* hook) -> std::string {
    Vec g = {0.2, 0.9};
    GateBlock block{g, 1, 2, {}};
    if (hook) (*hook)(0, block);
    return g[1] > g[0] ? "b" : "a";
  };
  const auto r = Run2Pass(forward, decode, masks, 0.0);
  EXPECT_EQ(r.answer, r.first_answer);
}

}  // namespace
}  // namespace esn

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


#include "esn/selectors.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "esn/error.h"
#include "esn/rng.h"
#include "test_util.h"

namespace esn {
namespace {

using testing::SmallHeader;

constexpr double kInf = std::numeric_limits<double>::infinity();

Profiles MakeProfiles(std::vector<int> widths, int emotions,
                      const std::vector<double>& p,
                      const std::vector<double>& m = {}) {
  Profiles out;
  std::vector<std::string> vocab;
  for (int e = 0; e < emotions; ++e) vocab.push_back("e" + std::to_string(e));
  out.header = SmallHeader(widths, vocab);
  out.layout = NeuronLayout(widths, emotions);
  out.frequency = p;
  out.magnitude = m.empty() ? p : m;
  out.observed.assign(emotions, true);
  out.pool_sizes.assign(emotions, 10);
  return out;
}

// Single neuron over |E| emotions.
Profiles Neuron(const std::vector<double>& p, const std::vector<double>& m = {}) {
  return MakeProfiles({1}, static_cast<int>(p.size()), p, m);
}

// Frozen output of tests/oracles/selectors_oracle.py.
const nlohmann::json& Oracle() {
  static const nlohmann::json j = [] {
    std::ifstream in(std::string(ESN_TEST_DATA_DIR) + "/selector_oracle.json");
    return nlohmann::json::parse(in);
  }();
  return j;
}

Profiles OracleProfiles() {
  const auto& j = Oracle();
  const int layers = j["layers"], width = j["width"], emotions = j["emotions"];
  std::vector<double> p, m;
  for (int l = 0; l < layers; ++l) {
    for (int n = 0; n < width; ++n) {
      for (int e = 0; e < emotions; ++e) {
        const double t = j["valid_tokens"][e];
        // Recomputed from raw counts so the profiles path is exercised too.
        p.push_back(j["positive_count"][l][n][e].get<double>() / t);
        m.push_back(j["positive_mass"][l][n][e].get<double>() / t);
      }
    }
  }
  return MakeProfiles(std::vector<int>(layers, width), emotions, p, m);
}

TEST(SelectorOracleTest, ProfilesMatchOracle) {
  const auto p = OracleProfiles();
  const auto& j = Oracle();
  for (int l = 0; l < 2; ++l)
    for (int n = 0; n < 8; ++n)
      for (int e = 0; e < 3; ++e) {
        EXPECT_NEAR(p.p(l, n, e), j["frequency"][l][n][e].get<double>(), 1e-15);
        EXPECT_NEAR(p.m(l, n, e), j["magnitude"][l][n][e].get<double>(), 1e-12);
      }
}

TEST(SelectorOracleTest, ScoresMatchBruteForce) {
  const auto profiles = OracleProfiles();
  for (SelectorMethod method : {SelectorMethod::kLap, SelectorMethod::kLape,
                                SelectorMethod::kMad, SelectorMethod::kCas}) {
    const auto table = ScoreNeurons(method, profiles);
    const auto& want = Oracle()["scores"][std::string(MethodName(method))];
    for (int l = 0; l < 2; ++l)
      for (int n = 0; n < 8; ++n)
        for (int e = 0; e < 3; ++e) {
          const auto& w = want[l][n][e];
          const double got = table.score(l, n, e);
          SCOPED_TRACE(std::string(MethodName(method)) + " " + std::to_string(l) +
                       "/" + std::to_string(n) + "/" + std::to_string(e));
          if (w.is_null()) {
            EXPECT_EQ(got, -kInf);
          } else {
            const double v = w.get<double>();
            EXPECT_LE(std::abs(got - v), 1e-9 * std::max(1.0, std::abs(v)));
          }
        }
  }
}

TEST(SelectorOracleTest, RankingsMatchBruteForce) {
  const auto profiles = OracleProfiles();
  const auto& selections = Oracle()["selections"];
  for (SelectorMethod method : {SelectorMethod::kLap, SelectorMethod::kLape,
                                SelectorMethod::kMad, SelectorMethod::kCas}) {
    const auto table = ScoreNeurons(method, profiles);
    for (int e = 0; e < 3; ++e) {
      for (const auto& r : Oracle()["ratios"]) {
        const double ratio = r.get<double>();
        std::ostringstream key;
        key << MethodName(method) << "/" << e << "/"
            << nlohmann::json(ratio).dump();
        ASSERT_TRUE(selections.contains(key.str())) << key.str();
        const auto& want = selections[key.str()];
        SCOPED_TRACE(key.str());
        if (want.is_string()) {
          try {
            SelectTop(table, e, ratio);
            FAIL() << "expected shortfall";
          } catch (const Error& err) {
            EXPECT_EQ(err.kind(), ErrorKind::kShortfall);
          }
          continue;
        }
        const auto mask = SelectTop(table, e, ratio);
        EXPECT_EQ(mask.size(), want.size());
        for (const auto& ln : want) EXPECT_TRUE(mask.Contains(ln[0], ln[1]));
      }
    }
  }
}

TEST(SelectorTest, LapIsFrequency) {
  EXPECT_DOUBLE_EQ(ScoreLap(Neuron({0.5, 0.1})).score(0, 0, 0), 0.5);
  const auto zero = ScoreLap(MakeProfiles({3}, 2, std::vector<double>(6, 0.0)));
  for (double s : zero.scores) EXPECT_EQ(s, 0.0);

  Rng rng(3);
  std::vector<double> p(4 * 5 * 3);
  for (auto& v : p) v = rng.Uniform();
  const auto profiles = MakeProfiles({4, 5}, 3, std::vector<double>(p.begin(), p.begin() + 27));
  const auto table = ScoreLap(profiles);
  EXPECT_EQ(table.scores, profiles.frequency);
}

TEST(SelectorTest, LapeExamples) {
  const auto uniform = Neuron({0.2, 0.2});
  EXPECT_NEAR(FiringEntropy(uniform, 0, 0), 0.693147, 1e-6);
  EXPECT_NEAR(ScoreLape(uniform).score(0, 0, 0), -std::log(2.0), 1e-15);
  EXPECT_EQ(ScoreLape(uniform).score(0, 0, 1), -kInf);

  const auto onehot = ScoreLape(Neuron({0.4, 0.0}));
  EXPECT_EQ(onehot.score(0, 0, 0), 0.0);
  EXPECT_EQ(onehot.score(0, 0, 1), -kInf);

  const auto dead = ScoreLape(Neuron({0.0, 0.0, 0.0}));
  EXPECT_TRUE(dead.is_dead(0, 0));
  EXPECT_TRUE(std::isnan(FiringEntropy(Neuron({0.0, 0.0}), 0, 0)));
}

TEST(SelectorTest, MadExamples) {
  const auto t = ScoreMad(Neuron({0.1, 0.1, 0.1}, {1.0, 0.4, 0.2}));
  EXPECT_NEAR(t.score(0, 0, 0), 0.7, 1e-15);
  const auto same = ScoreMad(Neuron({0.1, 0.1, 0.1}, {0.3, 0.3, 0.3}));
  for (int e = 0; e < 3; ++e) EXPECT_EQ(same.score(0, 0, e), 0.0);
  const auto anti = ScoreMad(Neuron({0.1, 0.1}, {0.0, 1.0}));
  EXPECT_EQ(anti.score(0, 0, 0), -1.0);
  EXPECT_EQ(anti.score(0, 0, 1), 1.0);
}

TEST(SelectorTest, CasExamples) {
  const auto t = ScoreCas(Neuron({0.8, 0.5, 0.1}));
  EXPECT_NEAR(t.score(0, 0, 0), 0.3, 1e-15);
  EXPECT_EQ(t.score(0, 0, 1), -kInf);
  EXPECT_EQ(t.score(0, 0, 2), -kInf);

  const auto tie = ScoreCas(Neuron({0.5, 0.5, 0.1}));
  EXPECT_EQ(tie.score(0, 0, 0), 0.0);
  EXPECT_EQ(tie.score(0, 0, 1), -kInf);

  const auto dead = ScoreCas(Neuron({0.0, 0.0, 0.0}));
  EXPECT_TRUE(dead.is_dead(0, 0));
  EXPECT_THROW(SelectTop(dead, 0, 1.0), Error);
}

TEST(SelectorTest, BudgetRounding) {
  EXPECT_EQ(SelectionBudget(0.005, 1000), 5u);
  EXPECT_EQ(SelectionBudget(0.005, 1536), 8u);  // 7.68
  EXPECT_EQ(SelectionBudget(0.0025, 1000), 3u);  // 2.5 rounds up
  EXPECT_EQ(SelectionBudget(1.0, 17), 17u);
  for (double r : {0.0, -0.1, 1.5, 0.0004}) {
    try {
      SelectionBudget(r, 1000);
      FAIL() << r;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kParameter);
    }
  }
}

TEST(SelectorTest, TieBreaksOnLayerThenNeuron) {
  // Neurons (0,3) and (1,0) tie at the cutoff; (0,3) wins.
  std::vector<double> p(2 * 4 * 2, 0.1);
  auto set = [&](int l, int n, double v) { p[(l * 4 + n) * 2] = v; };
  set(1, 0, 0.5);
  set(0, 3, 0.5);
  set(1, 2, 0.9);
  const auto table = ScoreLap(MakeProfiles({4, 4}, 2, p));
  const auto mask = SelectTop(table, 0, 2.0 / 8);
  EXPECT_TRUE(mask.Contains(1, 2));
  EXPECT_TRUE(mask.Contains(0, 3));
  EXPECT_FALSE(mask.Contains(1, 0));
}

TEST(SelectorTest, UnobservedEmotionIsRefused) {
  auto profiles = Neuron({0.4, 0.0, 0.2});
  profiles.observed[1] = false;
  const auto table = ScoreLap(profiles);
  EXPECT_EQ(table.score(0, 0, 1), -kInf);
  try {
    SelectTop(table, 1, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPrecondition);
  }
}

TEST(SelectorTest, MadIgnoresUnobservedEmotions) {
  auto profiles = Neuron({0.1, 0.1, 0.0}, {1.0, 0.4, 0.0});
  profiles.observed[2] = false;
  const auto t = ScoreMad(profiles);
  EXPECT_NEAR(t.score(0, 0, 0), 0.6, 1e-15);
  EXPECT_EQ(t.score(0, 0, 2), -kInf);
}

TEST(SelectorTest, ContrastNeedsTwoEmotions) {
  auto profiles = Neuron({0.1, 0.2});
  profiles.observed[1] = false;
  EXPECT_THROW(ScoreCas(profiles), Error);
  EXPECT_NO_THROW(ScoreLap(profiles));
}

TEST(SelectorTest, RndIsDeterministic) {
  const auto h = SmallHeader({100, 50}, {"a", "b"});
  const auto a = SelectRandom(h, 0.1, 42);
  EXPECT_EQ(a, SelectRandom(h, 0.1, 42));
  EXPECT_EQ(a.size(), 15u);
  EXPECT_NE(a, SelectRandom(h, 0.1, 43));
  EXPECT_EQ(a.seed, 42u);
  EXPECT_EQ(SelectRandom(h, 1.0, 7).size(), 150u);
  EXPECT_EQ(SelectRandom(h, 1.0, 7).layers, SelectRandom(h, 1.0, 8).layers);
}

TEST(SelectorTest, FiveRndSeedsGiveDistinctMasks) {
  const auto h = SmallHeader({256, 256, 256}, {"a", "b"});
  std::set<std::map<int, std::vector<int>>> seen;
  for (std::uint64_t s = 0; s < 5; ++s) seen.insert(SelectRandom(h, 0.005, s).layers);
  EXPECT_EQ(seen.size(), 5u);
}

class SelectorPropertyTest : public ::testing::TestWithParam<std::uint64_t> {
 protected:
  Profiles RandomProfiles(int emotions = 4) {
    Rng rng(GetParam());
    const std::vector<int> widths = {12, 7, 9};
    std::vector<double> p, m;
    for (int i = 0; i < 28 * emotions; ++i) {
      const double u = rng.Uniform();
      p.push_back(u < 0.1 ? 0.0 : std::round(rng.Uniform() * 20) / 20);
      m.push_back(p.back() * (0.5 + rng.Uniform()));
    }
    // One dead neuron.
    for (int e = 0; e < emotions; ++e) p[5 * emotions + e] = m[5 * emotions + e] = 0;
    return MakeProfiles(widths, emotions, p, m);
  }
};

TEST_P(SelectorPropertyTest, LapeEntropyBound) {
  const auto profiles = RandomProfiles();
  for (int l = 0; l < 3; ++l) {
    for (int n = 0; n < profiles.layout.width(l); ++n) {
      const double h = FiringEntropy(profiles, l, n);
      if (std::isnan(h)) continue;
      EXPECT_GE(h, 0.0);
      EXPECT_LE(h, std::log(4.0) + 1e-12);
    }
  }
  const auto uniform = Neuron({0.3, 0.3, 0.3, 0.3});
  EXPECT_NEAR(FiringEntropy(uniform, 0, 0), std::log(4.0), 1e-12);
}

TEST_P(SelectorPropertyTest, CasSingleAssignment) {
  const auto profiles = RandomProfiles();
  const auto table = ScoreCas(profiles);
  for (std::size_t flat = 0; flat < profiles.layout.num_neurons(); ++flat) {
    int finite = 0;
    for (int e = 0; e < 4; ++e) finite += std::isfinite(table.scores[flat * 4 + e]);
    EXPECT_EQ(finite, table.dead[flat] ? 0 : 1);
  }
}

TEST_P(SelectorPropertyTest, SelectionIsNested) {
  const auto profiles = RandomProfiles();
  for (SelectorMethod method : {SelectorMethod::kLap, SelectorMethod::kMad}) {
    const auto table = ScoreNeurons(method, profiles);
    for (int e = 0; e < 4; ++e) {
      NeuronMask prev;
      for (double r : {0.04, 0.1, 0.2, 0.35}) {
        const auto mask = SelectTop(table, e, r);
        for (const auto& [l, idx] : prev.layers)
          for (int n : idx) EXPECT_TRUE(mask.Contains(l, n));
        prev = mask;
      }
    }
  }
}

TEST_P(SelectorPropertyTest, DeadNeuronsNeverSelected) {
  const auto profiles = RandomProfiles();
  for (SelectorMethod method : {SelectorMethod::kLap, SelectorMethod::kMad}) {
    const auto table = ScoreNeurons(method, profiles);
    EXPECT_TRUE(table.is_dead(0, 5));
    for (int e = 0; e < 4; ++e) EXPECT_FALSE(SelectTop(table, e, 0.5).Contains(0, 5));
  }
}

TEST_P(SelectorPropertyTest, MadScalesLinearly) {
  const auto profiles = RandomProfiles();
  auto scaled = profiles;
  for (auto& v : scaled.magnitude) v *= 3.5;
  const auto a = ScoreMad(profiles);
  const auto b = ScoreMad(scaled);
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    EXPECT_NEAR(b.scores[i], 3.5 * a.scores[i], 1e-12);
  }
  for (int e = 0; e < 4; ++e) EXPECT_EQ(SelectTop(a, e, 0.25), SelectTop(b, e, 0.25));
}

TEST_P(SelectorPropertyTest, FrequencyMethodsIgnoreMagnitude) {
  const auto profiles = RandomProfiles();
  auto rescaled = profiles;
  Rng rng(GetParam() + 100);
  for (auto& v : rescaled.magnitude) v *= 0.1 + 10 * rng.Uniform();
  for (SelectorMethod method : {SelectorMethod::kLap, SelectorMethod::kLape,
                                SelectorMethod::kCas}) {
    EXPECT_EQ(ScoreNeurons(method, profiles).scores,
              ScoreNeurons(method, rescaled).scores);
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, SelectorPropertyTest, ::testing::Range<std::uint64_t>(1, 11));

}  // namespace
}  // namespace esn

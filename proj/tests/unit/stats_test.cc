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


#include "esn/stats.h"

#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "esn/error.h"
#include "esn/rng.h"
#include "test_util.h"

namespace esn {
namespace {

using testing::RandomExamples;
using testing::SmallHeader;

ExampleTrace OneNeuron(std::vector<float> a, std::vector<std::uint8_t> mask, int emotion) {
  ExampleTrace ex;
  ex.emotion_id = emotion;
  ex.token_mask = std::move(mask);
  ex.gates = {std::move(a)};
  return ex;
}

// Straight-line reference: one pass over every cell, no shared helpers.
struct Reference {
  std::vector<std::uint64_t> k;
  std::vector<double> s;
  std::vector<std::uint64_t> t;
};

Reference ReferenceCounts(const TraceHeader& h, const std::vector<ExampleTrace>& xs) {
  const int e_count = h.num_emotions();
  std::size_t neurons = 0;
  for (int d : h.gate_widths) neurons += d;
  Reference r{std::vector<std::uint64_t>(neurons * e_count),
              std::vector<double>(neurons * e_count),
              std::vector<std::uint64_t>(e_count)};
  for (const auto& x : xs) {
    std::size_t base = 0;
    for (int l = 0; l < h.num_layers(); ++l) {
      const int d = h.gate_widths[l];
      for (int n = 0; n < d; ++n) {
        for (int t = 0; t < x.num_tokens(); ++t) {
          if (!x.token_mask[t]) continue;
          const double a = x.gates[l][t * d + n];
          if (a > 0) {
            r.k[(base + n) * e_count + x.emotion_id] += 1;
            r.s[(base + n) * e_count + x.emotion_id] += a;
          }
        }
      }
      base += d;
    }
    for (auto m : x.token_mask) r.t[x.emotion_id] += m;
  }
  return r;
}

EmotionCounters Accumulate(const TraceHeader& h, const std::vector<ExampleTrace>& xs,
                           std::size_t begin, std::size_t end) {
  EmotionCounters c(h);
  for (std::size_t i = begin; i < end; ++i) c.Accumulate(xs[i]);
  return c;
}

TEST(StatsTest, ValidPositionsOnly) {
  EmotionCounters c(SmallHeader({1}));
  c.Accumulate(OneNeuron({0.5f, -1.0f, 2.0f}, {1, 1, 0}, 1));
  EXPECT_EQ(c.positive_count(0, 0, 1), 1u);
  EXPECT_DOUBLE_EQ(c.positive_mass(0, 0, 1), 0.5);
  EXPECT_EQ(c.valid_tokens(1), 2u);
  EXPECT_EQ(c.valid_tokens(0), 0u);
  EXPECT_EQ(c.examples(1), 1u);
}

TEST(StatsTest, NonPositiveActivationsCountNothing) {
  EmotionCounters c(SmallHeader({1}));
  c.Accumulate(OneNeuron({-0.5f, 0.0f, -2.0f, -0.0f}, {1, 1, 1, 1}, 0));
  EXPECT_EQ(c.positive_count(0, 0, 0), 0u);
  EXPECT_EQ(c.positive_mass(0, 0, 0), 0.0);
  EXPECT_EQ(c.valid_tokens(0), 4u);
}

TEST(StatsTest, TokensCountedOncePerExample) {
  EmotionCounters c(SmallHeader({2, 3, 4}));
  ExampleTrace ex;
  ex.token_mask = {1, 1, 0};
  ex.gates = {std::vector<float>(6, 1.0f), std::vector<float>(9, 1.0f),
              std::vector<float>(12, 1.0f)};
  c.Accumulate(ex);
  EXPECT_EQ(c.valid_tokens(0), 2u);
  const Profiles p = FinalizeProfiles(c);
  EXPECT_DOUBLE_EQ(p.p(2, 3, 0), 1.0);
}

TEST(StatsTest, OutOfVocabLabel) {
  EmotionCounters c(SmallHeader({1}));
  try {
    c.Accumulate(OneNeuron({1.0f}, {1}, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLabel);
  }
}

TEST(StatsTest, ShapeMismatchIsFormatError) {
  EmotionCounters c(SmallHeader({2}));
  EXPECT_THROW(c.Accumulate(OneNeuron({1.0f}, {1}, 0)), FormatError);
}

TEST(StatsTest, MatchesReferenceAccumulation) {
  const auto h = SmallHeader({4, 3}, {"a", "b", "c"});
  const auto xs = RandomExamples(h, 40, 99);
  const auto c = Accumulate(h, xs, 0, xs.size());
  const auto r = ReferenceCounts(h, xs);
  EXPECT_EQ(c.positive_counts(), r.k);
  EXPECT_EQ(c.valid_token_counts(), r.t);
  ASSERT_EQ(c.positive_masses().size(), r.s.size());
  for (std::size_t i = 0; i < r.s.size(); ++i) {
    EXPECT_NEAR(c.positive_masses()[i], r.s[i], 1e-12 * std::max(1.0, r.s[i]));
  }
}

TEST(StatsTest, ShardedMergeEqualsSinglePass) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const auto h = SmallHeader({6, 5}, {"a", "b", "c", "d"});
    const auto xs = RandomExamples(h, 20, seed);
    const auto whole = Accumulate(h, xs, 0, 20);
    const auto merged = Merge(Accumulate(h, xs, 0, 10), Accumulate(h, xs, 10, 20));
    EXPECT_EQ(merged.positive_counts(), whole.positive_counts());
    EXPECT_EQ(merged.valid_token_counts(), whole.valid_token_counts());
    EXPECT_EQ(merged.example_counts(), whole.example_counts());
    for (std::size_t i = 0; i < whole.positive_masses().size(); ++i) {
      const double a = whole.positive_masses()[i];
      EXPECT_LE(std::abs(merged.positive_masses()[i] - a), 1e-12 * std::abs(a));
    }
  }
}

TEST(StatsTest, MergeIsACommutativeMonoid) {
  const auto h = SmallHeader({3, 3}, {"a", "b", "c"});
  const auto xs = RandomExamples(h, 30, 5);
  const auto a = Accumulate(h, xs, 0, 7);
  const auto b = Accumulate(h, xs, 7, 19);
  const auto c = Accumulate(h, xs, 19, 30);
  const EmotionCounters zero(h);
  EXPECT_EQ(Merge(a, zero), a);
  EXPECT_EQ(Merge(zero, a), a);
  EXPECT_EQ(Merge(a, b), Merge(b, a));
  const auto left = Merge(Merge(a, b), c);
  const auto right = Merge(a, Merge(b, c));
  EXPECT_EQ(left.positive_counts(), right.positive_counts());
  EXPECT_EQ(left.valid_token_counts(), right.valid_token_counts());
  for (std::size_t i = 0; i < left.positive_masses().size(); ++i) {
    const double v = left.positive_masses()[i];
    EXPECT_LE(std::abs(right.positive_masses()[i] - v), 1e-12 * std::abs(v));
  }
}

TEST(StatsTest, MergeRejectsIncompatibleHeaders) {
  const EmotionCounters a(SmallHeader({2}));
  const EmotionCounters b(SmallHeader({3}));
  auto other = SmallHeader({2});
  other.model_id = "other";
  const EmotionCounters c(other);
  auto later = SmallHeader({2});
  later.created_at = "2027-01-01T00:00:00Z";
  const EmotionCounters d(later);
  for (const auto* bad : {&b, &c}) {
    try {
      Merge(a, *bad);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kIncompatible);
    }
  }
  EXPECT_NO_THROW(Merge(a, d));
}

TEST(StatsTest, ProfilesFromCounts) {
  EmotionCounters c(SmallHeader({1}, {"a", "b", "c"}));
  for (int i = 0; i < 100; ++i) {
    c.Accumulate(OneNeuron({i < 50 ? 1.0f : -1.0f}, {1}, 0));
  }
  c.Accumulate(OneNeuron({3.0f, 3.0f, 3.0f, 3.0f}, {1, 1, 1, 1}, 1));
  const Profiles p = FinalizeProfiles(c);
  EXPECT_DOUBLE_EQ(p.p(0, 0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p.m(0, 0, 1), 3.0);
  EXPECT_EQ(p.p(0, 0, 2), 0.0);
  EXPECT_EQ(p.m(0, 0, 2), 0.0);
  EXPECT_TRUE(p.observed[0]);
  EXPECT_TRUE(p.observed[1]);
  EXPECT_FALSE(p.observed[2]);
  EXPECT_EQ(p.num_observed(), 2);
  EXPECT_EQ(p.pool_sizes, (std::vector<std::uint64_t>{100, 1, 0}));
}

TEST(StatsTest, FrequencyIsAProbability) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto h = SmallHeader({8, 8}, {"a", "b", "c"});
    const auto p = FinalizeProfiles(Accumulate(h, RandomExamples(h, 20, seed), 0, 20));
    for (double v : p.frequency) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (double v : p.magnitude) EXPECT_GE(v, 0.0);
  }
}

TEST(StatsTest, StatsFileRoundTrip) {
  const auto h = SmallHeader({5, 2}, {"a", "b", "c"});
  const auto c = Accumulate(h, RandomExamples(h, 15, 8), 0, 15);
  std::stringstream buf;
  WriteStats(c, buf);
  EXPECT_EQ(buf.str().substr(0, 4), "ESNS");
  EXPECT_EQ(ReadStats(buf), c);

  testing::TempDir dir;
  WriteStatsFile(c, dir / "s.esns");
  EXPECT_EQ(ReadStatsFile(dir / "s.esns"), c);
}

TEST(StatsTest, StatsReaderRejectsCorruption) {
  const auto h = SmallHeader({2});
  std::stringstream buf;
  WriteStats(EmotionCounters(h), buf);
  std::string bytes = buf.str();
  std::string bad_magic = bytes;
  bad_magic[1] = 'X';
  std::istringstream a(bad_magic);
  EXPECT_THROW(ReadStats(a), FormatError);
  std::istringstream b(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(ReadStats(b), FormatError);
}

TEST(StatsTest, AccumulateTraceStream) {
  const auto h = SmallHeader({3}, {"a", "b"});
  const auto xs = RandomExamples(h, 9, 2);
  std::stringstream buf;
  WriteTrace(h, xs, buf);
  TraceReader reader(buf);
  EXPECT_EQ(AccumulateTrace(reader), Accumulate(h, xs, 0, xs.size()));
}

}  // namespace
}  // namespace esn

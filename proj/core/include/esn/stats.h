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

#ifndef ESN_STATS_H_
#define ESN_STATS_H_

// Streaming emotion-conditioned activation statistics.
//
// For every valid token position of an example labelled e, and every gate
// unit (l, n):
//   K[l][n][e] += 1 if a > 0        (positive-activation count)
//   S[l][n][e] += max(a, 0)         (summed positive mass)
// and once per example T[e] += number of valid positions. Profiles are
// P = K / T_e (firing frequency) and M = S / T_e (mean positive magnitude).
//
// STATS-v1 layout (little-endian):
//   "ESNS" | u32 version=1 | u32 header_len | header JSON
//   | K: u64[L*D*E] | S: f64[L*D*E] | T: u64[E]
// Arrays are in (layer, neuron, emotion) order. The header JSON is the
// trace header plus "example_counts" (examples per emotion).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "esn/layout.h"
#include "esn/trace.h"

namespace esn {

inline constexpr std::uint32_t kStatsFormatVersion = 1;

class EmotionCounters {
 public:
  explicit EmotionCounters(TraceHeader header);

  const TraceHeader& header() const { return header_; }
  const NeuronLayout& layout() const { return layout_; }

  std::uint64_t positive_count(int layer, int n, int e) const {
    return positive_count_[layout_.cell(layer, n, e)];
  }
  double positive_mass(int layer, int n, int e) const {
    return positive_mass_[layout_.cell(layer, n, e)];
  }
  std::uint64_t valid_tokens(int e) const { return valid_tokens_[e]; }
  std::uint64_t examples(int e) const { return examples_[e]; }

  const std::vector<std::uint64_t>& positive_counts() const { return positive_count_; }
  const std::vector<double>& positive_masses() const { return positive_mass_; }
  const std::vector<std::uint64_t>& valid_token_counts() const { return valid_tokens_; }
  const std::vector<std::uint64_t>& example_counts() const { return examples_; }

  // Adds one example. Throws Error(kLabel) for an out-of-vocabulary emotion
  // and FormatError when shapes disagree with the header.
  void Accumulate(const ExampleTrace& example);

  // Elementwise sum. Throws Error(kIncompatible) on header mismatch.
  void MergeFrom(const EmotionCounters& other);

  friend bool operator==(const EmotionCounters&, const EmotionCounters&) = default;

 private:
  friend EmotionCounters ReadStats(std::istream& in);

  TraceHeader header_;
  NeuronLayout layout_;
  std::vector<std::uint64_t> positive_count_;
  std::vector<double> positive_mass_;
  std::vector<std::uint64_t> valid_tokens_;
  std::vector<std::uint64_t> examples_;
};

EmotionCounters Merge(const EmotionCounters& a, const EmotionCounters& b);

// Accumulates every example of a trace stream.
EmotionCounters AccumulateTrace(TraceReader& reader);
EmotionCounters AccumulateTraceFile(const std::filesystem::path& path);

struct Profiles {
  TraceHeader header;
  NeuronLayout layout;
  std::vector<double> frequency;  // P
  std::vector<double> magnitude;  // M
  std::vector<bool> observed;     // false where T_e == 0
  std::vector<std::uint64_t> pool_sizes;  // Examples per emotion.

  double p(int layer, int n, int e) const { return frequency[layout.cell(layer, n, e)]; }
  double m(int layer, int n, int e) const { return magnitude[layout.cell(layer, n, e)]; }
  int num_observed() const;
};

// T_e == 0 yields zero profiles for e and clears observed[e].
Profiles FinalizeProfiles(const EmotionCounters& counters);

void WriteStats(const EmotionCounters& counters, std::ostream& out);
EmotionCounters ReadStats(std::istream& in);
void WriteStatsFile(const EmotionCounters& counters,
                    const std::filesystem::path& path);
EmotionCounters ReadStatsFile(const std::filesystem::path& path);

}  // namespace esn

#endif  // ESN_STATS_H_

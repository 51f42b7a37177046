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

#ifndef ESN_SELECTORS_H_
#define ESN_SELECTORS_H_

// Emotion-sensitivity scoring and top-r% selection.
//
// Every method produces a ScoreTable with one score per (layer, neuron,
// emotion) where higher means more sensitive to that emotion; -inf marks
// "never select for this emotion". Neurons with P == 0 for every observed
// emotion are dead and are never ranked.
//
//   LAP   score = P
//   LAPE  H = -sum_e P~ ln P~ with P~ = P / sum_e' P; score = -H under the
//         neuron's argmax-P emotion, -inf elsewhere
//   MAD   score = M_e - mean_{e' != e} M_e'
//   CAS   score = P(1) - P(2) under the argmax-P emotion, -inf elsewhere
//
// Ties everywhere break toward the lower emotion index, then lower layer,
// then lower neuron index.

#include <cstdint>
#include <vector>

#include "esn/layout.h"
#include "esn/mask.h"
#include "esn/stats.h"
#include "esn/trace.h"

namespace esn {

struct ScoreTable {
  SelectorMethod method = SelectorMethod::kLap;
  TraceHeader header;
  NeuronLayout layout;
  std::vector<double> scores;          // (layer, neuron, emotion)
  std::vector<bool> dead;              // Per flat neuron id.
  std::vector<bool> observed;          // Per emotion.
  std::vector<std::uint64_t> pool_sizes;

  double score(int layer, int n, int e) const {
    return scores[layout.cell(layer, n, e)];
  }
  bool is_dead(int layer, int n) const { return dead[layout.neuron(layer, n)]; }
};

ScoreTable ScoreLap(const Profiles& profiles);
ScoreTable ScoreLape(const Profiles& profiles);
ScoreTable ScoreMad(const Profiles& profiles);
ScoreTable ScoreCas(const Profiles& profiles);

// Dispatches to one of the above. RND has no score table and throws
// Error(kPrecondition).
ScoreTable ScoreNeurons(SelectorMethod method, const Profiles& profiles);

// Shannon entropy (natural log) of a neuron's normalized firing distribution
// over observed emotions. NaN for dead neurons.
double FiringEntropy(const Profiles& profiles, int layer, int n);

// round-half-up(r * total). Throws Error(kParameter) unless 0 < r <= 1 and
// the rounded budget is at least 1.
std::size_t SelectionBudget(double ratio, std::size_t total_neurons);

// Globally ranks all (layer, neuron) by their score for `emotion` and keeps
// the top SelectionBudget(ratio, N). Dead neurons and -inf scores are never
// selected; Error(kShortfall) if too few remain. Error(kPrecondition) if the
// emotion is unobserved.
NeuronMask SelectTop(const ScoreTable& table, int emotion, double ratio);

// Uniform sample without replacement over every (layer, neuron), ignoring
// layer boundaries. Reproducible from `seed`.
NeuronMask SelectRandom(const TraceHeader& header, double ratio,
                        std::uint64_t seed);

}  // namespace esn

#endif  // ESN_SELECTORS_H_

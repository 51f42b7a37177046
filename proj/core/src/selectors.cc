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
#include <limits>

#include "esn/error.h"
#include "esn/rng.h"

namespace esn {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

ScoreTable EmptyTable(SelectorMethod method, const Profiles& profiles) {
  ScoreTable table;
  table.method = method;
  table.header = profiles.header;
  table.layout = profiles.layout;
  table.observed = profiles.observed;
  table.pool_sizes = profiles.pool_sizes;
  table.scores.assign(profiles.layout.num_cells(), kNegInf);
  table.dead.assign(profiles.layout.num_neurons(), false);
  const int num_emotions = profiles.layout.num_emotions();
  for (std::size_t flat = 0; flat < table.dead.size(); ++flat) {
    bool any = false;
    for (int e = 0; e < num_emotions; ++e) {
      if (profiles.observed[e] &&
          profiles.frequency[flat * num_emotions + e] > 0.0) {
        any = true;
        break;
      }
    }
    table.dead[flat] = !any;
  }
  return table;
}

void RequireContrast(const Profiles& profiles, SelectorMethod method) {
  if (profiles.num_observed() < 2) {
    throw Error(ErrorKind::kPrecondition,
                std::string(MethodName(method)) +
                    " needs at least two observed emotions");
  }
}

// Lowest-index observed emotion with maximal P, plus the runner-up value.
struct TopTwo {
  int best = -1;
  double first = 0.0;
  double second = 0.0;
};

TopTwo FindTopTwo(const Profiles& profiles, std::size_t flat) {
  const int num_emotions = profiles.layout.num_emotions();
  const double* p = &profiles.frequency[flat * num_emotions];
  TopTwo top;
  for (int e = 0; e < num_emotions; ++e) {
    if (!profiles.observed[e]) continue;
    if (top.best < 0 || p[e] > top.first) top = {e, p[e], 0.0};
  }
  bool have_second = false;
  for (int e = 0; e < num_emotions; ++e) {
    if (!profiles.observed[e] || e == top.best) continue;
    if (!have_second || p[e] > top.second) {
      top.second = p[e];
      have_second = true;
    }
  }
  return top;
}

double EntropyAt(const Profiles& profiles, std::size_t flat) {
  const int num_emotions = profiles.layout.num_emotions();
  const double* p = &profiles.frequency[flat * num_emotions];
  double total = 0.0;
  for (int e = 0; e < num_emotions; ++e) {
    if (profiles.observed[e]) total += p[e];
  }
  if (total <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  double h = 0.0;
  for (int e = 0; e < num_emotions; ++e) {
    if (!profiles.observed[e] || p[e] <= 0.0) continue;
    const double q = p[e] / total;
    h -= q * std::log(q);
  }
  return h;
}

}  // namespace

ScoreTable ScoreLap(const Profiles& profiles) {
  ScoreTable table = EmptyTable(SelectorMethod::kLap, profiles);
  const int num_emotions = profiles.layout.num_emotions();
  for (std::size_t i = 0; i < table.scores.size(); ++i) {
    if (profiles.observed[i % num_emotions]) table.scores[i] = profiles.frequency[i];
  }
  return table;
}

double FiringEntropy(const Profiles& profiles, int layer, int n) {
  return EntropyAt(profiles, profiles.layout.neuron(layer, n));
}

ScoreTable ScoreLape(const Profiles& profiles) {
  RequireContrast(profiles, SelectorMethod::kLape);
  ScoreTable table = EmptyTable(SelectorMethod::kLape, profiles);
  const int num_emotions = profiles.layout.num_emotions();
  for (std::size_t flat = 0; flat < table.dead.size(); ++flat) {
    if (table.dead[flat]) continue;
    const TopTwo top = FindTopTwo(profiles, flat);
    table.scores[flat * num_emotions + top.best] = -EntropyAt(profiles, flat);
  }
  return table;
}

ScoreTable ScoreMad(const Profiles& profiles) {
  RequireContrast(profiles, SelectorMethod::kMad);
  ScoreTable table = EmptyTable(SelectorMethod::kMad, profiles);
  const int num_emotions = profiles.layout.num_emotions();
  const double others = profiles.num_observed() - 1;
  for (std::size_t flat = 0; flat < table.dead.size(); ++flat) {
    const double* m = &profiles.magnitude[flat * num_emotions];
    for (int e = 0; e < num_emotions; ++e) {
      if (!profiles.observed[e]) continue;
      double rest = 0.0;
      for (int f = 0; f < num_emotions; ++f) {
        if (f != e && profiles.observed[f]) rest += m[f];
      }
      table.scores[flat * num_emotions + e] = m[e] - rest / others;
    }
  }
  return table;
}

ScoreTable ScoreCas(const Profiles& profiles) {
  RequireContrast(profiles, SelectorMethod::kCas);
  ScoreTable table = EmptyTable(SelectorMethod::kCas, profiles);
  const int num_emotions = profiles.layout.num_emotions();
  for (std::size_t flat = 0; flat < table.dead.size(); ++flat) {
    if (table.dead[flat]) continue;
    const TopTwo top = FindTopTwo(profiles, flat);
    table.scores[flat * num_emotions + top.best] = top.first - top.second;
  }
  return table;
}

ScoreTable ScoreNeurons(SelectorMethod method, const Profiles& profiles) {
  switch (method) {
    case SelectorMethod::kLap:
      return ScoreLap(profiles);
    case SelectorMethod::kLape:
      return ScoreLape(profiles);
    case SelectorMethod::kMad:
      return ScoreMad(profiles);
    case SelectorMethod::kCas:
      return ScoreCas(profiles);
    case SelectorMethod::kRnd:
    case SelectorMethod::kTruth:
      break;
  }
  throw Error(ErrorKind::kPrecondition,
              std::string(MethodName(method)) + " is not score-based");
}

std::size_t SelectionBudget(double ratio, std::size_t total_neurons) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw Error(ErrorKind::kParameter,
                "selection ratio must satisfy 0 < r <= 1, got " +
                    std::to_string(ratio));
  }
  const auto budget = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(total_neurons) + 0.5));
  if (budget == 0) {
    throw Error(ErrorKind::kParameter,
                "ratio " + std::to_string(ratio) +
                    " selects no neuron; need r >= 1/" +
                    std::to_string(total_neurons));
  }
  return budget;
}

NeuronMask SelectTop(const ScoreTable& table, int emotion, double ratio) {
  const int num_emotions = table.layout.num_emotions();
  if (emotion < 0 || emotion >= num_emotions) {
    throw Error(ErrorKind::kLabel,
                "emotion index " + std::to_string(emotion) + " out of range");
  }
  if (!table.observed[emotion]) {
    throw Error(ErrorKind::kPrecondition,
                "emotion '" + table.header.emotion_vocab[emotion] +
                    "' was not observed in the identification pool");
  }
  const std::size_t budget = SelectionBudget(ratio, table.layout.num_neurons());

  struct Candidate {
    double score;
    std::size_t flat;
  };
  std::vector<Candidate> ranked;
  for (std::size_t flat = 0; flat < table.dead.size(); ++flat) {
    if (table.dead[flat]) continue;
    const double s = table.scores[flat * num_emotions + emotion];
    if (std::isfinite(s)) ranked.push_back({s, flat});
  }
  if (ranked.size() < budget) {
    throw Error(ErrorKind::kShortfall,
                std::string(MethodName(table.method)) + " for emotion '" +
                    table.header.emotion_vocab[emotion] + "' has only " +
                    std::to_string(ranked.size()) +
                    " rankable neurons, budget is " + std::to_string(budget));
  }
  // Flat ids increase with (layer, neuron), so the id is the tie-breaker.
  std::partial_sort(ranked.begin(),
                    ranked.begin() + static_cast<std::ptrdiff_t>(budget),
                    ranked.end(), [](const Candidate& a, const Candidate& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.flat < b.flat;
                    });

  NeuronMask mask;
  mask.model_id = table.header.model_id;
  mask.method = table.method;
  mask.emotion = table.header.emotion_vocab[emotion];
  mask.ratio = ratio;
  mask.provenance.pool_sizes_per_emotion = table.pool_sizes;
  mask.provenance.created_at = table.header.created_at;
  for (std::size_t i = 0; i < budget; ++i) {
    const auto [layer, n] = table.layout.Locate(ranked[i].flat);
    mask.layers[layer].push_back(n);
  }
  for (auto& [layer, idx] : mask.layers) std::sort(idx.begin(), idx.end());
  return mask;
}

NeuronMask SelectRandom(const TraceHeader& header, double ratio,
                        std::uint64_t seed) {
  header.Validate();
  const NeuronLayout layout(header.gate_widths, header.num_emotions());
  const std::size_t total = layout.num_neurons();
  const std::size_t budget = SelectionBudget(ratio, total);
  if (budget > total) {
    throw Error(ErrorKind::kParameter, "random budget exceeds neuron count");
  }
  Rng rng(seed);
  NeuronMask mask;
  mask.model_id = header.model_id;
  mask.method = SelectorMethod::kRnd;
  mask.ratio = ratio;
  mask.seed = seed;
  mask.provenance.created_at = header.created_at;
  for (std::uint64_t flat : rng.SampleWithoutReplacement(total, budget)) {
    const auto [layer, n] = layout.Locate(static_cast<std::size_t>(flat));
    mask.layers[layer].push_back(n);
  }
  for (auto& [layer, idx] : mask.layers) std::sort(idx.begin(), idx.end());
  return mask;
}

}  // namespace esn

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

#ifndef ESN_PROTOCOL_H_
#define ESN_PROTOCOL_H_

// Self/cross intervention protocol over a micromodel and a balanced
// evaluation set, plus the sweeps built on top of it.
//
// Accuracies are percentages snapped to a 2^-32 grid, so that
// intervened == baseline + delta holds exactly in double arithmetic.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esn/intervene.h"
#include "esn/mask.h"
#include "esn/micromodel.h"
#include "esn/selectors.h"
#include "esn/stats.h"

namespace esn {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. jobs <= 1 runs inline.
void ParallelFor(std::size_t n, int jobs,
                 const std::function<void(std::size_t)>& fn);

// Rounds a percentage to the protocol's fixed grid.
double QuantizePercent(double percent);

// Masks for every source emotion (or the seed masks of RND).
struct MaskSet {
  SelectorMethod method = SelectorMethod::kCas;
  double ratio = 0.0;
  std::vector<NeuronMask> per_emotion;  // Vocabulary order; non-RND methods.
  std::vector<NeuronMask> random;       // RND seed masks.

  bool is_random() const { return method == SelectorMethod::kRnd; }
  // Throws Error(kConfig) when no mask is present for `emotion`.
  const NeuronMask& For(const std::string& emotion) const;
  std::vector<std::string> emotions() const;
};

// Selects masks for every observed emotion (or `rnd_seeds.size()` random
// masks for RND).
MaskSet IdentifyMasks(const Profiles& profiles, SelectorMethod method,
                      double ratio, std::span<const std::uint64_t> rnd_seeds);

// Ground-truth masks of every emotion in `vocab`.
MaskSet TruthMasks(const MicroModel& model, const std::vector<std::string>& vocab);

struct ProtocolSettings {
  InterventionMode mode = InterventionMode::kAblate;
  double alpha = 0.0;
  int jobs = 1;
  // Unintervened accuracy of the dataset in vocabulary order, if already
  // known; recomputed when empty.
  std::vector<double> baseline;
};

struct EffectMatrix {
  std::string mode;
  std::string method;
  double ratio = 0.0;
  double alpha = 0.0;
  std::vector<std::string> emotions;  // Sources == evaluation emotions.
  std::vector<double> baseline;       // Percent, per evaluation emotion.
  std::vector<std::vector<double>> intervened;  // [source][evaluation]
  std::vector<std::vector<double>> delta;       // [source][evaluation]
  // RND only: the delta matrix of each seed mask.
  std::vector<std::vector<std::vector<double>>> seed_deltas;

  std::size_t size() const { return emotions.size(); }
};

struct SelfCross {
  double self = 0.0;
  std::optional<double> cross;  // Absent for a 1 x 1 matrix.
  double gap = 0.0;
};

// Throws Error(kShape) unless delta is square and non-empty.
SelfCross SelfCrossSummary(const EffectMatrix& matrix);
// Off-diagonal mean of one source row; nullopt for a 1 x 1 matrix.
std::optional<double> RowCrossEffect(const EffectMatrix& matrix, std::size_t source);

// Percent correct per vocabulary emotion.
std::vector<double> EvaluateAccuracy(const MicroModel& model, const Dataset& dataset,
                                     const InterventionSpec* spec, int jobs);

// Baseline plus one intervened evaluation per source emotion. `emotions`
// restricts sources and evaluation emotions to a subset of the dataset
// vocabulary (all when empty). Only ablate and steer are accepted.
EffectMatrix RunProtocol(const MicroModel& model, const Dataset& dataset,
                         const MaskSet& masks, const ProtocolSettings& settings,
                         const std::vector<std::string>& emotions = {});

// Evaluates masks identified on one dataset against another, over the
// emotions both share. Throws Error(kIncompatible) on an empty overlap.
EffectMatrix TransferEval(const MaskSet& masks, const MicroModel& model,
                          const Dataset& target, const ProtocolSettings& settings);

struct InjectionResult {
  std::string mode;
  std::string method;
  double ratio = 0.0;
  double alpha = 0.0;
  double tau = 0.0;
  std::vector<std::string> emotions;
  std::vector<double> baseline;     // Percent.
  std::vector<double> accuracy;     // Percent under injection.
  std::vector<double> delta;
  double baseline_overall = 0.0;
  double accuracy_overall = 0.0;
  std::uint64_t invalid_first_pass = 0;
};

// Label-free injection with every emotion's mask at once.
InjectionResult RunInjection(const MicroModel& model, const Dataset& dataset,
                             const MaskSet& masks, InterventionMode mode,
                             double alpha, double tau, int jobs);

// Forward passes over `dataset`, keeping correctly answered items.
struct LogResult {
  TraceHeader header;
  std::vector<ExampleTrace> kept;
  std::vector<std::uint64_t> kept_per_emotion;
  std::vector<std::uint64_t> dropped_per_emotion;
};
LogResult LogCorrectItems(const MicroModel& model, const Dataset& dataset,
                          const std::string& created_at, int jobs);
// Counters of the correctly answered items, without materializing traces.
EmotionCounters CountCorrectItems(const MicroModel& model, const Dataset& dataset,
                                  const std::string& created_at, int jobs);

// One matrix per ratio; masks are reselected from the same profiles.
std::vector<EffectMatrix> SweepRatio(const MicroModel& model, const Dataset& dataset,
                                     const Profiles& profiles, SelectorMethod method,
                                     std::span<const double> ratios,
                                     std::span<const std::uint64_t> rnd_seeds,
                                     const ProtocolSettings& settings);

struct PoolCurve {
  std::string method;
  double ratio = 0.0;
  std::vector<std::string> emotions;
  std::vector<int> pool_sizes;
  std::vector<std::vector<double>> self_effect;  // [pool][emotion]
  std::vector<std::vector<std::uint64_t>> kept;  // [pool][emotion]
};

// For each pool size, counts the correct items of that identification
// prefix, selects masks and runs the protocol. Pool sizes must be ascending
// and >= 1 (Error(kPrecondition)).
PoolCurve SweepPool(const MicroModel& model, const Dataset& identification,
                    const Dataset& evaluation, SelectorMethod method,
                    std::span<const int> pool_sizes, double ratio,
                    std::span<const std::uint64_t> rnd_seeds,
                    const ProtocolSettings& settings,
                    const std::string& created_at);

struct LayerHistogram {
  std::vector<std::string> emotions;
  int num_layers = 0;
  std::vector<std::vector<std::uint64_t>> counts;  // [emotion][layer]
};

LayerHistogram HistogramFromMasks(std::span<const NeuronMask> masks, int num_layers);
// Histogram of the top `fraction` of neurons per observed emotion.
LayerHistogram HistogramFromScores(const ScoreTable& table, double fraction);

}  // namespace esn

#endif  // ESN_PROTOCOL_H_

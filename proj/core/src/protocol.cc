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

#include "esn/protocol.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "esn/error.h"

namespace esn {
namespace {

struct ItemOutcome {
  bool correct = false;
  bool invalid_first_pass = false;
};

constexpr std::size_t kBatch = 64;

// Predictions for items [begin, end) in fixed-size batches spread over jobs.
std::vector<Prediction> PredictRange(const HookedRunner& runner, const Dataset& dataset,
                                     std::size_t begin, std::size_t end,
                                     bool capture_trace, int jobs) {
  const std::size_t n = end - begin;
  const std::size_t batches = (n + kBatch - 1) / kBatch;
  std::vector<std::vector<Prediction>> parts(batches);
  ParallelFor(batches, jobs, [&](std::size_t b) {
    const std::size_t first = begin + b * kBatch;
    parts[b] = runner.RunBatch(dataset, first, std::min(kBatch, end - first), capture_trace);
  });
  std::vector<Prediction> out;
  out.reserve(n);
  for (auto& part : parts) {
    for (auto& p : part) out.push_back(std::move(p));
  }
  return out;
}

std::vector<ItemOutcome> EvaluateItems(const MicroModel& model, const Dataset& dataset,
                                       const InterventionSpec* spec, int jobs) {
  const HookedRunner runner(model, spec);
  const std::vector<Prediction> preds =
      PredictRange(runner, dataset, 0, dataset.items.size(), false, jobs);
  std::vector<ItemOutcome> out(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out[i].correct = preds[i].emotion.has_value() && *preds[i].emotion == dataset.items[i].emotion;
    out[i].invalid_first_pass = preds[i].invalid_first_pass;
  }
  return out;
}

std::vector<double> PercentCorrect(const Dataset& dataset,
                                   const std::vector<ItemOutcome>& outcomes) {
  std::vector<std::uint64_t> correct(dataset.vocab.size(), 0);
  std::vector<std::uint64_t> total(dataset.vocab.size(), 0);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto e = static_cast<std::size_t>(dataset.items[i].emotion);
    ++total[e];
    if (outcomes[i].correct) ++correct[e];
  }
  std::vector<double> pct(dataset.vocab.size());
  for (std::size_t e = 0; e < pct.size(); ++e) {
    if (total[e] == 0) {
      throw Error(ErrorKind::kPrecondition,
                  "evaluation set has no items for emotion '" + dataset.vocab[e] + "'");
    }
    pct[e] = QuantizePercent(100.0 * static_cast<double>(correct[e]) /
                             static_cast<double>(total[e]));
  }
  return pct;
}

std::vector<std::size_t> SubsetIndices(const Dataset& dataset,
                                       const std::vector<std::string>& emotions) {
  std::vector<std::size_t> idx;
  if (emotions.empty()) {
    for (std::size_t v = 0; v < dataset.vocab.size(); ++v) idx.push_back(v);
    return idx;
  }
  for (const auto& name : emotions) {
    auto it = std::find(dataset.vocab.begin(), dataset.vocab.end(), name);
    if (it == dataset.vocab.end()) {
      throw Error(ErrorKind::kLabel,
                  "emotion '" + name + "' is not in the dataset vocabulary");
    }
    idx.push_back(static_cast<std::size_t>(it - dataset.vocab.begin()));
  }
  return idx;
}

void RequireAscending(std::span<const double> values, const char* what) {
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i - 1] < values[i])) {
      throw Error(ErrorKind::kPrecondition, std::string(what) + " must be ascending");
    }
  }
}

}  // namespace

void ParallelFor(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::jthread> threads;
  threads.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(work);
  work();
  threads.clear();
  if (error) std::rethrow_exception(error);
}

double QuantizePercent(double percent) {
  return std::ldexp(std::nearbyint(std::ldexp(percent, 32)), -32);
}

const NeuronMask& MaskSet::For(const std::string& emotion) const {
  for (const auto& m : per_emotion) {
    if (m.emotion == emotion) return m;
  }
  throw Error(ErrorKind::kConfig, "no " + std::string(MethodName(method)) +
                                      " mask for emotion '" + emotion + "'");
}

std::vector<std::string> MaskSet::emotions() const {
  std::vector<std::string> out;
  for (const auto& m : per_emotion) out.push_back(m.emotion);
  return out;
}

MaskSet IdentifyMasks(const Profiles& profiles, SelectorMethod method, double ratio,
                      std::span<const std::uint64_t> rnd_seeds) {
  MaskSet set;
  set.method = method;
  set.ratio = ratio;
  if (method == SelectorMethod::kRnd) {
    if (rnd_seeds.empty()) throw Error(ErrorKind::kConfig, "RND needs at least one seed");
    for (std::uint64_t seed : rnd_seeds) {
      set.random.push_back(SelectRandom(profiles.header, ratio, seed));
    }
    return set;
  }
  const ScoreTable table = ScoreNeurons(method, profiles);
  for (int e = 0; e < profiles.header.num_emotions(); ++e) {
    if (!profiles.observed[e]) continue;
    set.per_emotion.push_back(SelectTop(table, e, ratio));
  }
  return set;
}

MaskSet TruthMasks(const MicroModel& model, const std::vector<std::string>& vocab) {
  MaskSet set;
  set.method = SelectorMethod::kTruth;
  for (const auto& name : vocab) {
    const int e = model.config().EmotionIndex(name);
    if (e < 0) throw Error(ErrorKind::kLabel, "unknown emotion '" + name + "'");
    set.per_emotion.push_back(model.truth().AsMask(e, model.config().model_id));
  }
  if (!set.per_emotion.empty()) {
    const double total = static_cast<double>(model.config().num_layers) *
                         model.config().gate_width;
    set.ratio = static_cast<double>(set.per_emotion.front().size()) / total;
  }
  return set;
}

std::optional<double> RowCrossEffect(const EffectMatrix& matrix, std::size_t source) {
  const std::size_t n = matrix.size();
  if (n < 2) return std::nullopt;
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != source) sum += matrix.delta[source][j];
  }
  return sum / static_cast<double>(n - 1);
}

SelfCross SelfCrossSummary(const EffectMatrix& matrix) {
  const std::size_t n = matrix.delta.size();
  if (n == 0) throw Error(ErrorKind::kShape, "empty effect matrix");
  for (const auto& row : matrix.delta) {
    if (row.size() != n) throw Error(ErrorKind::kShape, "effect matrix is not square");
  }
  SelfCross s;
  double diag = 0.0;
  double off = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      (i == j ? diag : off) += matrix.delta[i][j];
    }
  }
  s.self = diag / static_cast<double>(n);
  if (n > 1) {
    s.cross = off / static_cast<double>(n * (n - 1));
    s.gap = s.self - *s.cross;
  } else {
    s.gap = s.self;
  }
  return s;
}

std::vector<double> EvaluateAccuracy(const MicroModel& model, const Dataset& dataset,
                                     const InterventionSpec* spec, int jobs) {
  return PercentCorrect(dataset, EvaluateItems(model, dataset, spec, jobs));
}

EffectMatrix RunProtocol(const MicroModel& model, const Dataset& dataset,
                         const MaskSet& masks, const ProtocolSettings& settings,
                         const std::vector<std::string>& emotions) {
  if (settings.mode != InterventionMode::kAblate &&
      settings.mode != InterventionMode::kSteer) {
    throw Error(ErrorKind::kConfig, "the self/cross protocol takes ablate or steer, not " +
                                        std::string(ModeName(settings.mode)));
  }
  const std::vector<std::size_t> idx = SubsetIndices(dataset, emotions);
  const std::size_t n = idx.size();

  EffectMatrix m;
  m.mode = ModeName(settings.mode);
  m.method = MethodName(masks.method);
  m.ratio = masks.ratio;
  m.alpha = settings.alpha;
  for (std::size_t v : idx) m.emotions.push_back(dataset.vocab[v]);

  const std::vector<double> base =
      settings.baseline.empty() ? EvaluateAccuracy(model, dataset, nullptr, settings.jobs)
                                : settings.baseline;
  if (base.size() != dataset.vocab.size()) {
    throw Error(ErrorKind::kShape, "baseline does not cover the dataset vocabulary");
  }
  for (std::size_t v : idx) m.baseline.push_back(base[v]);

  auto run = [&](const NeuronMask& mask) {
    InterventionSpec spec;
    spec.mode = settings.mode;
    spec.alpha = settings.alpha;
    spec.masks = {mask};
    const std::vector<double> acc = EvaluateAccuracy(model, dataset, &spec, settings.jobs);
    std::vector<double> row;
    for (std::size_t v : idx) row.push_back(acc[v]);
    return row;
  };

  m.intervened.assign(n, std::vector<double>(n, 0.0));
  m.delta.assign(n, std::vector<double>(n, 0.0));
  if (masks.is_random()) {
    if (masks.random.empty()) throw Error(ErrorKind::kConfig, "no RND masks");
    std::vector<double> mean(n, 0.0);
    for (const auto& mask : masks.random) {
      const std::vector<double> row = run(mask);
      std::vector<double> d(n);
      for (std::size_t j = 0; j < n; ++j) {
        d[j] = row[j] - m.baseline[j];
        mean[j] += d[j];
      }
      m.seed_deltas.emplace_back(n, d);
    }
    for (std::size_t j = 0; j < n; ++j) {
      mean[j] = QuantizePercent(mean[j] / static_cast<double>(masks.random.size()));
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        m.delta[i][j] = mean[j];
        m.intervened[i][j] = m.baseline[j] + mean[j];
      }
    }
    return m;
  }
  for (std::size_t i = 0; i < n; ++i) {
    m.intervened[i] = run(masks.For(m.emotions[i]));
    for (std::size_t j = 0; j < n; ++j) {
      m.delta[i][j] = m.intervened[i][j] - m.baseline[j];
    }
  }
  return m;
}

EffectMatrix TransferEval(const MaskSet& masks, const MicroModel& model,
                          const Dataset& target, const ProtocolSettings& settings) {
  std::vector<std::string> shared;
  if (masks.is_random()) {
    shared = target.vocab;
  } else {
    const std::vector<std::string> source = masks.emotions();
    for (const auto& name : target.vocab) {
      if (std::find(source.begin(), source.end(), name) != source.end()) {
        shared.push_back(name);
      }
    }
  }
  if (shared.empty()) {
    throw Error(ErrorKind::kIncompatible,
                "mask emotions and dataset '" + target.spec.name +
                    "' share no emotion");
  }
  return RunProtocol(model, target, masks, settings, shared);
}

InjectionResult RunInjection(const MicroModel& model, const Dataset& dataset,
                             const MaskSet& masks, InterventionMode mode, double alpha,
                             double tau, int jobs) {
  if (!IsInjection(mode)) {
    throw Error(ErrorKind::kConfig,
                std::string(ModeName(mode)) + " is not an injection mode");
  }
  if (masks.is_random()) {
    throw Error(ErrorKind::kConfig, "injection needs one mask per emotion, not RND");
  }
  InterventionSpec spec;
  spec.mode = mode;
  spec.alpha = alpha;
  spec.tau = tau;
  for (const auto& name : dataset.vocab) spec.masks.push_back(masks.For(name));

  InjectionResult r;
  r.mode = ModeName(mode);
  r.method = MethodName(masks.method);
  r.ratio = masks.ratio;
  r.alpha = alpha;
  r.tau = tau;
  r.emotions = dataset.vocab;

  const auto base = EvaluateItems(model, dataset, nullptr, jobs);
  const auto injected = EvaluateItems(model, dataset, &spec, jobs);
  r.baseline = PercentCorrect(dataset, base);
  r.accuracy = PercentCorrect(dataset, injected);
  for (std::size_t e = 0; e < r.emotions.size(); ++e) {
    r.delta.push_back(r.accuracy[e] - r.baseline[e]);
  }
  std::uint64_t base_correct = 0;
  std::uint64_t inj_correct = 0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    base_correct += base[i].correct;
    inj_correct += injected[i].correct;
    r.invalid_first_pass += injected[i].invalid_first_pass;
  }
  const double total = static_cast<double>(dataset.items.size());
  r.baseline_overall = QuantizePercent(100.0 * static_cast<double>(base_correct) / total);
  r.accuracy_overall = QuantizePercent(100.0 * static_cast<double>(inj_correct) / total);
  return r;
}

LogResult LogCorrectItems(const MicroModel& model, const Dataset& dataset,
                          const std::string& created_at, int jobs) {
  LogResult r;
  r.header = model.MakeTraceHeader(dataset.vocab, created_at);
  r.kept_per_emotion.assign(dataset.vocab.size(), 0);
  r.dropped_per_emotion.assign(dataset.vocab.size(), 0);
  const HookedRunner runner(model, nullptr);
  std::vector<Prediction> preds =
      PredictRange(runner, dataset, 0, dataset.items.size(), true, jobs);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const SyntheticItem& item = dataset.items[i];
    const auto e = static_cast<std::size_t>(item.emotion);
    if (preds[i].emotion == item.emotion) {
      ++r.kept_per_emotion[e];
      r.kept.push_back(std::move(*preds[i].trace));
    } else {
      ++r.dropped_per_emotion[e];
    }
  }
  return r;
}

EmotionCounters CountCorrectItems(const MicroModel& model, const Dataset& dataset,
                                  const std::string& created_at, int jobs) {
  EmotionCounters counters(model.MakeTraceHeader(dataset.vocab, created_at));
  const HookedRunner runner(model, nullptr);
  const std::size_t n = dataset.items.size();
  const std::size_t span = kBatch * static_cast<std::size_t>(std::max(jobs, 1));
  for (std::size_t begin = 0; begin < n; begin += span) {
    const std::size_t end = std::min(n, begin + span);
    std::vector<Prediction> preds = PredictRange(runner, dataset, begin, end, true, jobs);
    for (std::size_t k = 0; k < preds.size(); ++k) {
      if (preds[k].emotion == dataset.items[begin + k].emotion) {
        counters.Accumulate(*preds[k].trace);
      }
    }
  }
  return counters;
}

std::vector<EffectMatrix> SweepRatio(const MicroModel& model, const Dataset& dataset,
                                     const Profiles& profiles, SelectorMethod method,
                                     std::span<const double> ratios,
                                     std::span<const std::uint64_t> rnd_seeds,
                                     const ProtocolSettings& settings) {
  RequireAscending(ratios, "ratios");
  std::vector<EffectMatrix> out;
  for (double r : ratios) {
    out.push_back(RunProtocol(model, dataset,
                              IdentifyMasks(profiles, method, r, rnd_seeds), settings));
  }
  return out;
}

PoolCurve SweepPool(const MicroModel& model, const Dataset& identification,
                    const Dataset& evaluation, SelectorMethod method,
                    std::span<const int> pool_sizes, double ratio,
                    std::span<const std::uint64_t> rnd_seeds,
                    const ProtocolSettings& settings, const std::string& created_at) {
  for (std::size_t i = 0; i < pool_sizes.size(); ++i) {
    if (pool_sizes[i] < 1) {
      throw Error(ErrorKind::kPrecondition,
                  "pool size " + std::to_string(pool_sizes[i]) + " is below 1 per emotion");
    }
    if (i > 0 && pool_sizes[i - 1] >= pool_sizes[i]) {
      throw Error(ErrorKind::kPrecondition, "pool sizes must be ascending");
    }
  }
  PoolCurve curve;
  curve.method = MethodName(method);
  curve.ratio = ratio;
  curve.emotions = evaluation.vocab;
  for (int size : pool_sizes) {
    const Dataset pool = TakePool(identification, size);
    const EmotionCounters counters = CountCorrectItems(model, pool, created_at, settings.jobs);
    const Profiles profiles = FinalizeProfiles(counters);
    const EffectMatrix m = RunProtocol(
        model, evaluation, IdentifyMasks(profiles, method, ratio, rnd_seeds), settings);
    std::vector<double> self(m.size());
    for (std::size_t e = 0; e < m.size(); ++e) self[e] = m.delta[e][e];
    curve.pool_sizes.push_back(size);
    curve.self_effect.push_back(std::move(self));
    curve.kept.push_back(counters.example_counts());
  }
  return curve;
}

LayerHistogram HistogramFromMasks(std::span<const NeuronMask> masks, int num_layers) {
  LayerHistogram h;
  h.num_layers = num_layers;
  for (const auto& mask : masks) {
    std::vector<std::uint64_t> row(static_cast<std::size_t>(num_layers), 0);
    for (const auto& [layer, indices] : mask.layers) {
      if (layer < 0 || layer >= num_layers) {
        throw Error(ErrorKind::kMaskMismatch,
                    "mask layer " + std::to_string(layer) + " outside " +
                        std::to_string(num_layers) + " layers");
      }
      row[static_cast<std::size_t>(layer)] += indices.size();
    }
    h.emotions.push_back(mask.emotion.empty() ? std::string(MethodName(mask.method))
                                              : mask.emotion);
    h.counts.push_back(std::move(row));
  }
  return h;
}

LayerHistogram HistogramFromScores(const ScoreTable& table, double fraction) {
  std::vector<NeuronMask> masks;
  for (int e = 0; e < table.layout.num_emotions(); ++e) {
    if (table.observed[e]) masks.push_back(SelectTop(table, e, fraction));
  }
  return HistogramFromMasks(masks, table.layout.num_layers());
}

}  // namespace esn

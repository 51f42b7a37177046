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


#include <benchmark/benchmark.h>

#include <vector>

#include "esn/intervene.h"
#include "esn/micromodel.h"
#include "esn/protocol.h"
#include "esn/rng.h"
#include "esn/selectors.h"
#include "esn/stats.h"

namespace esn {
namespace {

TraceHeader Header(int layers, int width) {
  TraceHeader h;
  h.model_id = "bench";
  h.gate_widths.assign(layers, width);
  h.emotion_vocab = {"anger", "happiness", "neutral", "sadness", "surprise"};
  return h;
}

ExampleTrace Example(const TraceHeader& h, int tokens, Rng& rng) {
  ExampleTrace ex;
  ex.emotion_id = static_cast<int>(rng.Below(h.emotion_vocab.size()));
  ex.token_mask.assign(tokens, 1);
  for (int d : h.gate_widths) {
    std::vector<float> g(static_cast<std::size_t>(tokens) * d);
    for (auto& v : g) v = static_cast<float>(rng.Normal());
    ex.gates.push_back(std::move(g));
  }
  return ex;
}

void BM_Accumulate(benchmark::State& state) {
  const auto h = Header(6, static_cast<int>(state.range(0)));
  Rng rng(1);
  const auto ex = Example(h, 16, rng);
  EmotionCounters counters(h);
  for (auto _ : state) counters.Accumulate(ex);
  state.SetItemsProcessed(state.iterations() * 16 * 6 * state.range(0));
}
BENCHMARK(BM_Accumulate)->Arg(256)->Arg(1536);

void BM_Score(benchmark::State& state) {
  const auto h = Header(6, 1536);
  Rng rng(2);
  EmotionCounters counters(h);
  for (int i = 0; i < 50; ++i) counters.Accumulate(Example(h, 4, rng));
  const auto profiles = FinalizeProfiles(counters);
  const auto method = static_cast<SelectorMethod>(state.range(0));
  for (auto _ : state) {
    const auto table = ScoreNeurons(method, profiles);
    benchmark::DoNotOptimize(SelectTop(table, 0, 0.005));
  }
  state.SetLabel(std::string(MethodName(method)));
}
BENCHMARK(BM_Score)
    ->Arg(static_cast<int>(SelectorMethod::kLap))
    ->Arg(static_cast<int>(SelectorMethod::kLape))
    ->Arg(static_cast<int>(SelectorMethod::kMad))
    ->Arg(static_cast<int>(SelectorMethod::kCas));

void BM_Forward(benchmark::State& state) {
  const auto model = MicroModel::Build(MicroModelConfig{});
  DatasetSpec spec;
  spec.split = Split::kEvaluation;
  spec.items_per_emotion = 20;
  spec.seed = 3;
  const auto data = GenerateDataset(model.config(), spec);
  const HookedRunner runner(model, nullptr);
  for (auto _ : state) {
    benchmark::DoNotOptimize(runner.RunBatch(data, 0, data.items.size()));
  }
  state.SetItemsProcessed(state.iterations() * data.items.size());
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace esn

BENCHMARK_MAIN();

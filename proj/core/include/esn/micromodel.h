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

#ifndef ESN_MICROMODEL_H_
#define ESN_MICROMODEL_H_

// A constructed (untrained) stack of SwiGLU MLP blocks with known planted
// emotion-selective gate units.
//
// Residual stream layout (width d):
//   [0, E)            emotion feature directions, one per model emotion
//   E                 constant bias feature (always 1)
//   [E+1, d-E)        nuisance "content" features
//   [d-E, d)          readout accumulators, one per model emotion
//
// Each block computes u = W_gate x, v = W_up x, g = SiLU(u) and adds
// W_down (g * v) to the stream. A planted unit for emotion e reads only the
// e-th emotion feature (u = strength * x_e), has v = 1 and writes into the
// e-th readout. Background units read only bias and nuisance features, so
// their firing statistics do not depend on the emotion; they leak into the
// readouts with a weight proportional to `noise_scale`.
//
// The answer for an item is the option slot with the largest readout among
// the item's options, rendered as its 1-based number. If no option beats
// the abstain level (abstain_fraction * SiLU(planted_gain)) the model
// answers "not sure".

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "esn/answer.h"
#include "esn/intervene.h"
#include "esn/mask.h"
#include "esn/trace.h"

namespace esn {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr const char* kAbstainAnswer = "not sure";

// Explicit placement of planted units, overriding the seeded placement for
// one (emotion, layer).
struct PlantOverride {
  std::string emotion;
  int layer = 0;
  std::vector<int> neurons;
};

struct MicroModelConfig {
  std::string model_id = "esn-micro";
  int num_layers = 6;
  int hidden_width = 32;
  int gate_width = 256;
  std::vector<std::string> emotions = {"anger", "happiness", "neutral",
                                       "sadness", "surprise"};
  int planted_per_emotion = 4;  // Per emotion, per planted layer.
  std::vector<int> planted_layers = {0, 2, 4};
  std::vector<PlantOverride> plant_overrides;
  double planted_gain = 4.0;
  double noise_scale = 0.0;
  double background_scale = 1.0;
  int tokens_per_item = 4;
  double abstain_fraction = 0.5;
  std::uint64_t seed = 20260101;

  int num_emotions() const { return static_cast<int>(emotions.size()); }
  int nuisance_width() const { return hidden_width - 2 * num_emotions() - 1; }
  std::vector<int> gate_widths() const {
    return std::vector<int>(static_cast<std::size_t>(num_layers), gate_width);
  }
  int EmotionIndex(const std::string& name) const;  // -1 when absent.

  // Throws Error(kConstruction).
  void Validate() const;

  nlohmann::json ToJson() const;
  // Missing keys keep their defaults. Throws Error(kConfig) with the
  // offending field path.
  static MicroModelConfig FromJson(const nlohmann::json& j,
                                   const std::string& path = "$");
};

struct PlantedNeuron {
  int emotion = 0;  // Model emotion index.
  int layer = 0;
  int neuron = 0;
  double strength = 0.0;
};

struct PlantedGroundTruth {
  std::vector<std::string> emotions;
  std::vector<PlantedNeuron> neurons;

  // Sorted planted indices of `emotion` at `layer`.
  std::vector<int> Indices(int emotion, int layer) const;
  std::size_t Count(int emotion) const;
  // The planted set of an emotion as a mask usable for interventions.
  NeuronMask AsMask(int emotion, const std::string& model_id) const;
};

struct SyntheticItem {
  std::uint64_t id = 0;
  int emotion = 0;                // Index into the dataset vocabulary.
  std::vector<int> option_order;  // Option slot -> vocabulary index.
  RowMatrix features;             // T x d.
};

enum class Split { kIdentification, kEvaluation };
std::string_view SplitName(Split split);

struct DatasetSpec {
  std::string name = "synthetic";
  Split split = Split::kEvaluation;
  // Subset of the model emotions, in vocabulary order; empty means all.
  std::vector<std::string> emotions;
  int items_per_emotion = 200;
  std::uint64_t seed = 1;

  nlohmann::json ToJson() const;
  static DatasetSpec FromJson(const nlohmann::json& j,
                              const std::string& path = "$");
};

struct Dataset {
  DatasetSpec spec;
  std::vector<std::string> vocab;
  std::vector<int> readout;  // Vocabulary index -> model emotion index.
  std::vector<SyntheticItem> items;

  // Option names for an item, in slot order.
  std::vector<std::string> OptionNames(const SyntheticItem& item) const;
  std::vector<int> CountPerEmotion() const;
};

struct ForwardOutput {
  std::string answer;
  std::vector<double> option_logits;  // Per option slot.
  std::optional<ExampleTrace> trace;  // Pre-intervention gates, if captured.
};

struct Prediction {
  std::string answer;
  AnswerParseResult parse;
  std::optional<int> emotion;  // Vocabulary index of the chosen option.
  bool invalid_first_pass = false;
  std::optional<ExampleTrace> trace;
};

class MicroModel {
 public:
  struct Block {
    RowMatrix gate;  // D x d (u)
    RowMatrix up;    // D x d (v)
    RowMatrix down;  // d x D
  };

  // Deterministic construction; throws Error(kConstruction) when planted
  // sets overlap or do not fit.
  static MicroModel Build(const MicroModelConfig& config);

  const MicroModelConfig& config() const { return config_; }
  const PlantedGroundTruth& truth() const { return truth_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::vector<int> gate_widths() const { return config_.gate_widths(); }
  double abstain_level() const;

  // W_down (SiLU(W_gate x) * W_up x) for every row of x.
  RowMatrix BlockOutput(int layer, const RowMatrix& x) const;

  // Runs the stack on one item. `readout` maps vocabulary to model emotion
  // indices. The hook, if any, is applied to every layer's gates.
  ForwardOutput Forward(const SyntheticItem& item, std::span<const int> readout,
                        const GateHook* hook, bool capture_trace) const;
  // Forward over several items at once; the hook still sees one item's
  // block at a time. Row results do not depend on the batch composition.
  std::vector<ForwardOutput> ForwardBatch(std::span<const SyntheticItem* const> items,
                                          std::span<const int> readout,
                                          const GateHook* hook,
                                          bool capture_trace) const;

  void Save(std::ostream& out) const;
  static MicroModel Load(std::istream& in);
  void SaveFile(const std::filesystem::path& path) const;
  static MicroModel LoadFile(const std::filesystem::path& path);

  // Header for traces logged from this model over `vocab`.
  TraceHeader MakeTraceHeader(const std::vector<std::string>& vocab,
                              const std::string& created_at) const;

 private:
  MicroModelConfig config_;
  PlantedGroundTruth truth_;
  std::vector<Block> blocks_;
};

// Applies one intervention to many items with the hook built once.
class HookedRunner {
 public:
  // Validates `spec` against the model; null means no intervention.
  HookedRunner(const MicroModel& model, const InterventionSpec* spec);

  Prediction Run(const Dataset& dataset, const SyntheticItem& item,
                 bool capture_trace = false) const;
  // Items [begin, begin + count) of `dataset`, in order.
  std::vector<Prediction> RunBatch(const Dataset& dataset, std::size_t begin,
                                   std::size_t count, bool capture_trace = false) const;

 private:
  const MicroModel& model_;
  const InterventionSpec* spec_;
  std::optional<GateHook> hook_;
};

// Runs one item, optionally under an intervention (any mode, including
// 2-pass), and decodes the answer back to an emotion.
Prediction ForwardWithHooks(const MicroModel& model, const Dataset& dataset,
                            const SyntheticItem& item,
                            const InterventionSpec* spec,
                            bool capture_trace = false);

// Balanced items, interleaved by emotion so that a prefix of k*|V| items is
// the k-per-emotion pool. Identification and evaluation items draw from
// distinct seed streams. Throws Error(kPrecondition) if items_per_emotion < 1.
Dataset GenerateDataset(const MicroModelConfig& config, const DatasetSpec& spec);

// First `per_emotion` items of every emotion (a prefix of the stream).
Dataset TakePool(const Dataset& dataset, int per_emotion);

struct Overlap {
  double precision = 0.0;
  double recall = 0.0;
};

// Agreement between a mask and the planted set of a model emotion.
Overlap GroundTruthOverlap(const NeuronMask& mask, const PlantedGroundTruth& truth,
                           int emotion);

}  // namespace esn

#endif  // ESN_MICROMODEL_H_

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

#include "esn/micromodel.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "binary_io.h"
#include "esn/digest.h"
#include "esn/error.h"
#include "esn/rng.h"

namespace esn {
namespace {

constexpr char kModelMagic[4] = {'E', 'S', 'N', 'M'};

// Readout leakage of background units per unit of noise_scale, relative to
// the clean planted readout.
constexpr double kReadoutLeak = 2.5;
// Per-token jitter of nuisance features around the item's base content.
constexpr double kNuisanceJitter = 0.5;
// Residual write-back of background units into the nuisance features.
constexpr double kNuisanceWriteBack = 0.5;

double Silu(double u) { return u / (1.0 + std::exp(-u)); }

// Weights are float32-representable so a saved model reloads bit-exactly.
double F32(double x) { return static_cast<double>(static_cast<float>(x)); }

template <typename T>
bool HasType(const nlohmann::json& v) {
  if constexpr (std::is_same_v<T, std::uint64_t>) {
    return v.is_number_unsigned();
  } else if constexpr (std::is_integral_v<T>) {
    return v.is_number_integer();
  } else if constexpr (std::is_floating_point_v<T>) {
    return v.is_number();
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v.is_string();
  } else {
    return true;
  }
}

template <typename T>
void ReadField(const nlohmann::json& j, const char* key, T& out,
               const std::string& path, const char* expected) {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  bool ok = HasType<T>(v);
  if constexpr (std::is_same_v<T, std::vector<int>>) {
    ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const nlohmann::json& x) {
           return x.is_number_integer();
         });
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const nlohmann::json& x) {
           return x.is_string();
         });
  }
  if (ok) {
    try {
      out = v.get<T>();
      return;
    } catch (const nlohmann::json::exception&) {
    }
  }
  throw Error(ErrorKind::kConfig,
              path + "." + key + ": expected " + expected + ", got " + v.dump());
}

void RejectUnknownKeys(const nlohmann::json& j,
                       std::initializer_list<const char*> known,
                       const std::string& path) {
  if (!j.is_object()) {
    throw Error(ErrorKind::kConfig, path + ": expected an object");
  }
  for (const auto& [key, value] : j.items()) {
    const bool ok = std::any_of(known.begin(), known.end(),
                                [&](const char* k) { return key == k; });
    if (!ok) throw Error(ErrorKind::kConfig, path + "." + key + ": unknown field");
  }
}

// Planted index sets per (layer, emotion).
using Placement = std::map<int, std::vector<std::vector<int>>>;

Placement PlacePlants(const MicroModelConfig& config) {
  const int num_emotions = config.num_emotions();
  Placement placement;
  std::set<int> layers(config.planted_layers.begin(), config.planted_layers.end());
  for (const auto& o : config.plant_overrides) layers.insert(o.layer);

  for (int layer : layers) {
    auto& sets = placement[layer];
    sets.assign(num_emotions, {});
    std::vector<bool> fixed(num_emotions, false);
    std::vector<bool> taken(config.gate_width, false);
    for (const auto& o : config.plant_overrides) {
      if (o.layer != layer) continue;
      const int e = config.EmotionIndex(o.emotion);
      sets[e] = o.neurons;
      std::sort(sets[e].begin(), sets[e].end());
      fixed[e] = true;
      for (int n : o.neurons) {
        if (taken[n]) {
          throw Error(ErrorKind::kConstruction,
                      "planted neuron " + std::to_string(n) + " in layer " +
                          std::to_string(layer) +
                          " is assigned to more than one emotion");
        }
        taken[n] = true;
      }
    }
    const bool sampled = std::find(config.planted_layers.begin(),
                                   config.planted_layers.end(),
                                   layer) != config.planted_layers.end();
    if (!sampled) continue;
    std::vector<int> free;
    for (int n = 0; n < config.gate_width; ++n) {
      if (!taken[n]) free.push_back(n);
    }
    int needed = 0;
    for (int e = 0; e < num_emotions; ++e) {
      if (!fixed[e]) needed += config.planted_per_emotion;
    }
    if (needed > static_cast<int>(free.size())) {
      throw Error(ErrorKind::kConstruction,
                  "layer " + std::to_string(layer) + " cannot host " +
                      std::to_string(needed) + " disjoint planted units (" +
                      std::to_string(free.size()) + " free of " +
                      std::to_string(config.gate_width) + ")");
    }
    Rng rng(DeriveSeed(config.seed, "plant/layer/" + std::to_string(layer)));
    const auto picks = rng.SampleWithoutReplacement(free.size(), needed);
    std::size_t next = 0;
    for (int e = 0; e < num_emotions; ++e) {
      if (fixed[e]) continue;
      for (int k = 0; k < config.planted_per_emotion; ++k) {
        sets[e].push_back(free[picks[next++]]);
      }
      std::sort(sets[e].begin(), sets[e].end());
    }
  }
  return placement;
}

}  // namespace

// ------------------------------------------------------------------ config

int MicroModelConfig::EmotionIndex(const std::string& name) const {
  for (int e = 0; e < num_emotions(); ++e) {
    if (emotions[e] == name) return e;
  }
  return -1;
}

void MicroModelConfig::Validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorKind::kConstruction, msg);
  };
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (gate_width < 1) fail("gate_width must be >= 1");
  if (emotions.size() < 2) fail("at least two emotions are required");
  std::set<std::string> unique(emotions.begin(), emotions.end());
  if (unique.size() != emotions.size()) fail("emotion names must be unique");
  if (nuisance_width() < 1) {
    fail("hidden_width " + std::to_string(hidden_width) + " leaves no nuisance " +
         "features; need at least " + std::to_string(2 * num_emotions() + 2));
  }
  if (planted_per_emotion < 0) fail("planted_per_emotion must be >= 0");
  if (planted_per_emotion > gate_width) {
    fail("planted_per_emotion " + std::to_string(planted_per_emotion) +
         " exceeds gate_width " + std::to_string(gate_width));
  }
  for (int l : planted_layers) {
    if (l < 0 || l >= num_layers) fail("planted layer " + std::to_string(l) + " out of range");
  }
  for (const auto& o : plant_overrides) {
    if (EmotionIndex(o.emotion) < 0) fail("override names unknown emotion '" + o.emotion + "'");
    if (o.layer < 0 || o.layer >= num_layers) {
      fail("override layer " + std::to_string(o.layer) + " out of range");
    }
    std::set<int> seen;
    for (int n : o.neurons) {
      if (n < 0 || n >= gate_width) fail("override neuron " + std::to_string(n) + " out of range");
      if (!seen.insert(n).second) fail("override lists neuron " + std::to_string(n) + " twice");
    }
  }
  if (!(planted_gain > 0.0)) fail("planted_gain must be > 0");
  if (!(noise_scale >= 0.0)) fail("noise_scale must be >= 0");
  if (!(background_scale >= 0.0)) fail("background_scale must be >= 0");
  if (tokens_per_item < 1) fail("tokens_per_item must be >= 1");
  if (!(abstain_fraction > 0.0 && abstain_fraction < 1.0)) {
    fail("abstain_fraction must lie in (0, 1)");
  }
}

nlohmann::json MicroModelConfig::ToJson() const {
  nlohmann::json overrides = nlohmann::json::array();
  for (const auto& o : plant_overrides) {
    overrides.push_back({{"emotion", o.emotion}, {"layer", o.layer}, {"neurons", o.neurons}});
  }
  return {{"model_id", model_id},
          {"num_layers", num_layers},
          {"hidden_width", hidden_width},
          {"gate_width", gate_width},
          {"emotions", emotions},
          {"planted_per_emotion", planted_per_emotion},
          {"planted_layers", planted_layers},
          {"plant_overrides", std::move(overrides)},
          {"planted_gain", planted_gain},
          {"noise_scale", noise_scale},
          {"background_scale", background_scale},
          {"tokens_per_item", tokens_per_item},
          {"abstain_fraction", abstain_fraction},
          {"seed", seed}};
}

MicroModelConfig MicroModelConfig::FromJson(const nlohmann::json& j,
                                            const std::string& path) {
  RejectUnknownKeys(j,
                    {"model_id", "num_layers", "hidden_width", "gate_width",
                     "emotions", "planted_per_emotion", "planted_layers",
                     "plant_overrides", "planted_gain", "noise_scale",
                     "background_scale", "tokens_per_item", "abstain_fraction",
                     "seed"},
                    path);
  MicroModelConfig c;
  ReadField(j, "model_id", c.model_id, path, "string");
  ReadField(j, "num_layers", c.num_layers, path, "integer");
  ReadField(j, "hidden_width", c.hidden_width, path, "integer");
  ReadField(j, "gate_width", c.gate_width, path, "integer");
  ReadField(j, "emotions", c.emotions, path, "array of strings");
  ReadField(j, "planted_per_emotion", c.planted_per_emotion, path, "integer");
  ReadField(j, "planted_layers", c.planted_layers, path, "array of integers");
  ReadField(j, "planted_gain", c.planted_gain, path, "number");
  ReadField(j, "noise_scale", c.noise_scale, path, "number");
  ReadField(j, "background_scale", c.background_scale, path, "number");
  ReadField(j, "tokens_per_item", c.tokens_per_item, path, "integer");
  ReadField(j, "abstain_fraction", c.abstain_fraction, path, "number");
  ReadField(j, "seed", c.seed, path, "unsigned integer");
  if (j.contains("plant_overrides")) {
    const auto& arr = j.at("plant_overrides");
    if (!arr.is_array()) {
      throw Error(ErrorKind::kConfig, path + ".plant_overrides: expected array");
    }
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string p = path + ".plant_overrides[" + std::to_string(i) + "]";
      RejectUnknownKeys(arr[i], {"emotion", "layer", "neurons"}, p);
      PlantOverride o;
      ReadField(arr[i], "emotion", o.emotion, p, "string");
      ReadField(arr[i], "layer", o.layer, p, "integer");
      ReadField(arr[i], "neurons", o.neurons, p, "array of integers");
      c.plant_overrides.push_back(std::move(o));
    }
  }
  return c;
}

// ------------------------------------------------------------ ground truth

std::vector<int> PlantedGroundTruth::Indices(int emotion, int layer) const {
  std::vector<int> out;
  for (const auto& p : neurons) {
    if (p.emotion == emotion && p.layer == layer) out.push_back(p.neuron);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t PlantedGroundTruth::Count(int emotion) const {
  return static_cast<std::size_t>(std::count_if(
      neurons.begin(), neurons.end(),
      [emotion](const PlantedNeuron& p) { return p.emotion == emotion; }));
}

NeuronMask PlantedGroundTruth::AsMask(int emotion,
                                      const std::string& model_id) const {
  NeuronMask mask;
  mask.model_id = model_id;
  mask.method = SelectorMethod::kTruth;
  mask.emotion = emotions.at(emotion);
  for (const auto& p : neurons) {
    if (p.emotion == emotion) mask.layers[p.layer].push_back(p.neuron);
  }
  for (auto& [layer, idx] : mask.layers) std::sort(idx.begin(), idx.end());
  return mask;
}

// ------------------------------------------------------------------- model

MicroModel MicroModel::Build(const MicroModelConfig& config) {
  config.Validate();
  MicroModel model;
  model.config_ = config;
  model.truth_.emotions = config.emotions;

  const int num_emotions = config.num_emotions();
  const int d = config.hidden_width;
  const int width = config.gate_width;
  const int bias = num_emotions;
  const int nuisance_begin = num_emotions + 1;
  const int nuisance = config.nuisance_width();
  const int readout_begin = d - num_emotions;

  const Placement placement = PlacePlants(config);
  std::vector<std::size_t> planted_total(num_emotions, 0);
  for (const auto& [layer, sets] : placement) {
    for (int e = 0; e < num_emotions; ++e) planted_total[e] += sets[e].size();
  }

  const double clean_readout = Silu(config.planted_gain);
  const double leak_sd = config.noise_scale * kReadoutLeak * clean_readout /
                         std::sqrt(static_cast<double>(config.num_layers) * width);
  const double nuisance_sd = 1.0 / std::sqrt(static_cast<double>(nuisance));

  model.blocks_.resize(config.num_layers);
  for (int l = 0; l < config.num_layers; ++l) {
    Block& block = model.blocks_[l];
    block.gate = RowMatrix::Zero(width, d);
    block.up = RowMatrix::Zero(width, d);
    block.down = RowMatrix::Zero(d, width);

    std::vector<int> owner(width, -1);
    auto it = placement.find(l);
    if (it != placement.end()) {
      for (int e = 0; e < num_emotions; ++e) {
        for (int n : it->second[e]) owner[n] = e;
      }
    }

    Rng rng(DeriveSeed(config.seed, "weights/layer/" + std::to_string(l)));
    for (int n = 0; n < width; ++n) {
      // Draw the background weights for every unit so the random stream
      // does not depend on where plants sit.
      const double bias_w = config.background_scale * rng.Normal();
      std::vector<double> gate_w(nuisance), up_w(nuisance), down_w(nuisance);
      for (int j = 0; j < nuisance; ++j) {
        gate_w[j] = config.background_scale * nuisance_sd * rng.Normal();
        up_w[j] = nuisance_sd * rng.Normal();
        down_w[j] = kNuisanceWriteBack / std::sqrt(static_cast<double>(width)) *
                    rng.Normal();
      }
      std::vector<double> leak(num_emotions);
      for (int e = 0; e < num_emotions; ++e) leak[e] = leak_sd * rng.Normal();

      const int e = owner[n];
      if (e >= 0) {
        const double strength = F32(config.planted_gain);
        block.gate(n, e) = strength;
        block.up(n, bias) = 1.0;
        block.down(readout_begin + e, n) =
            F32(1.0 / static_cast<double>(planted_total[e]));
        model.truth_.neurons.push_back({e, l, n, strength});
        continue;
      }
      block.gate(n, bias) = F32(bias_w);
      for (int j = 0; j < nuisance; ++j) {
        block.gate(n, nuisance_begin + j) = F32(gate_w[j]);
        block.up(n, nuisance_begin + j) = F32(up_w[j]);
        block.down(nuisance_begin + j, n) = F32(down_w[j]);
      }
      for (int f = 0; f < num_emotions; ++f) {
        block.down(readout_begin + f, n) = F32(leak[f]);
      }
    }
  }
  std::sort(model.truth_.neurons.begin(), model.truth_.neurons.end(),
            [](const PlantedNeuron& a, const PlantedNeuron& b) {
              return std::tie(a.emotion, a.layer, a.neuron) <
                     std::tie(b.emotion, b.layer, b.neuron);
            });
  return model;
}

double MicroModel::abstain_level() const {
  return config_.abstain_fraction * Silu(config_.planted_gain);
}

RowMatrix MicroModel::BlockOutput(int layer, const RowMatrix& x) const {
  const Block& b = blocks_.at(layer);
  const RowMatrix u = x * b.gate.transpose();
  const RowMatrix v = x * b.up.transpose();
  const RowMatrix g = u.unaryExpr([](double z) { return Silu(z); });
  return g.cwiseProduct(v) * b.down.transpose();
}

ForwardOutput MicroModel::Forward(const SyntheticItem& item,
                                  std::span<const int> readout,
                                  const GateHook* hook,
                                  bool capture_trace) const {
  const SyntheticItem* one[] = {&item};
  return std::move(ForwardBatch(one, readout, hook, capture_trace).front());
}

std::vector<ForwardOutput> MicroModel::ForwardBatch(
    std::span<const SyntheticItem* const> items, std::span<const int> readout,
    const GateHook* hook, bool capture_trace) const {
  const int d = config_.hidden_width;
  std::vector<Eigen::Index> offsets(items.size() + 1, 0);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const RowMatrix& f = items[i]->features;
    if (f.cols() != d || f.rows() < 1) {
      throw Error(ErrorKind::kShape,
                  "item " + std::to_string(items[i]->id) + " has feature width " +
                      std::to_string(f.cols()) + ", model expects " + std::to_string(d));
    }
    offsets[i + 1] = offsets[i] + f.rows();
  }
  std::vector<ForwardOutput> outs(items.size());
  if (items.empty()) return outs;

  RowMatrix x(offsets.back(), d);
  for (std::size_t i = 0; i < items.size(); ++i) {
    x.middleRows(offsets[i], items[i]->features.rows()) = items[i]->features;
    if (capture_trace) {
      auto& trace = outs[i].trace.emplace();
      trace.example_id = items[i]->id;
      trace.emotion_id = items[i]->emotion;
      trace.token_mask.assign(static_cast<std::size_t>(items[i]->features.rows()), 1);
      trace.gates.resize(blocks_.size());
    }
  }

  RowMatrix u, v, g;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block& b = blocks_[l];
    u.noalias() = x * b.gate.transpose();
    v.noalias() = x * b.up.transpose();
    g = u.unaryExpr([](double z) { return Silu(z); });
    const int width = static_cast<int>(g.cols());
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto rows = static_cast<std::size_t>(offsets[i + 1] - offsets[i]);
      std::span<double> values(g.data() + offsets[i] * width, rows * width);
      if (capture_trace) {
        auto& dst = outs[i].trace->gates[l];
        dst.assign(values.begin(), values.end());
      }
      if (hook != nullptr) {
        GateBlock block{values, static_cast<int>(rows), width, {}};
        (*hook)(static_cast<int>(l), block);
      }
    }
    x.noalias() += g.cwiseProduct(v) * b.down.transpose();
  }

  const int readout_begin = d - config_.num_emotions();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const SyntheticItem& item = *items[i];
    ForwardOutput& out = outs[i];
    const auto rows = x.middleRows(offsets[i], item.features.rows());
    const std::size_t options = item.option_order.size();
    out.option_logits.resize(options);
    int best = -1;
    for (std::size_t s = 0; s < options; ++s) {
      const int m = readout[static_cast<std::size_t>(item.option_order[s])];
      out.option_logits[s] = rows.col(readout_begin + m).mean();
      if (best < 0 || out.option_logits[s] > out.option_logits[best]) {
        best = static_cast<int>(s);
      }
    }
    if (best < 0 || !(out.option_logits[best] > abstain_level())) {
      out.answer = kAbstainAnswer;
    } else {
      out.answer = std::to_string(best + 1);
    }
  }
  return outs;
}

TraceHeader MicroModel::MakeTraceHeader(const std::vector<std::string>& vocab,
                                        const std::string& created_at) const {
  TraceHeader h;
  h.model_id = config_.model_id;
  h.gate_widths = gate_widths();
  h.emotion_vocab = vocab;
  h.created_at = created_at;
  h.metadata = {{"logged_positions", "all item tokens"},
                {"activation", "silu_gate"},
                {"precision", "float32"}};
  return h;
}

void MicroModel::Save(std::ostream& out) const {
  nlohmann::json truth = nlohmann::json::array();
  for (const auto& p : truth_.neurons) {
    truth.push_back({{"emotion", truth_.emotions[p.emotion]},
                     {"layer", p.layer},
                     {"neuron", p.neuron},
                     {"strength", p.strength}});
  }
  const std::string json =
      nlohmann::json{{"format", "MODEL-v1"}, {"config", config_.ToJson()},
                     {"ground_truth", std::move(truth)}}
          .dump();
  internal::ByteWriter bytes(out);
  bytes.Put(kModelMagic, sizeof(kModelMagic));
  bytes.PutUint<std::uint32_t>(kModelFormatVersion);
  bytes.PutUint<std::uint32_t>(static_cast<std::uint32_t>(json.size()));
  bytes.Put(json.data(), json.size());
  for (const Block& b : blocks_) {
    for (const RowMatrix* m : {&b.gate, &b.up, &b.down}) {
      for (Eigen::Index i = 0; i < m->size(); ++i) {
        bytes.PutF32(static_cast<float>(m->data()[i]));
      }
    }
  }
}

MicroModel MicroModel::Load(std::istream& in) {
  internal::ByteReader bytes(in);
  char magic[4];
  bytes.Get(magic, sizeof(magic), "magic");
  if (!std::equal(magic, magic + 4, kModelMagic)) {
    throw FormatError("bad magic, expected ESNM", 0);
  }
  const auto version = bytes.GetUint<std::uint32_t>("version");
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model version " + std::to_string(version), 4);
  }
  const auto len = bytes.GetUint<std::uint32_t>("header length");
  const std::uint64_t header_offset = bytes.offset();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.GetString(len, "header JSON"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid model header: ") + e.what(), header_offset);
  }
  MicroModel model;
  try {
    model.config_ = MicroModelConfig::FromJson(header.at("config"));
    model.config_.Validate();
    model.truth_.emotions = model.config_.emotions;
    for (const auto& p : header.at("ground_truth")) {
      const int e = model.config_.EmotionIndex(p.at("emotion").get<std::string>());
      if (e < 0) throw FormatError("ground truth names unknown emotion", header_offset);
      model.truth_.neurons.push_back({e, p.at("layer").get<int>(),
                                      p.at("neuron").get<int>(),
                                      p.at("strength").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model header: ") + e.what(), header_offset);
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(e.what(), header_offset);
  }
  const int d = model.config_.hidden_width;
  const int width = model.config_.gate_width;
  model.blocks_.resize(model.config_.num_layers);
  std::vector<float> buf;
  for (Block& b : model.blocks_) {
    b.gate.resize(width, d);
    b.up.resize(width, d);
    b.down.resize(d, width);
    for (RowMatrix* m : {&b.gate, &b.up, &b.down}) {
      buf.resize(static_cast<std::size_t>(m->size()));
      bytes.GetF32s(buf, "weights");
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = buf[i];
    }
  }
  return model;
}

void MicroModel::SaveFile(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  Save(out);
}

MicroModel MicroModel::LoadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return Load(in);
}

// ----------------------------------------------------------------- running

HookedRunner::HookedRunner(const MicroModel& model, const InterventionSpec* spec)
    : model_(model), spec_(spec) {
  if (spec_ == nullptr) return;
  spec_->Validate(model_.gate_widths());
  if (spec_->mode != InterventionMode::kInject2Pass) hook_ = MakeGateHook(*spec_);
}

Prediction HookedRunner::Run(const Dataset& dataset, const SyntheticItem& item,
                             bool capture_trace) const {
  const std::vector<std::string> options = dataset.OptionNames(item);
  Prediction p;
  auto decode = [&](const std::string& text) -> std::optional<int> {
    const AnswerParseResult parse = NormalizeAnswer(text, options);
    if (!parse.valid()) return std::nullopt;
    return item.option_order[static_cast<std::size_t>(*parse.option - 1)];
  };

  if (spec_ != nullptr && spec_->mode == InterventionMode::kInject2Pass) {
    std::optional<ExampleTrace> first_trace;
    auto forward = [&](const GateHook* hook) {
      ForwardOutput out = model_.Forward(item, dataset.readout, hook,
                                         capture_trace && !first_trace);
      if (out.trace) first_trace = std::move(out.trace);
      return out.answer;
    };
    const TwoPassResult r = Run2Pass(forward, decode, spec_->masks, spec_->alpha);
    p.answer = r.answer;
    p.invalid_first_pass = r.invalid_first_pass;
    p.trace = std::move(first_trace);
  } else {
    ForwardOutput out = model_.Forward(item, dataset.readout,
                                       hook_ ? &*hook_ : nullptr, capture_trace);
    p.answer = std::move(out.answer);
    p.trace = std::move(out.trace);
  }
  p.parse = NormalizeAnswer(p.answer, options);
  p.emotion = decode(p.answer);
  return p;
}

std::vector<Prediction> HookedRunner::RunBatch(const Dataset& dataset, std::size_t begin,
                                             std::size_t count, bool capture_trace) const {
  if (begin + count > dataset.items.size()) {
    throw Error(ErrorKind::kPrecondition, "batch runs past the end of the dataset");
  }
  std::vector<Prediction> preds;
  preds.reserve(count);
  if (spec_ != nullptr && spec_->mode == InterventionMode::kInject2Pass) {
    for (std::size_t i = begin; i < begin + count; ++i) {
      preds.push_back(Run(dataset, dataset.items[i], capture_trace));
    }
    return preds;
  }
  std::vector<const SyntheticItem*> items;
  for (std::size_t i = begin; i < begin + count; ++i) items.push_back(&dataset.items[i]);
  std::vector<ForwardOutput> outs = model_.ForwardBatch(
      items, dataset.readout, hook_ ? &*hook_ : nullptr, capture_trace);
  for (std::size_t k = 0; k < count; ++k) {
    const SyntheticItem& item = *items[k];
    Prediction p;
    p.answer = std::move(outs[k].answer);
    p.trace = std::move(outs[k].trace);
    p.parse = NormalizeAnswer(p.answer, dataset.OptionNames(item));
    if (p.parse.valid()) {
      p.emotion = item.option_order[static_cast<std::size_t>(*p.parse.option - 1)];
    }
    preds.push_back(std::move(p));
  }
  return preds;
}

Prediction ForwardWithHooks(const MicroModel& model, const Dataset& dataset,
                            const SyntheticItem& item,
                            const InterventionSpec* spec, bool capture_trace) {
  return HookedRunner(model, spec).Run(dataset, item, capture_trace);
}

// ---------------------------------------------------------------- datasets

std::string_view SplitName(Split split) {
  return split == Split::kIdentification ? "identification" : "evaluation";
}

nlohmann::json DatasetSpec::ToJson() const {
  return {{"name", name},
          {"split", SplitName(split)},
          {"emotions", emotions},
          {"items_per_emotion", items_per_emotion},
          {"seed", seed}};
}

DatasetSpec DatasetSpec::FromJson(const nlohmann::json& j, const std::string& path) {
  RejectUnknownKeys(j, {"name", "split", "emotions", "items_per_emotion", "seed"}, path);
  DatasetSpec s;
  ReadField(j, "name", s.name, path, "string");
  std::string split = std::string(SplitName(s.split));
  ReadField(j, "split", split, path, "string");
  if (split == "identification") {
    s.split = Split::kIdentification;
  } else if (split == "evaluation") {
    s.split = Split::kEvaluation;
  } else {
    throw Error(ErrorKind::kConfig,
                path + ".split: expected \"identification\" or \"evaluation\"");
  }
  ReadField(j, "emotions", s.emotions, path, "array of strings");
  ReadField(j, "items_per_emotion", s.items_per_emotion, path, "integer");
  ReadField(j, "seed", s.seed, path, "unsigned integer");
  return s;
}

std::vector<std::string> Dataset::OptionNames(const SyntheticItem& item) const {
  std::vector<std::string> names;
  names.reserve(item.option_order.size());
  for (int v : item.option_order) names.push_back(vocab[static_cast<std::size_t>(v)]);
  return names;
}

std::vector<int> Dataset::CountPerEmotion() const {
  std::vector<int> counts(vocab.size(), 0);
  for (const auto& item : items) ++counts[static_cast<std::size_t>(item.emotion)];
  return counts;
}

Dataset GenerateDataset(const MicroModelConfig& config, const DatasetSpec& spec) {
  if (spec.items_per_emotion < 1) {
    throw Error(ErrorKind::kPrecondition,
                "items_per_emotion must be >= 1, got " +
                    std::to_string(spec.items_per_emotion));
  }
  Dataset ds;
  ds.spec = spec;
  ds.vocab = spec.emotions.empty() ? config.emotions : spec.emotions;
  std::set<std::string> unique(ds.vocab.begin(), ds.vocab.end());
  if (unique.size() != ds.vocab.size()) {
    throw Error(ErrorKind::kConfig, "dataset emotions must be unique");
  }
  for (const auto& name : ds.vocab) {
    const int m = config.EmotionIndex(name);
    if (m < 0) {
      throw Error(ErrorKind::kConfig,
                  "dataset emotion '" + name + "' is not a model emotion");
    }
    ds.readout.push_back(m);
  }

  const int num_vocab = static_cast<int>(ds.vocab.size());
  const int d = config.hidden_width;
  const int num_emotions = config.num_emotions();
  const int nuisance_begin = num_emotions + 1;
  const int nuisance = config.nuisance_width();
  const int tokens = config.tokens_per_item;
  const std::string split(SplitName(spec.split));

  ds.items.reserve(static_cast<std::size_t>(spec.items_per_emotion) * num_vocab);
  for (int i = 0; i < spec.items_per_emotion; ++i) {
    for (int v = 0; v < num_vocab; ++v) {
      Rng rng(DeriveSeed(spec.seed, split + "/" + ds.vocab[v] + "/" + std::to_string(i)));
      SyntheticItem item;
      item.id = static_cast<std::uint64_t>(i) * num_vocab + v;
      item.emotion = v;
      item.features = RowMatrix::Zero(tokens, d);
      std::vector<double> content(nuisance);
      for (double& c : content) c = rng.Normal();
      for (int t = 0; t < tokens; ++t) {
        for (int m = 0; m < num_emotions; ++m) {
          const double signal = m == ds.readout[v] ? 1.0 : 0.0;
          item.features(t, m) = signal + config.noise_scale * rng.Normal();
        }
        item.features(t, num_emotions) = 1.0;
        for (int j = 0; j < nuisance; ++j) {
          item.features(t, nuisance_begin + j) =
              content[j] + kNuisanceJitter * rng.Normal();
        }
      }
      item.option_order = rng.Permutation(num_vocab);
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

Dataset TakePool(const Dataset& dataset, int per_emotion) {
  if (per_emotion < 1) {
    throw Error(ErrorKind::kPrecondition,
                "identification pool needs at least 1 item per emotion");
  }
  if (per_emotion > dataset.spec.items_per_emotion) {
    throw Error(ErrorKind::kPrecondition,
                "pool of " + std::to_string(per_emotion) +
                    " per emotion exceeds the generated " +
                    std::to_string(dataset.spec.items_per_emotion));
  }
  Dataset pool = dataset;
  pool.spec.items_per_emotion = per_emotion;
  pool.items.resize(static_cast<std::size_t>(per_emotion) * dataset.vocab.size());
  return pool;
}

Overlap GroundTruthOverlap(const NeuronMask& mask, const PlantedGroundTruth& truth,
                           int emotion) {
  std::size_t hits = 0;
  std::size_t planted = 0;
  for (const auto& p : truth.neurons) {
    if (p.emotion != emotion) continue;
    ++planted;
    if (mask.Contains(p.layer, p.neuron)) ++hits;
  }
  Overlap o;
  const std::size_t selected = mask.size();
  if (selected > 0) o.precision = static_cast<double>(hits) / static_cast<double>(selected);
  if (planted > 0) o.recall = static_cast<double>(hits) / static_cast<double>(planted);
  return o;
}

}  // namespace esn

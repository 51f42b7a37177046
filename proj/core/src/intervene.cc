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

#include "esn/intervene.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>

#include "esn/error.h"

namespace esn {
namespace {

void RequireAlpha(double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw Error(ErrorKind::kParameter,
                "gain alpha must be finite and >= 0, got " + std::to_string(alpha));
  }
}

void RequireTau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorKind::kParameter,
                "temperature tau must be finite and > 0, got " + std::to_string(tau));
  }
}

void RequireFits(std::span<const int> indices, std::size_t width, int layer) {
  for (int n : indices) {
    if (n < 0 || static_cast<std::size_t>(n) >= width) {
      throw Error(ErrorKind::kMaskMismatch,
                  "mask index " + std::to_string(n) + " in layer " +
                      std::to_string(layer) + " exceeds gate width " +
                      std::to_string(width));
    }
  }
}

// (neuron, multiplicative factor) pairs for one layer.
using Scaling = std::vector<std::pair<int, double>>;

void RequireFits(const Scaling& scaling, std::size_t width, int layer) {
  for (const auto& [n, f] : scaling) {
    const int index[] = {n};
    RequireFits(index, width, layer);
  }
}

Scaling UniformScaling(std::span<const int> indices, double factor) {
  Scaling out;
  out.reserve(indices.size());
  for (int n : indices) out.emplace_back(n, factor);
  return out;
}

std::vector<int> UnionAt(std::span<const NeuronMask> masks, int layer) {
  std::vector<int> all;
  for (const auto& m : masks) {
    const auto idx = m.indices(layer);
    all.insert(all.end(), idx.begin(), idx.end());
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

Scaling MixScaling(std::span<const NeuronMask> masks, int layer,
                   std::span<const double> weights, double alpha) {
  std::map<int, double> strongest;
  for (std::size_t e = 0; e < masks.size(); ++e) {
    const double factor = 1.0 + alpha * weights[e];
    for (int n : masks[e].indices(layer)) {
      auto [it, inserted] = strongest.emplace(n, factor);
      if (!inserted) it->second = std::max(it->second, factor);
    }
  }
  return Scaling(strongest.begin(), strongest.end());
}

void ApplyScaling(std::span<double> row, const Scaling& scaling) {
  for (const auto& [n, factor] : scaling) {
    row[n] = factor == 0.0 ? 0.0 : row[n] * factor;
  }
}

std::vector<double> Scaled(std::span<const double> gate, int layer,
                           const Scaling& scaling) {
  RequireFits(scaling, gate.size(), layer);
  std::vector<double> out(gate.begin(), gate.end());
  ApplyScaling(out, scaling);
  return out;
}

void ApplyToBlock(GateBlock& block, int layer, const Scaling& scaling) {
  if (scaling.empty()) return;
  RequireFits(scaling, static_cast<std::size_t>(block.width), layer);
  for (int t = 0; t < block.tokens; ++t) ApplyScaling(block.row(t), scaling);
}

}  // namespace

std::string_view ModeName(InterventionMode mode) {
  switch (mode) {
    case InterventionMode::kAblate:
      return "ablate";
    case InterventionMode::kSteer:
      return "steer";
    case InterventionMode::kInject2Pass:
      return "inject_2pass";
    case InterventionMode::kInjectMix:
      return "inject_mix";
    case InterventionMode::kInjectUnion:
      return "inject_union";
  }
  return "?";
}

InterventionMode ParseMode(std::string_view name) {
  if (name == "ablate") return InterventionMode::kAblate;
  if (name == "steer") return InterventionMode::kSteer;
  if (name == "2pass" || name == "inject_2pass") return InterventionMode::kInject2Pass;
  if (name == "mix" || name == "inject_mix") return InterventionMode::kInjectMix;
  if (name == "union" || name == "inject_union") return InterventionMode::kInjectUnion;
  throw Error(ErrorKind::kConfig,
              "unknown intervention mode '" + std::string(name) +
                  "' (expected ablate, steer, 2pass, mix, union)");
}

bool IsInjection(InterventionMode mode) {
  return mode == InterventionMode::kInject2Pass ||
         mode == InterventionMode::kInjectMix ||
         mode == InterventionMode::kInjectUnion;
}

std::vector<double> AblateGate(std::span<const double> gate, int layer,
                               const NeuronMask& mask) {
  return Scaled(gate, layer, UniformScaling(mask.indices(layer), 0.0));
}

std::vector<double> SteerGate(std::span<const double> gate, int layer,
                              const NeuronMask& mask, double alpha) {
  RequireAlpha(alpha);
  return Scaled(gate, layer, UniformScaling(mask.indices(layer), 1.0 + alpha));
}

std::vector<double> InjectUnion(std::span<const double> gate, int layer,
                                std::span<const NeuronMask> masks,
                                double alpha) {
  RequireAlpha(alpha);
  return Scaled(gate, layer, UniformScaling(UnionAt(masks, layer), 1.0 + alpha));
}

std::vector<double> MixWeights(const GateBlock& block, int layer,
                               std::span<const NeuronMask> masks, double tau,
                               bool rectified) {
  RequireTau(tau);
  std::vector<double> q(masks.size(), 0.0);
  for (std::size_t e = 0; e < masks.size(); ++e) {
    const auto idx = masks[e].indices(layer);
    if (idx.empty()) continue;
    RequireFits(idx, static_cast<std::size_t>(block.width), layer);
    double sum = 0.0;
    std::size_t count = 0;
    for (int t = 0; t < block.tokens; ++t) {
      if (!block.valid(t)) continue;
      const auto row = block.row(t);
      for (int n : idx) sum += rectified ? std::max(row[n], 0.0) : row[n];
      count += idx.size();
    }
    q[e] = count == 0 ? 0.0 : sum / static_cast<double>(count);
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : q) peak = std::max(peak, v / tau);
  std::vector<double> w(q.size());
  double total = 0.0;
  for (std::size_t e = 0; e < q.size(); ++e) {
    w[e] = std::exp(q[e] / tau - peak);
    total += w[e];
  }
  for (double& v : w) v /= total;
  return w;
}

std::vector<double> InjectMix(std::span<const double> gate, int layer,
                              std::span<const NeuronMask> masks,
                              std::span<const double> weights, double alpha) {
  RequireAlpha(alpha);
  if (weights.size() != masks.size()) {
    throw Error(ErrorKind::kParameter, "one mixture weight per mask required");
  }
  return Scaled(gate, layer, MixScaling(masks, layer, weights, alpha));
}

void InterventionSpec::Validate(std::span<const int> gate_widths) const {
  RequireAlpha(alpha);
  if (mode == InterventionMode::kInjectMix) RequireTau(tau);
  if (mode == InterventionMode::kAblate || mode == InterventionMode::kSteer) {
    if (masks.size() != 1) {
      throw Error(ErrorKind::kConfig, std::string(ModeName(mode)) +
                                          " takes exactly one mask, got " +
                                          std::to_string(masks.size()));
    }
  } else if (masks.empty()) {
    throw Error(ErrorKind::kConfig,
                std::string(ModeName(mode)) + " needs one mask per emotion");
  }
  for (const auto& m : masks) {
    if (m.model_id != masks.front().model_id) {
      throw Error(ErrorKind::kMaskMismatch,
                  "masks come from different models ('" +
                      masks.front().model_id + "' vs '" + m.model_id + "')");
    }
    ValidateMask(m, gate_widths);
  }
  if (mode == InterventionMode::kInjectMix) {
    for (const auto& m : masks) {
      if (m.empty()) {
        throw Error(ErrorKind::kConfig, "mix injection: mask for emotion '" +
                                            m.emotion + "' is empty");
      }
    }
  }
}

nlohmann::json InterventionSpec::ToJson() const {
  nlohmann::json j{{"mode", ModeName(mode)}, {"alpha", alpha}};
  if (mode == InterventionMode::kInjectMix) {
    j["tau"] = tau;
    j["rectified_mix"] = rectified_mix;
  }
  nlohmann::json mask_refs = nlohmann::json::array();
  for (const auto& m : masks) {
    mask_refs.push_back({{"method", MethodName(m.method)},
                         {"emotion", m.emotion},
                         {"ratio", m.ratio},
                         {"size", m.size()}});
  }
  j["masks"] = std::move(mask_refs);
  return j;
}

GateHook MakeGateHook(const InterventionSpec& spec) {
  RequireAlpha(spec.alpha);
  switch (spec.mode) {
    case InterventionMode::kAblate:
    case InterventionMode::kSteer: {
      const double factor =
          spec.mode == InterventionMode::kAblate ? 0.0 : 1.0 + spec.alpha;
      auto mask = std::make_shared<const NeuronMask>(spec.masks.at(0));
      return [mask, factor](int layer, GateBlock& block) {
        ApplyToBlock(block, layer, UniformScaling(mask->indices(layer), factor));
      };
    }
    case InterventionMode::kInjectUnion: {
      auto masks = std::make_shared<const std::vector<NeuronMask>>(spec.masks);
      const double factor = 1.0 + spec.alpha;
      return [masks, factor](int layer, GateBlock& block) {
        ApplyToBlock(block, layer, UniformScaling(UnionAt(*masks, layer), factor));
      };
    }
    case InterventionMode::kInjectMix: {
      RequireTau(spec.tau);
      auto masks = std::make_shared<const std::vector<NeuronMask>>(spec.masks);
      const double alpha = spec.alpha;
      const double tau = spec.tau;
      const bool rectified = spec.rectified_mix;
      return [masks, alpha, tau, rectified](int layer, GateBlock& block) {
        const bool any = std::any_of(
            masks->begin(), masks->end(),
            [layer](const NeuronMask& m) { return !m.indices(layer).empty(); });
        if (!any) return;
        const auto w = MixWeights(block, layer, *masks, tau, rectified);
        ApplyToBlock(block, layer, MixScaling(*masks, layer, w, alpha));
      };
    }
    case InterventionMode::kInject2Pass:
      break;
  }
  throw Error(ErrorKind::kPrecondition,
              "2-pass injection is not a single-pass hook; use Run2Pass");
}

TwoPassResult Run2Pass(const HookedForward& forward,
                       const AnswerDecoder& decode,
                       std::span<const NeuronMask> masks, double alpha) {
  RequireAlpha(alpha);
  TwoPassResult result;
  result.first_answer = forward(nullptr);
  result.first_emotion = decode(result.first_answer);
  if (!result.first_emotion || *result.first_emotion < 0 ||
      static_cast<std::size_t>(*result.first_emotion) >= masks.size()) {
    result.invalid_first_pass = true;
    result.answer = forward(nullptr);
    return result;
  }
  InterventionSpec steer;
  steer.mode = InterventionMode::kSteer;
  steer.masks = {masks[static_cast<std::size_t>(*result.first_emotion)]};
  steer.alpha = alpha;
  const GateHook hook = MakeGateHook(steer);
  result.answer = forward(&hook);
  return result;
}

}  // namespace esn

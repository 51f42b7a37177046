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

#ifndef ESN_INTERVENE_H_
#define ESN_INTERVENE_H_

// Inference-time transforms of SwiGLU gate vectors g = SiLU(u), applied
// before the product g * v:
//
//   ablate   g_n <- 0                      for n in I_l
//   steer    g_n <- (1 + alpha) g_n        for n in I_l
//   union    g_n <- (1 + alpha) g_n        for n in U_l = union_e I_l^(e)
//   mix      g_n <- max_{e: n in I_l^(e)} (1 + alpha w_l^(e)) g_n
//            w_l = softmax(q_l / tau), q_l^(e) = mean over valid tokens and
//            over n in I_l^(e) of g_{l,t,n}
//   2-pass   unintervened pass -> predicted emotion e^, then steer with
//            the mask of e^
//
// Negative gate values are scaled like positive ones.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "esn/mask.h"

namespace esn {

enum class InterventionMode { kAblate, kSteer, kInject2Pass, kInjectMix, kInjectUnion };

std::string_view ModeName(InterventionMode mode);
// Accepts "ablate", "steer", "2pass", "mix", "union" and the inject_*
// spellings. Throws Error(kConfig).
InterventionMode ParseMode(std::string_view name);
bool IsInjection(InterventionMode mode);

// One layer's gate activations, T x D token-major, with the validity mask.
struct GateBlock {
  std::span<double> values;
  int tokens = 0;
  int width = 0;
  std::span<const std::uint8_t> token_mask;  // Empty means all valid.

  std::span<double> row(int t) const {
    return values.subspan(static_cast<std::size_t>(t) * width, width);
  }
  bool valid(int t) const { return token_mask.empty() || token_mask[t] != 0; }
};

std::vector<double> AblateGate(std::span<const double> gate, int layer,
                               const NeuronMask& mask);

// Throws Error(kParameter) for alpha < 0.
std::vector<double> SteerGate(std::span<const double> gate, int layer,
                              const NeuronMask& mask, double alpha);

std::vector<double> InjectUnion(std::span<const double> gate, int layer,
                                std::span<const NeuronMask> masks, double alpha);

// Mixture weights for one layer from its current activations. An emotion
// whose mask is empty at this layer gets evidence q = 0. Throws
// Error(kParameter) for tau <= 0.
std::vector<double> MixWeights(const GateBlock& block, int layer,
                               std::span<const NeuronMask> masks, double tau,
                               bool rectified = false);

std::vector<double> InjectMix(std::span<const double> gate, int layer,
                              std::span<const NeuronMask> masks,
                              std::span<const double> weights, double alpha);

struct InterventionSpec {
  InterventionMode mode = InterventionMode::kAblate;
  // Ablate/steer: exactly one mask. Injections: one mask per emotion, in
  // vocabulary order.
  std::vector<NeuronMask> masks;
  double alpha = 0.0;
  double tau = 0.5;
  // Mix evidence from max(g, 0) instead of raw g.
  bool rectified_mix = false;

  // Checks parameter ranges, mask counts, a shared model_id, and that every
  // mask fits `gate_widths` (Error(kMaskMismatch) otherwise).
  void Validate(std::span<const int> gate_widths) const;

  nlohmann::json ToJson() const;
};

// Callback run on each layer's gate block before g * v.
using GateHook = std::function<void(int layer, GateBlock& block)>;

// Builds the per-layer hook for every mode except 2-pass, which needs two
// forward passes (see Run2Pass).
GateHook MakeGateHook(const InterventionSpec& spec);

// One forward pass over a bound item. `hook` is null for the unintervened
// model. Returns the generated answer text.
using HookedForward = std::function<std::string(const GateHook* hook)>;

// Maps answer text to an emotion index, or nullopt if it cannot be parsed.
using AnswerDecoder = std::function<std::optional<int>(const std::string&)>;

struct TwoPassResult {
  std::string first_answer;
  std::optional<int> first_emotion;
  std::string answer;            // Final (pass-2) answer text.
  bool invalid_first_pass = false;
};

// Pass 1 unintervened; pass 2 steers with masks[e^] where e^ is the decoded
// pass-1 emotion. When pass 1 is unparseable or e^ has no mask, pass 2 runs
// unintervened and invalid_first_pass is set.
TwoPassResult Run2Pass(const HookedForward& forward,
                       const AnswerDecoder& decode,
                       std::span<const NeuronMask> masks, double alpha);

}  // namespace esn

#endif  // ESN_INTERVENE_H_

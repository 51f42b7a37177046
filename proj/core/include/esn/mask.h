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

#ifndef ESN_MASK_H_
#define ESN_MASK_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace esn {

// kTruth tags planted ground-truth masks; it is not a selector.
enum class SelectorMethod { kLap, kLape, kMad, kCas, kRnd, kTruth };

inline constexpr SelectorMethod kAllMethods[] = {
    SelectorMethod::kRnd, SelectorMethod::kLap, SelectorMethod::kLape,
    SelectorMethod::kMad, SelectorMethod::kCas};

std::string_view MethodName(SelectorMethod method);
// Case-insensitive. Throws Error(kConfig) for unknown names.
SelectorMethod ParseMethod(std::string_view name);

struct MaskProvenance {
  std::string stats_file;
  std::vector<std::uint64_t> pool_sizes_per_emotion;
  std::string created_at;

  friend bool operator==(const MaskProvenance&, const MaskProvenance&) = default;
};

// Per-layer index sets I_l selected for one (method, emotion). The unit
// exchanged between identification and intervention.
struct NeuronMask {
  std::string model_id;
  SelectorMethod method = SelectorMethod::kCas;
  std::string emotion;  // Empty for emotion-agnostic (RND) masks.
  double ratio = 0.0;
  std::optional<std::uint64_t> seed;  // RND only.
  // Layer -> strictly increasing neuron indices. Layers without selected
  // neurons are absent.
  std::map<int, std::vector<int>> layers;
  MaskProvenance provenance;

  std::size_t size() const;
  bool empty() const { return size() == 0; }
  bool Contains(int layer, int neuron) const;
  // Indices for `layer`; empty span when none are selected.
  std::span<const int> indices(int layer) const;

  nlohmann::json ToJson() const;
  // Throws Error(kFormat) on malformed input.
  static NeuronMask FromJson(const nlohmann::json& j);

  friend bool operator==(const NeuronMask&, const NeuronMask&) = default;
};

// Throws Error(kMaskMismatch) if any layer or index falls outside the given
// gate widths, or if indices are unsorted or duplicated.
void ValidateMask(const NeuronMask& mask, std::span<const int> gate_widths);

void WriteMaskFile(const NeuronMask& mask, const std::filesystem::path& path);
NeuronMask ReadMaskFile(const std::filesystem::path& path);

}  // namespace esn

#endif  // ESN_MASK_H_

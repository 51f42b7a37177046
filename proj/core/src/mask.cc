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

#include "esn/mask.h"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "esn/error.h"

namespace esn {

std::string_view MethodName(SelectorMethod method) {
  switch (method) {
    case SelectorMethod::kLap:
      return "LAP";
    case SelectorMethod::kLape:
      return "LAPE";
    case SelectorMethod::kMad:
      return "MAD";
    case SelectorMethod::kCas:
      return "CAS";
    case SelectorMethod::kRnd:
      return "RND";
    case SelectorMethod::kTruth:
      return "TRUTH";
  }
  return "?";
}

SelectorMethod ParseMethod(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  for (SelectorMethod m : kAllMethods) {
    if (MethodName(m) == upper) return m;
  }
  if (upper == MethodName(SelectorMethod::kTruth)) return SelectorMethod::kTruth;
  throw Error(ErrorKind::kConfig, "unknown selector method '" +
                                      std::string(name) +
                                      "' (expected LAP, LAPE, MAD, CAS, RND)");
}

std::size_t NeuronMask::size() const {
  std::size_t n = 0;
  for (const auto& [layer, idx] : layers) n += idx.size();
  return n;
}

bool NeuronMask::Contains(int layer, int neuron) const {
  const auto idx = indices(layer);
  return std::binary_search(idx.begin(), idx.end(), neuron);
}

std::span<const int> NeuronMask::indices(int layer) const {
  auto it = layers.find(layer);
  if (it == layers.end()) return {};
  return it->second;
}

nlohmann::json NeuronMask::ToJson() const {
  nlohmann::json layer_json = nlohmann::json::object();
  for (const auto& [layer, idx] : layers) {
    if (!idx.empty()) layer_json[std::to_string(layer)] = idx;
  }
  nlohmann::json j{{"format_version", 1},
                   {"model_id", model_id},
                   {"method", MethodName(method)},
                   {"emotion", emotion},
                   {"ratio", ratio},
                   {"layers", std::move(layer_json)},
                   {"provenance",
                    {{"stats_file", provenance.stats_file},
                     {"pool_sizes_per_emotion",
                      provenance.pool_sizes_per_emotion},
                     {"created_at", provenance.created_at}}}};
  if (seed) j["seed"] = *seed;
  return j;
}

NeuronMask NeuronMask::FromJson(const nlohmann::json& j) {
  NeuronMask mask;
  try {
    if (j.at("format_version").get<int>() != 1) {
      throw Error(ErrorKind::kFormat,
                  "unsupported mask format_version " +
                      j.at("format_version").dump());
    }
    mask.model_id = j.at("model_id").get<std::string>();
    mask.method = ParseMethod(j.at("method").get<std::string>());
    mask.emotion = j.value("emotion", std::string());
    mask.ratio = j.at("ratio").get<double>();
    if (j.contains("seed") && !j.at("seed").is_null()) {
      mask.seed = j.at("seed").get<std::uint64_t>();
    }
    for (const auto& [key, value] : j.at("layers").items()) {
      std::size_t used = 0;
      const int layer = std::stoi(key, &used);
      if (used != key.size()) {
        throw Error(ErrorKind::kFormat, "invalid layer key '" + key + "'");
      }
      auto idx = value.get<std::vector<int>>();
      if (!idx.empty()) mask.layers[layer] = std::move(idx);
    }
    if (j.contains("provenance")) {
      const auto& p = j.at("provenance");
      mask.provenance.stats_file = p.value("stats_file", std::string());
      mask.provenance.pool_sizes_per_emotion = p.value(
          "pool_sizes_per_emotion", std::vector<std::uint64_t>());
      mask.provenance.created_at = p.value("created_at", std::string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("malformed mask: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw Error(ErrorKind::kFormat, "malformed mask: non-numeric layer key");
  } catch (const std::out_of_range&) {
    throw Error(ErrorKind::kFormat, "malformed mask: layer key out of range");
  }
  return mask;
}

void ValidateMask(const NeuronMask& mask, std::span<const int> gate_widths) {
  for (const auto& [layer, idx] : mask.layers) {
    if (layer < 0 || layer >= static_cast<int>(gate_widths.size())) {
      throw Error(ErrorKind::kMaskMismatch,
                  "mask references layer " + std::to_string(layer) +
                      " but the model has " +
                      std::to_string(gate_widths.size()) + " layers");
    }
    int prev = -1;
    for (int n : idx) {
      if (n < 0 || n >= gate_widths[layer]) {
        throw Error(ErrorKind::kMaskMismatch,
                    "mask index " + std::to_string(n) + " in layer " +
                        std::to_string(layer) + " exceeds gate width " +
                        std::to_string(gate_widths[layer]));
      }
      if (n <= prev) {
        throw Error(ErrorKind::kMaskMismatch,
                    "mask indices in layer " + std::to_string(layer) +
                        " must be strictly increasing");
      }
      prev = n;
    }
  }
}

void WriteMaskFile(const NeuronMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << mask.ToJson().dump(2) << '\n';
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

NeuronMask ReadMaskFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat,
                "invalid mask JSON in " + path.string() + ": " + e.what());
  }
  return NeuronMask::FromJson(j);
}

}  // namespace esn

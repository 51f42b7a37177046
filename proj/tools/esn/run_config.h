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

#ifndef ESN_TOOLS_RUN_CONFIG_H_
#define ESN_TOOLS_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esn/intervene.h"
#include "esn/mask.h"
#include "esn/micromodel.h"

namespace esn::cli {

// Everything a pipeline run depends on. All randomness derives from `seed`.
struct RunConfig {
  std::uint64_t seed = 20260101;
  std::string created_at = "2026-01-01T00:00:00Z";
  std::filesystem::path output_dir = "esn-out";

  MicroModelConfig model;  // model.seed is derived, never read from JSON.

  int identification_items_per_emotion = 200;
  int evaluation_items_per_emotion = 100;

  std::vector<SelectorMethod> methods = {SelectorMethod::kRnd, SelectorMethod::kLap,
                                         SelectorMethod::kLape, SelectorMethod::kMad,
                                         SelectorMethod::kCas};
  double ratio = 0.005;
  int rnd_seeds = 5;

  std::vector<InterventionMode> modes = {
      InterventionMode::kAblate, InterventionMode::kSteer, InterventionMode::kInject2Pass,
      InterventionMode::kInjectMix, InterventionMode::kInjectUnion};
  std::vector<double> alphas = {0.1, 0.3, 0.5, 1.0};
  double tau = 0.5;
  bool rectified_mix = false;

  // Sweeps run for these methods only; empty disables them.
  std::vector<SelectorMethod> sweep_methods = {SelectorMethod::kCas};
  std::vector<double> sweep_ratios = {0.001, 0.005, 0.01};
  std::vector<int> pool_sizes = {10, 50, 200};

  int max_new_tokens = 20;
  double temperature = 0.0;

  // Throws Error(kConfig) naming the offending field.
  void Validate() const;
  nlohmann::json ToJson() const;
  static RunConfig FromJson(const nlohmann::json& j);

  std::uint64_t StageSeed(const std::string& label) const;
  std::vector<std::uint64_t> RndSeeds() const;
  DatasetSpec IdentificationSpec() const;
  DatasetSpec EvaluationSpec() const;
  // Model configuration with the derived seed filled in.
  MicroModelConfig ResolvedModel() const;
};

RunConfig LoadRunConfig(const std::filesystem::path& path);

}  // namespace esn::cli

#endif  // ESN_TOOLS_RUN_CONFIG_H_

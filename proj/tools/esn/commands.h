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

#ifndef ESN_TOOLS_COMMANDS_H_
#define ESN_TOOLS_COMMANDS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esn/micromodel.h"
#include "esn/protocol.h"
#include "esn/report.h"
#include "run_config.h"

namespace esn::cli {

namespace fs = std::filesystem;

inline constexpr const char* kDatasetManifestFormat = "DATASET-v1";

struct SynthPaths {
  fs::path model;
  fs::path identification;
  fs::path evaluation;
};
SynthPaths SynthPathsIn(const fs::path& dir);

// Builds the model and writes it with both dataset manifests.
SynthPaths CmdSynth(const RunConfig& config, const fs::path& out_dir, std::ostream& log);

// Dataset manifests hold the generation spec; items are regenerated from
// the model configuration on load.
void WriteDatasetManifest(const MicroModel& model, const DatasetSpec& spec,
                          const fs::path& path);
Dataset LoadDataset(const MicroModel& model, const fs::path& manifest);

// Logs the correctly answered items of a dataset (optionally its first
// `pool` items per emotion) to a TRACE-v1 file.
LogResult CmdLog(const fs::path& model_path, const fs::path& manifest, const fs::path& out,
                 const std::string& created_at, std::optional<int> pool, int jobs,
                 std::ostream& log);

// Accumulates one or more traces (shards) into a STATS-v1 file.
EmotionCounters CmdStats(const std::vector<fs::path>& traces, const fs::path& out,
                         std::ostream& log);

// Writes one MASK-v1 file per emotion (or per RND seed) and returns the paths.
std::vector<fs::path> CmdIdentify(const fs::path& stats, SelectorMethod method, double ratio,
                                  const std::vector<std::uint64_t>& rnd_seeds,
                                  const fs::path& out_dir, std::ostream& log);

// Groups mask files into a set; all must share a method.
MaskSet LoadMaskSet(const std::vector<fs::path>& files);

EffectMatrix CmdEval(const fs::path& model_path, const fs::path& manifest,
                     const std::vector<fs::path>& masks, InterventionMode mode, double alpha,
                     int jobs);
InjectionResult CmdInject(const fs::path& model_path, const fs::path& manifest,
                          const std::vector<fs::path>& masks, InterventionMode mode,
                          double alpha, double tau, int jobs);

// Assembles a REPORT-v1 from eval/inject outputs (or a pipeline result) and
// writes the JSON, a CSV of every effect matrix, and one SVG heatmap each.
nlohmann::json CmdReport(const std::vector<fs::path>& inputs, const fs::path& out_json,
                         const std::optional<fs::path>& csv,
                         const std::optional<fs::path>& svg_dir);

// Writes `report` and its CSV/SVG renderings.
void EmitReport(const nlohmann::json& report, const fs::path& out_json,
                const std::optional<fs::path>& csv, const std::optional<fs::path>& svg_dir);

struct PipelineOptions {
  int jobs = 1;
  bool force = false;  // Ignore cached stage outputs.
};

// synth -> log -> stats -> identify -> eval -> report, each stage cached by
// the content hash of its inputs. Returns the report path.
fs::path CmdPipeline(const RunConfig& config, const PipelineOptions& options,
                     std::ostream& log);

void WriteJsonFile(const nlohmann::json& j, const fs::path& path);
nlohmann::json ReadJsonFile(const fs::path& path);

}  // namespace esn::cli

#endif  // ESN_TOOLS_COMMANDS_H_

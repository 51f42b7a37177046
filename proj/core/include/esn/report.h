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

#ifndef ESN_REPORT_H_
#define ESN_REPORT_H_

// REPORT-v1 JSON plus CSV and SVG renderings of effect matrices.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esn/micromodel.h"
#include "esn/protocol.h"

namespace esn {

inline constexpr const char* kReportFormat = "REPORT-v1";

nlohmann::json ToJson(const SelfCross& summary);
nlohmann::json ToJson(const EffectMatrix& matrix);
nlohmann::json ToJson(const InjectionResult& result);
nlohmann::json ToJson(const LayerHistogram& histogram);
nlohmann::json ToJson(const PoolCurve& curve);
nlohmann::json ToJson(const MaskSet& masks);

// Throws Error(kFormat) on malformed input.
EffectMatrix EffectMatrixFromJson(const nlohmann::json& j);
InjectionResult InjectionFromJson(const nlohmann::json& j);

struct RecoveryRow {
  std::string method;
  std::string emotion;
  Overlap overlap;
};
// Precision/recall of each mask against the planted units. RND masks are
// scored against every emotion.
std::vector<RecoveryRow> MaskRecovery(const MaskSet& masks, const MicroModel& model);
nlohmann::json ToJson(const std::vector<RecoveryRow>& rows);

struct ReportContents {
  nlohmann::json manifest;
  std::vector<EffectMatrix> effects;
  std::vector<InjectionResult> injections;
  std::vector<RecoveryRow> recovery;
  std::vector<LayerHistogram> histograms;
  std::vector<std::string> histogram_labels;
  std::vector<EffectMatrix> ratio_sweep;
  std::vector<PoolCurve> pool_curves;
};

// Sections are sorted so the output does not depend on insertion order.
nlohmann::json BuildReport(const ReportContents& contents);

// "%.2f" without negative zero.
std::string FormatPercent(double value);

// Long-format table: method,mode,ratio,alpha,source,evaluation,baseline,
// intervened,delta.
std::string EffectsCsv(const std::vector<EffectMatrix>& matrices);

// Delta heatmap: sources as rows, evaluation emotions as columns, diverging
// colors, numeric annotations and an outlined diagonal.
std::string RenderHeatmapSvg(const EffectMatrix& matrix, const std::string& title);

}  // namespace esn

#endif  // ESN_REPORT_H_

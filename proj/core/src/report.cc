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

#include "esn/report.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <tuple>

#include "esn/error.h"

namespace esn {
namespace {

template <typename T>
T Field(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("report field '") + key + "': " + e.what());
  }
}

std::string XmlEscape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string Color(double delta, double scale) {
  const double t = scale > 0.0 ? std::min(std::abs(delta) / scale, 1.0) : 0.0;
  const int lo[3] = {59, 76, 192};
  const int hi[3] = {180, 4, 38};
  const int* end = delta < 0.0 ? lo : hi;
  char buf[8];
  int rgb[3];
  for (int k = 0; k < 3; ++k) {
    rgb[k] = static_cast<int>(std::lround(255.0 + t * (end[k] - 255.0)));
  }
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

std::string FormatNumber(double value) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string FormatPercent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

nlohmann::json ToJson(const SelfCross& summary) {
  return {{"self", summary.self},
          {"cross", summary.cross ? nlohmann::json(*summary.cross) : nlohmann::json()},
          {"gap", summary.gap}};
}

nlohmann::json ToJson(const EffectMatrix& m) {
  nlohmann::json row_cross = nlohmann::json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto c = RowCrossEffect(m, i);
    row_cross.push_back(c ? nlohmann::json(*c) : nlohmann::json());
  }
  nlohmann::json j = {{"mode", m.mode},
                      {"method", m.method},
                      {"ratio", m.ratio},
                      {"alpha", m.alpha},
                      {"emotions", m.emotions},
                      {"baseline", m.baseline},
                      {"intervened", m.intervened},
                      {"delta", m.delta},
                      {"self_effect", nlohmann::json::array()},
                      {"row_cross_effect", std::move(row_cross)},
                      {"summary", ToJson(SelfCrossSummary(m))}};
  for (std::size_t i = 0; i < m.size(); ++i) j["self_effect"].push_back(m.delta[i][i]);
  if (!m.seed_deltas.empty()) j["seed_deltas"] = m.seed_deltas;
  return j;
}

EffectMatrix EffectMatrixFromJson(const nlohmann::json& j) {
  EffectMatrix m;
  m.mode = Field<std::string>(j, "mode");
  m.method = Field<std::string>(j, "method");
  m.ratio = Field<double>(j, "ratio");
  m.alpha = Field<double>(j, "alpha");
  m.emotions = Field<std::vector<std::string>>(j, "emotions");
  m.baseline = Field<std::vector<double>>(j, "baseline");
  m.intervened = Field<std::vector<std::vector<double>>>(j, "intervened");
  m.delta = Field<std::vector<std::vector<double>>>(j, "delta");
  if (j.contains("seed_deltas")) {
    m.seed_deltas = Field<std::vector<std::vector<std::vector<double>>>>(j, "seed_deltas");
  }
  const std::size_t n = m.emotions.size();
  bool ok = m.baseline.size() == n && m.intervened.size() == n && m.delta.size() == n;
  for (std::size_t i = 0; ok && i < n; ++i) {
    ok = m.intervened[i].size() == n && m.delta[i].size() == n;
  }
  if (!ok) throw Error(ErrorKind::kFormat, "effect matrix shapes disagree");
  return m;
}

nlohmann::json ToJson(const InjectionResult& r) {
  return {{"mode", r.mode},
          {"method", r.method},
          {"ratio", r.ratio},
          {"alpha", r.alpha},
          {"tau", r.tau},
          {"emotions", r.emotions},
          {"baseline", r.baseline},
          {"accuracy", r.accuracy},
          {"delta", r.delta},
          {"baseline_overall", r.baseline_overall},
          {"accuracy_overall", r.accuracy_overall},
          {"invalid_first_pass", r.invalid_first_pass}};
}

InjectionResult InjectionFromJson(const nlohmann::json& j) {
  InjectionResult r;
  r.mode = Field<std::string>(j, "mode");
  r.method = Field<std::string>(j, "method");
  r.ratio = Field<double>(j, "ratio");
  r.alpha = Field<double>(j, "alpha");
  r.tau = Field<double>(j, "tau");
  r.emotions = Field<std::vector<std::string>>(j, "emotions");
  r.baseline = Field<std::vector<double>>(j, "baseline");
  r.accuracy = Field<std::vector<double>>(j, "accuracy");
  r.delta = Field<std::vector<double>>(j, "delta");
  r.baseline_overall = Field<double>(j, "baseline_overall");
  r.accuracy_overall = Field<double>(j, "accuracy_overall");
  r.invalid_first_pass = Field<std::uint64_t>(j, "invalid_first_pass");
  return r;
}

nlohmann::json ToJson(const LayerHistogram& h) {
  return {{"emotions", h.emotions}, {"num_layers", h.num_layers}, {"counts", h.counts}};
}

nlohmann::json ToJson(const PoolCurve& c) {
  return {{"method", c.method},
          {"ratio", c.ratio},
          {"emotions", c.emotions},
          {"pool_sizes", c.pool_sizes},
          {"self_effect", c.self_effect},
          {"kept", c.kept}};
}

nlohmann::json ToJson(const MaskSet& masks) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& m : masks.is_random() ? masks.random : masks.per_emotion) {
    list.push_back(m.ToJson());
  }
  return {{"method", MethodName(masks.method)}, {"ratio", masks.ratio}, {"masks", list}};
}

std::vector<RecoveryRow> MaskRecovery(const MaskSet& masks, const MicroModel& model) {
  std::vector<RecoveryRow> rows;
  const std::string method(MethodName(masks.method));
  const auto& names = model.config().emotions;
  if (masks.is_random()) {
    for (int e = 0; e < model.config().num_emotions(); ++e) {
      Overlap mean;
      for (const auto& m : masks.random) {
        const Overlap o = GroundTruthOverlap(m, model.truth(), e);
        mean.precision += o.precision;
        mean.recall += o.recall;
      }
      const double k = static_cast<double>(std::max<std::size_t>(masks.random.size(), 1));
      mean.precision /= k;
      mean.recall /= k;
      rows.push_back({method, names[e], mean});
    }
    return rows;
  }
  for (const auto& m : masks.per_emotion) {
    const int e = model.config().EmotionIndex(m.emotion);
    if (e < 0) continue;
    rows.push_back({method, m.emotion, GroundTruthOverlap(m, model.truth(), e)});
  }
  return rows;
}

nlohmann::json ToJson(const std::vector<RecoveryRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"method", r.method},
                   {"emotion", r.emotion},
                   {"precision", r.overlap.precision},
                   {"recall", r.overlap.recall}});
  }
  return out;
}

nlohmann::json BuildReport(const ReportContents& c) {
  auto effect_key = [](const EffectMatrix& m) {
    return std::make_tuple(m.method, m.mode, m.alpha, m.ratio, m.emotions);
  };
  std::vector<EffectMatrix> effects = c.effects;
  std::stable_sort(effects.begin(), effects.end(), [&](const auto& a, const auto& b) {
    return effect_key(a) < effect_key(b);
  });
  std::vector<InjectionResult> injections = c.injections;
  std::stable_sort(injections.begin(), injections.end(), [](const auto& a, const auto& b) {
    return std::tie(a.method, a.mode, a.alpha, a.tau, a.ratio) <
           std::tie(b.method, b.mode, b.alpha, b.tau, b.ratio);
  });
  std::vector<RecoveryRow> recovery = c.recovery;
  std::stable_sort(recovery.begin(), recovery.end(),
                   [](const auto& a, const auto& b) { return a.method < b.method; });
  std::vector<std::size_t> order(c.histograms.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return c.histogram_labels.at(a) < c.histogram_labels.at(b);
  });
  std::vector<EffectMatrix> sweep = c.ratio_sweep;
  std::stable_sort(sweep.begin(), sweep.end(), [&](const auto& a, const auto& b) {
    return effect_key(a) < effect_key(b);
  });
  std::vector<PoolCurve> pools = c.pool_curves;
  std::stable_sort(pools.begin(), pools.end(),
                   [](const auto& a, const auto& b) { return a.method < b.method; });

  nlohmann::json report = {{"format", kReportFormat}, {"manifest", c.manifest}};
  nlohmann::json methods = nlohmann::json::object();
  for (const auto& m : effects) {
    auto& section = methods[m.method];
    section["effects"].push_back(ToJson(m));
  }
  for (const auto& r : injections) methods[r.method]["injections"].push_back(ToJson(r));
  for (const auto& r : recovery) {
    methods[r.method]["recovery"].push_back(
        {{"emotion", r.emotion},
         {"precision", r.overlap.precision},
         {"recall", r.overlap.recall}});
  }
  report["methods"] = std::move(methods);
  if (!effects.empty()) {
    const EffectMatrix& first = effects.front();
    nlohmann::json baseline = nlohmann::json::object();
    for (std::size_t e = 0; e < first.size(); ++e) baseline[first.emotions[e]] = first.baseline[e];
    report["baseline"] = std::move(baseline);
  }
  nlohmann::json hist = nlohmann::json::object();
  for (std::size_t i : order) hist[c.histogram_labels[i]] = ToJson(c.histograms[i]);
  report["histograms"] = std::move(hist);
  nlohmann::json sweeps = {{"ratio", nlohmann::json::array()}, {"pool", nlohmann::json::array()}};
  for (const auto& m : sweep) sweeps["ratio"].push_back(ToJson(m));
  for (const auto& p : pools) sweeps["pool"].push_back(ToJson(p));
  report["sweeps"] = std::move(sweeps);
  return report;
}

std::string EffectsCsv(const std::vector<EffectMatrix>& matrices) {
  std::ostringstream os;
  os << "method,mode,ratio,alpha,source,evaluation,baseline,intervened,delta\n";
  for (const auto& m : matrices) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t j = 0; j < m.size(); ++j) {
        os << m.method << ',' << m.mode << ',' << FormatNumber(m.ratio) << ','
           << FormatNumber(m.alpha) << ',' << m.emotions[i] << ',' << m.emotions[j] << ','
           << FormatPercent(m.baseline[j]) << ',' << FormatPercent(m.intervened[i][j])
           << ',' << FormatPercent(m.delta[i][j]) << '\n';
      }
    }
  }
  return os.str();
}

std::string RenderHeatmapSvg(const EffectMatrix& m, const std::string& title) {
  constexpr int kCellW = 84;
  constexpr int kCellH = 40;
  constexpr int kLeft = 110;
  constexpr int kTop = 70;
  const int n = static_cast<int>(m.size());
  const int width = kLeft + n * kCellW + 20;
  const int height = kTop + n * kCellH + 50;
  double scale = 0.0;
  for (const auto& row : m.delta) {
    for (double d : row) scale = std::max(scale, std::abs(d));
  }

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << XmlEscape(title) << "</text>\n";
  for (int j = 0; j < n; ++j) {
    os << "<text x=\"" << kLeft + j * kCellW + kCellW / 2 << "\" y=\"" << kTop - 8
       << "\" text-anchor=\"middle\">" << XmlEscape(m.emotions[j]) << "</text>\n";
  }
  for (int i = 0; i < n; ++i) {
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << kTop + i * kCellH + kCellH / 2 + 4
       << "\" text-anchor=\"end\">" << XmlEscape(m.emotions[i]) << "</text>\n";
    for (int j = 0; j < n; ++j) {
      const double d = m.delta[i][j];
      const int x = kLeft + j * kCellW;
      const int y = kTop + i * kCellH;
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCellW << "\" height=\""
         << kCellH << "\" fill=\"" << Color(d, scale) << "\" stroke=\"#dddddd\"/>\n";
      os << "<text x=\"" << x + kCellW / 2 << "\" y=\"" << y + kCellH / 2 + 4
         << "\" text-anchor=\"middle\">" << FormatPercent(d) << "</text>\n";
    }
  }
  for (int i = 0; i < n; ++i) {
    os << "<rect class=\"diagonal\" x=\"" << kLeft + i * kCellW << "\" y=\""
       << kTop + i * kCellH << "\" width=\"" << kCellW << "\" height=\"" << kCellH
       << "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"2\"/>\n";
  }
  os << "<text x=\"" << kLeft << "\" y=\"" << kTop + n * kCellH + 30
     << "\">rows: source emotion, columns: evaluation emotion, cells: accuracy change (pp)"
     << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace esn

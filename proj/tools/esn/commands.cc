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

#include "commands.h"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "esn/digest.h"
#include "esn/error.h"
#include "esn/mask.h"
#include "esn/selectors.h"
#include "esn/stats.h"
#include "esn/trace.h"
#include "stage_cache.h"

namespace esn::cli {
namespace {

void EnsureParent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void WriteText(const std::string& text, const fs::path& path) {
  EnsureParent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

std::string AlphaTag(double alpha) {
  std::ostringstream os;
  os << alpha;
  return os.str();
}

std::string EffectFileStem(const EffectMatrix& m) {
  std::string stem = m.method + "_" + m.mode;
  if (m.mode != "ablate") stem += "_a" + AlphaTag(m.alpha);
  return stem;
}

std::vector<EffectMatrix> EffectsFromReport(const nlohmann::json& report) {
  std::vector<EffectMatrix> out;
  if (!report.contains("methods")) return out;
  for (const auto& [method, section] : report.at("methods").items()) {
    if (!section.contains("effects")) continue;
    for (const auto& e : section.at("effects")) out.push_back(EffectMatrixFromJson(e));
  }
  return out;
}

std::vector<fs::path> FilesIn(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Rethrows any error with the failing stage named.
template <typename Fn>
auto InStage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage " + stage + ": " + e.what());
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorKind::kIo, "stage " + stage + ": " + e.what());
  }
}

}  // namespace

void WriteJsonFile(const nlohmann::json& j, const fs::path& path) {
  WriteText(j.dump(2) + "\n", path);
}

nlohmann::json ReadJsonFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

SynthPaths SynthPathsIn(const fs::path& dir) {
  return {dir / "model.esnm", dir / "datasets" / "identification.json",
          dir / "datasets" / "evaluation.json"};
}

void WriteDatasetManifest(const MicroModel& model, const DatasetSpec& spec,
                          const fs::path& path) {
  WriteJsonFile({{"format", kDatasetManifestFormat},
                 {"model_id", model.config().model_id},
                 {"spec", spec.ToJson()}},
                path);
}

Dataset LoadDataset(const MicroModel& model, const fs::path& manifest) {
  const nlohmann::json j = ReadJsonFile(manifest);
  if (!j.is_object() || j.value("format", "") != kDatasetManifestFormat) {
    throw Error(ErrorKind::kFormat, manifest.string() + ": not a DATASET-v1 manifest");
  }
  if (j.value("model_id", "") != model.config().model_id) {
    throw Error(ErrorKind::kIncompatible,
                manifest.string() + " was generated for model '" + j.value("model_id", "") +
                    "', not '" + model.config().model_id + "'");
  }
  return GenerateDataset(model.config(), DatasetSpec::FromJson(j.at("spec"), "$.spec"));
}

SynthPaths CmdSynth(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  const SynthPaths paths = SynthPathsIn(out_dir);
  const MicroModel model = MicroModel::Build(config.ResolvedModel());
  fs::create_directories(out_dir);
  model.SaveFile(paths.model);
  WriteDatasetManifest(model, config.IdentificationSpec(), paths.identification);
  WriteDatasetManifest(model, config.EvaluationSpec(), paths.evaluation);
  log << "synth: model " << model.config().model_id << " with "
      << model.truth().neurons.size() << " planted units -> " << paths.model.string() << "\n";
  return paths;
}

LogResult CmdLog(const fs::path& model_path, const fs::path& manifest, const fs::path& out,
                 const std::string& created_at, std::optional<int> pool, int jobs,
                 std::ostream& log) {
  const MicroModel model = MicroModel::LoadFile(model_path);
  Dataset dataset = LoadDataset(model, manifest);
  if (pool) dataset = TakePool(dataset, *pool);
  LogResult r = LogCorrectItems(model, dataset, created_at, jobs);
  EnsureParent(out);
  std::ofstream stream(out, std::ios::binary | std::ios::trunc);
  if (!stream) throw Error(ErrorKind::kIo, "cannot write " + out.string());
  WriteTrace(r.header, r.kept, stream);
  for (std::size_t e = 0; e < dataset.vocab.size(); ++e) {
    log << "log: " << dataset.vocab[e] << " kept " << r.kept_per_emotion[e] << " dropped "
        << r.dropped_per_emotion[e] << "\n";
    if (r.kept_per_emotion[e] == 0) {
      log << "warning: no correctly answered items for '" << dataset.vocab[e]
          << "'; it will be unobserved\n";
    }
  }
  return r;
}

EmotionCounters CmdStats(const std::vector<fs::path>& traces, const fs::path& out,
                         std::ostream& log) {
  if (traces.empty()) throw Error(ErrorKind::kConfig, "stats needs at least one trace");
  std::optional<EmotionCounters> total;
  for (const auto& path : traces) {
    EmotionCounters shard = AccumulateTraceFile(path);
    if (total) {
      total->MergeFrom(shard);
    } else {
      total = std::move(shard);
    }
  }
  EnsureParent(out);
  WriteStatsFile(*total, out);
  const auto& counts = total->example_counts();
  log << "stats: " << traces.size() << " trace(s), examples per emotion:";
  for (auto c : counts) log << " " << c;
  log << "\n";
  return std::move(*total);
}

std::vector<fs::path> CmdIdentify(const fs::path& stats, SelectorMethod method, double ratio,
                                  const std::vector<std::uint64_t>& rnd_seeds,
                                  const fs::path& out_dir, std::ostream& log) {
  const Profiles profiles = FinalizeProfiles(ReadStatsFile(stats));
  const MaskSet set = IdentifyMasks(profiles, method, ratio, rnd_seeds);
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  if (set.is_random()) {
    for (std::size_t k = 0; k < set.random.size(); ++k) {
      written.push_back(out_dir / ("seed-" + std::to_string(k) + ".json"));
      WriteMaskFile(set.random[k], written.back());
    }
  } else {
    for (const auto& m : set.per_emotion) {
      written.push_back(out_dir / (m.emotion + ".json"));
      WriteMaskFile(m, written.back());
    }
  }
  for (int e = 0; e < profiles.header.num_emotions(); ++e) {
    if (!profiles.observed[e] && !set.is_random()) {
      log << "warning: emotion '" << profiles.header.emotion_vocab[e]
          << "' is unobserved; no mask written\n";
    }
  }
  log << "identify: " << MethodName(method) << " r=" << ratio << " budget "
      << SelectionBudget(ratio, profiles.layout.num_neurons()) << " -> " << written.size()
      << " mask file(s)\n";
  return written;
}

MaskSet LoadMaskSet(const std::vector<fs::path>& files) {
  if (files.empty()) throw Error(ErrorKind::kConfig, "no mask files given");
  MaskSet set;
  bool first = true;
  for (const auto& f : files) {
    NeuronMask m = ReadMaskFile(f);
    if (first) {
      set.method = m.method;
      set.ratio = m.ratio;
      first = false;
    } else if (m.method != set.method) {
      throw Error(ErrorKind::kConfig, "mask files mix methods " +
                                          std::string(MethodName(set.method)) + " and " +
                                          std::string(MethodName(m.method)));
    }
    if (m.method == SelectorMethod::kRnd) {
      set.random.push_back(std::move(m));
    } else {
      set.per_emotion.push_back(std::move(m));
    }
  }
  return set;
}

EffectMatrix CmdEval(const fs::path& model_path, const fs::path& manifest,
                     const std::vector<fs::path>& masks, InterventionMode mode, double alpha,
                     int jobs) {
  const MicroModel model = MicroModel::LoadFile(model_path);
  const Dataset dataset = LoadDataset(model, manifest);
  ProtocolSettings settings;
  settings.mode = mode;
  settings.alpha = alpha;
  settings.jobs = jobs;
  return RunProtocol(model, dataset, LoadMaskSet(masks), settings);
}

InjectionResult CmdInject(const fs::path& model_path, const fs::path& manifest,
                          const std::vector<fs::path>& masks, InterventionMode mode,
                          double alpha, double tau, int jobs) {
  const MicroModel model = MicroModel::LoadFile(model_path);
  const Dataset dataset = LoadDataset(model, manifest);
  return RunInjection(model, dataset, LoadMaskSet(masks), mode, alpha, tau, jobs);
}

void EmitReport(const nlohmann::json& report, const fs::path& out_json,
                const std::optional<fs::path>& csv, const std::optional<fs::path>& svg_dir) {
  WriteJsonFile(report, out_json);
  const std::vector<EffectMatrix> effects = EffectsFromReport(report);
  if (csv) WriteText(EffectsCsv(effects), *csv);
  if (svg_dir) {
    fs::create_directories(*svg_dir);
    for (const auto& m : effects) {
      const std::string title = m.method + " " + m.mode +
                                (m.mode == "ablate" ? "" : " alpha=" + AlphaTag(m.alpha)) +
                                " r=" + AlphaTag(m.ratio);
      WriteText(RenderHeatmapSvg(m, title), *svg_dir / (EffectFileStem(m) + ".svg"));
    }
  }
}

nlohmann::json CmdReport(const std::vector<fs::path>& inputs, const fs::path& out_json,
                         const std::optional<fs::path>& csv,
                         const std::optional<fs::path>& svg_dir) {
  if (inputs.empty()) throw Error(ErrorKind::kConfig, "report needs at least one input");
  ReportContents contents;
  nlohmann::json sources = nlohmann::json::array();
  std::optional<nlohmann::json> whole;
  for (const auto& path : inputs) {
    const nlohmann::json j = ReadJsonFile(path);
    sources.push_back({{"file", path.filename().string()}, {"sha256", Sha256FileHex(path)}});
    if (j.value("format", "") == kReportFormat) {
      if (inputs.size() != 1) {
        throw Error(ErrorKind::kConfig, "a REPORT-v1 input cannot be combined with others");
      }
      whole = j;
      continue;
    }
    const std::string kind = j.value("kind", "");
    if (kind == "effect") {
      contents.effects.push_back(EffectMatrixFromJson(j));
    } else if (kind == "injection") {
      contents.injections.push_back(InjectionFromJson(j));
    } else {
      throw Error(ErrorKind::kFormat,
                  path.string() + ": expected an eval or inject result (\"kind\")");
    }
  }
  nlohmann::json report;
  if (whole) {
    report = *whole;
  } else {
    contents.manifest = {{"inputs", sources}};
    report = BuildReport(contents);
  }
  EmitReport(report, out_json, csv, svg_dir);
  return report;
}

fs::path CmdPipeline(const RunConfig& config, const PipelineOptions& options,
                     std::ostream& log) {
  const fs::path root = config.output_dir;
  fs::create_directories(root);
  const StageCache cache(root);
  auto run_stage = [&](const std::string& name, const nlohmann::json& inputs,
                       const std::function<std::vector<fs::path>()>& body) {
    const std::string key = StageKey(name, inputs);
    if (!options.force && cache.Fresh(name, key)) {
      log << name << ": up to date\n";
      return cache.Outputs(name);
    }
    std::vector<fs::path> outputs = InStage(name, body);
    InStage(name, [&] {
      cache.Record(name, key, outputs);
      return 0;
    });
    return outputs;
  };
  auto hashes = [](const std::vector<fs::path>& files) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& f : files) out[f.filename().string()] = Sha256FileHex(f);
    return out;
  };

  nlohmann::json config_json = config.ToJson();
  config_json.erase("output_dir");

  // synth
  const SynthPaths synth = SynthPathsIn(root);
  run_stage("synth",
            {{"model", config.ResolvedModel().ToJson()},
             {"identification", config.IdentificationSpec().ToJson()},
             {"evaluation", config.EvaluationSpec().ToJson()}},
            [&] {
              CmdSynth(config, root, log);
              return std::vector<fs::path>{synth.model, synth.identification,
                                           synth.evaluation};
            });
  const std::string model_hash = Sha256FileHex(synth.model);

  // log
  const fs::path trace = root / "traces" / "identification.esnt";
  const fs::path log_summary = root / "traces" / "identification.summary.json";
  run_stage("log",
            {{"model", model_hash},
             {"dataset", Sha256FileHex(synth.identification)},
             {"created_at", config.created_at}},
            [&] {
              const LogResult r = CmdLog(synth.model, synth.identification, trace,
                                         config.created_at, std::nullopt, options.jobs, log);
              WriteJsonFile({{"emotions", r.header.emotion_vocab},
                             {"kept", r.kept_per_emotion},
                             {"dropped", r.dropped_per_emotion}},
                            log_summary);
              return std::vector<fs::path>{trace, log_summary};
            });

  // stats
  const fs::path stats = root / "stats" / "identification.esns";
  run_stage("stats", {{"trace", Sha256FileHex(trace)}}, [&] {
    CmdStats({trace}, stats, log);
    return std::vector<fs::path>{stats};
  });

  // identify
  const std::string stats_hash = Sha256FileHex(stats);
  const std::vector<std::uint64_t> rnd_seeds = config.RndSeeds();
  std::map<SelectorMethod, std::vector<fs::path>> mask_files;
  for (SelectorMethod method : config.methods) {
    const std::string name = "identify-" + std::string(MethodName(method));
    mask_files[method] = run_stage(
        name,
        {{"stats", stats_hash},
         {"ratio", config.ratio},
         {"rnd_seeds", method == SelectorMethod::kRnd ? nlohmann::json(rnd_seeds)
                                                      : nlohmann::json()}},
        [&] {
          const fs::path dir = root / "masks" / std::string(MethodName(method));
          if (fs::exists(dir)) fs::remove_all(dir);
          return CmdIdentify(stats, method, config.ratio, rnd_seeds, dir, log);
        });
  }

  // eval
  nlohmann::json mask_hashes = nlohmann::json::object();
  for (const auto& [method, files] : mask_files) {
    mask_hashes[std::string(MethodName(method))] = hashes(files);
  }
  const fs::path results = root / "results" / "eval.json";
  nlohmann::json manifest = {
      {"tool", "esn"},
      {"model_id", config.model.model_id},
      {"model_sha256", model_hash},
      {"config_sha256", Sha256Hex(config_json.dump())},
      {"config", config_json},
      {"seeds",
       {{"root", config.seed},
        {"model", config.ResolvedModel().seed},
        {"identification", config.IdentificationSpec().seed},
        {"evaluation", config.EvaluationSpec().seed},
        {"rnd", rnd_seeds}}},
      {"protocol",
       {{"decoding", "greedy"},
        {"temperature", config.temperature},
        {"max_new_tokens", config.max_new_tokens},
        {"option_order", "per-item seeded permutation"}}},
      {"identification_pool", ReadJsonFile(log_summary)},
      {"created_at", config.created_at}};
  run_stage("eval",
            {{"manifest", manifest},
             {"masks", mask_hashes},
             {"stats", stats_hash},
             {"identification", Sha256FileHex(synth.identification)},
             {"evaluation", Sha256FileHex(synth.evaluation)}},
            [&] {
              const MicroModel model = MicroModel::LoadFile(synth.model);
              const Dataset identification = LoadDataset(model, synth.identification);
              const Dataset evaluation = LoadDataset(model, synth.evaluation);
              const Profiles profiles = FinalizeProfiles(ReadStatsFile(stats));
              auto wants = [&](InterventionMode m) {
                return std::find(config.modes.begin(), config.modes.end(), m) !=
                       config.modes.end();
              };

              ReportContents contents;
              contents.manifest = manifest;
              ProtocolSettings base;
              base.jobs = options.jobs;
              base.baseline = EvaluateAccuracy(model, evaluation, nullptr, options.jobs);

              for (SelectorMethod method : config.methods) {
                const MaskSet masks = LoadMaskSet(mask_files.at(method));
                const std::string mname(MethodName(method));
                log << "eval: " << mname << "\n";
                if (wants(InterventionMode::kAblate)) {
                  ProtocolSettings s = base;
                  s.mode = InterventionMode::kAblate;
                  contents.effects.push_back(RunProtocol(model, evaluation, masks, s));
                }
                if (wants(InterventionMode::kSteer)) {
                  for (double alpha : config.alphas) {
                    ProtocolSettings s = base;
                    s.mode = InterventionMode::kSteer;
                    s.alpha = alpha;
                    contents.effects.push_back(RunProtocol(model, evaluation, masks, s));
                  }
                }
                if (!masks.is_random()) {
                  for (InterventionMode mode :
                       {InterventionMode::kInject2Pass, InterventionMode::kInjectMix,
                        InterventionMode::kInjectUnion}) {
                    if (!wants(mode)) continue;
                    for (double alpha : config.alphas) {
                      contents.injections.push_back(RunInjection(
                          model, evaluation, masks, mode, alpha, config.tau, options.jobs));
                    }
                  }
                }
                for (auto& row : MaskRecovery(masks, model)) contents.recovery.push_back(row);
                const auto& list = masks.is_random() ? masks.random : masks.per_emotion;
                contents.histograms.push_back(
                    HistogramFromMasks(list, model.config().num_layers));
                contents.histogram_labels.push_back(mname);
              }
              const MaskSet truth = TruthMasks(model, model.config().emotions);
              contents.histograms.push_back(
                  HistogramFromMasks(truth.per_emotion, model.config().num_layers));
              contents.histogram_labels.push_back("TRUTH");

              for (SelectorMethod method : config.sweep_methods) {
                log << "eval: sweeps for " << MethodName(method) << "\n";
                ProtocolSettings s = base;
                s.mode = InterventionMode::kAblate;
                if (!config.sweep_ratios.empty()) {
                  for (auto& m : SweepRatio(model, evaluation, profiles, method,
                                            config.sweep_ratios, rnd_seeds, s)) {
                    contents.ratio_sweep.push_back(std::move(m));
                  }
                }
                if (!config.pool_sizes.empty()) {
                  contents.pool_curves.push_back(
                      SweepPool(model, identification, evaluation, method, config.pool_sizes,
                                config.ratio, rnd_seeds, s, config.created_at));
                }
              }
              WriteJsonFile(BuildReport(contents), results);
              return std::vector<fs::path>{results};
            });

  // report
  const fs::path report = root / "report.json";
  const fs::path csv = root / "effects.csv";
  const fs::path svg_dir = root / "heatmaps";
  run_stage("report", {{"results", Sha256FileHex(results)}}, [&] {
    if (fs::exists(svg_dir)) fs::remove_all(svg_dir);
    EmitReport(ReadJsonFile(results), report, csv, svg_dir);
    std::vector<fs::path> outputs{report, csv};
    for (auto& f : FilesIn(svg_dir)) outputs.push_back(f);
    return outputs;
  });
  log << "report: " << report.string() << "\n";
  return report;
}

}  // namespace esn::cli

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

// esn: command-line entry point for the emotion-sensitive neuron toolkit.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "commands.h"
#include "esn/digest.h"
#include "esn/error.h"
#include "run_config.h"

namespace fs = std::filesystem;
using esn::cli::RunConfig;

namespace {

std::vector<fs::path> ExpandMasks(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    if (fs::is_directory(a)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(a)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      out.insert(out.end(), files.begin(), files.end());
    } else {
      out.emplace_back(a);
    }
  }
  return out;
}

std::vector<std::uint64_t> RndSeedsFrom(std::uint64_t root, int count) {
  std::vector<std::uint64_t> out;
  for (int k = 0; k < count; ++k) {
    out.push_back(esn::DeriveSeed(root, "identify/rnd/" + std::to_string(k)));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Identify and intervene on emotion-sensitive gate neurons"};
  app.require_subcommand(1);
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--jobs,-j", jobs, "Worker threads for item-level parallelism")
      ->check(CLI::PositiveNumber);

  std::string config_path, out_path, model_path, dataset_path, stats_path;
  std::string method = "CAS", mode_name, created_at = RunConfig{}.created_at;
  std::optional<std::uint64_t> seed;
  std::optional<double> ratio, tau;
  std::optional<int> pool;
  double alpha = 0.0;
  int rnd_seeds = 5;
  bool force = false;
  std::vector<std::string> traces, masks, inputs, methods, modes;
  std::vector<double> alphas;
  std::string csv_path, svg_dir;

  auto* synth = app.add_subcommand("synth", "Build the micromodel and dataset manifests");
  synth->add_option("--config", config_path, "Run configuration (JSON)")->required();
  synth->add_option("--out", out_path, "Output directory (default: config output_dir)");
  synth->add_option("--seed", seed, "Root seed override");

  auto* log_cmd = app.add_subcommand("log", "Log gate activations of correctly answered items");
  log_cmd->add_option("--model", model_path, "MODEL-v1 file")->required();
  log_cmd->add_option("--dataset", dataset_path, "Dataset manifest")->required();
  log_cmd->add_option("--out", out_path, "TRACE-v1 output")->required();
  log_cmd->add_option("--pool", pool, "Use only the first N items per emotion");
  log_cmd->add_option("--created-at", created_at, "Timestamp recorded in the header");

  auto* stats_cmd = app.add_subcommand("stats", "Accumulate counters from traces");
  stats_cmd->add_option("--trace", traces, "TRACE-v1 file(s); shards are merged")->required();
  stats_cmd->add_option("--out", out_path, "STATS-v1 output")->required();

  auto* identify = app.add_subcommand("identify", "Score neurons and write masks");
  identify->add_option("--stats", stats_path, "STATS-v1 file")->required();
  identify->add_option("--method", method, "RND, LAP, LAPE, MAD or CAS");
  identify->add_option("--ratio", ratio, "Selection ratio r (default 0.005)");
  identify->add_option("--seed", seed, "Root seed for RND masks");
  identify->add_option("--rnd-seeds", rnd_seeds, "Number of RND masks")
      ->check(CLI::PositiveNumber);
  identify->add_option("--out", out_path, "Mask output directory")->required();

  auto* eval = app.add_subcommand("eval", "Run the self/cross protocol (ablate or steer)");
  eval->add_option("--model", model_path, "MODEL-v1 file")->required();
  eval->add_option("--dataset", dataset_path, "Evaluation dataset manifest")->required();
  eval->add_option("--masks", masks, "Mask files or directories")->required();
  eval->add_option("--mode", mode_name, "ablate or steer")->default_val("ablate");
  eval->add_option("--alpha", alpha, "Steering gain")->default_val(0.0);
  eval->add_option("--out", out_path, "Effect matrix JSON")->required();
  eval->add_option("--csv", csv_path, "Also write a CSV table");
  eval->add_option("--svg", svg_dir, "Also write an SVG heatmap to this file");

  auto* inject = app.add_subcommand("inject", "Label-free injection (2pass, mix, union)");
  inject->add_option("--model", model_path, "MODEL-v1 file")->required();
  inject->add_option("--dataset", dataset_path, "Evaluation dataset manifest")->required();
  inject->add_option("--masks", masks, "Per-emotion mask files or directories")->required();
  inject->add_option("--mode", mode_name, "2pass, mix or union")->required();
  inject->add_option("--alpha", alpha, "Gain")->default_val(0.3);
  inject->add_option("--tau", tau, "Mix temperature (default 0.5)");
  inject->add_option("--out", out_path, "Result JSON")->required();

  auto* report = app.add_subcommand("report", "Assemble REPORT-v1 with CSV and SVG output");
  report->add_option("--input", inputs, "eval/inject results or a pipeline result")
      ->required();
  report->add_option("--out", out_path, "REPORT-v1 JSON")->required();
  report->add_option("--csv", csv_path, "CSV of every effect matrix");
  report->add_option("--svg-dir", svg_dir, "Directory for SVG heatmaps");

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage with caching");
  pipeline->add_option("--config", config_path, "Run configuration (JSON)")->required();
  pipeline->add_option("--out", out_path, "Output directory override");
  pipeline->add_option("--method", methods, "Selector override (repeatable)");
  pipeline->add_option("--ratio", ratio, "Selection ratio override");
  pipeline->add_option("--alpha", alphas, "Alpha grid override (repeatable)");
  pipeline->add_option("--tau", tau, "Mix temperature override");
  pipeline->add_option("--seed", seed, "Root seed override");
  pipeline->add_option("--mode", modes, "Intervention modes override (repeatable)");
  pipeline->add_flag("--force", force, "Recompute every stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      RunConfig config = esn::cli::LoadRunConfig(config_path);
      if (seed) config.seed = *seed;
      esn::cli::CmdSynth(config, out_path.empty() ? config.output_dir : fs::path(out_path),
                         std::cerr);
    } else if (*log_cmd) {
      esn::cli::CmdLog(model_path, dataset_path, out_path, created_at, pool, jobs, std::cerr);
    } else if (*stats_cmd) {
      esn::cli::CmdStats({traces.begin(), traces.end()}, out_path, std::cerr);
    } else if (*identify) {
      const esn::SelectorMethod m = esn::ParseMethod(method);
      esn::cli::CmdIdentify(stats_path, m, ratio.value_or(0.005),
                            RndSeedsFrom(seed.value_or(RunConfig{}.seed), rnd_seeds),
                            out_path, std::cerr);
    } else if (*eval) {
      const esn::EffectMatrix m =
          esn::cli::CmdEval(model_path, dataset_path, ExpandMasks(masks),
                            esn::ParseMode(mode_name), alpha, jobs);
      nlohmann::json j = esn::ToJson(m);
      j["kind"] = "effect";
      esn::cli::WriteJsonFile(j, out_path);
      if (!csv_path.empty()) {
        std::ofstream(csv_path, std::ios::trunc) << esn::EffectsCsv({m});
      }
      if (!svg_dir.empty()) {
        std::ofstream(svg_dir, std::ios::trunc)
            << esn::RenderHeatmapSvg(m, m.method + " " + m.mode);
      }
      const esn::SelfCross s = esn::SelfCrossSummary(m);
      std::cout << "self " << esn::FormatPercent(s.self) << " cross "
                << (s.cross ? esn::FormatPercent(*s.cross) : std::string("n/a")) << " gap "
                << esn::FormatPercent(s.gap) << "\n";
    } else if (*inject) {
      const esn::InterventionMode m = esn::ParseMode(mode_name);
      const esn::InjectionResult r = esn::cli::CmdInject(
          model_path, dataset_path, ExpandMasks(masks), m, alpha, tau.value_or(0.5), jobs);
      nlohmann::json j = esn::ToJson(r);
      j["kind"] = "injection";
      esn::cli::WriteJsonFile(j, out_path);
      std::cout << r.mode << " accuracy " << esn::FormatPercent(r.baseline_overall) << " -> "
                << esn::FormatPercent(r.accuracy_overall) << "\n";
    } else if (*report) {
      std::vector<fs::path> files(inputs.begin(), inputs.end());
      esn::cli::CmdReport(files, out_path,
                          csv_path.empty() ? std::nullopt : std::optional<fs::path>(csv_path),
                          svg_dir.empty() ? std::nullopt : std::optional<fs::path>(svg_dir));
    } else if (*pipeline) {
      RunConfig config = esn::cli::LoadRunConfig(config_path);
      if (!out_path.empty()) config.output_dir = out_path;
      if (seed) config.seed = *seed;
      if (ratio) config.ratio = *ratio;
      if (tau) config.tau = *tau;
      if (!alphas.empty()) config.alphas = alphas;
      if (!methods.empty()) {
        config.methods.clear();
        for (const auto& name : methods) config.methods.push_back(esn::ParseMethod(name));
      }
      if (!modes.empty()) {
        config.modes.clear();
        for (const auto& name : modes) config.modes.push_back(esn::ParseMode(name));
      }
      config.Validate();
      esn::cli::PipelineOptions options;
      options.jobs = jobs;
      options.force = force;
      const fs::path path = esn::cli::CmdPipeline(config, options, std::cerr);
      std::cout << path.string() << "\n";
    }
  } catch (const esn::Error& e) {
    std::cerr << "esn: " << esn::ErrorKindName(e.kind()) << " error: " << e.what() << "\n";
    return esn::ExitCodeFor(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "esn: io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "esn: error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

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


#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "esn/digest.h"

namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string output;
};

Result Esn(const std::string& args) {
  const std::string cmd = std::string(ESN_BINARY) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof(buf), pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("esn-cli-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // A model small enough for a full pipeline in a few seconds.
  fs::path WriteConfig(nlohmann::json overrides = nlohmann::json::object()) {
    nlohmann::json c = {
        {"seed", 7},
        {"model",
         {{"num_layers", 3}, {"gate_width", 64}, {"hidden_width", 16},
          {"emotions", {"anger", "happiness", "sadness"}}, {"planted_per_emotion", 2},
          {"planted_layers", {0, 2}}}},
        {"data", {{"identification_items_per_emotion", 20}, {"evaluation_items_per_emotion", 10}}},
        {"identify", {{"methods", {"RND", "CAS", "MAD"}}, {"ratio", 0.02}, {"rnd_seeds", 2}}},
        {"intervene", {{"modes", {"ablate", "steer", "inject_mix"}}, {"alphas", {0.3}}}},
        {"sweeps", {{"methods", {"CAS"}}, {"ratios", {0.02, 0.04}}, {"pool_sizes", {5, 20}}}},
    };
    c.merge_patch(overrides);
    const fs::path path = dir_ / "config.json";
    std::ofstream(path) << c.dump(2);
    return path;
  }

  fs::path dir_;
};

TEST_F(CliTest, HelpAndUnknownCommand) {
  EXPECT_EQ(Esn("--help").code, 0);
  EXPECT_EQ(Esn("frobnicate").code, 2);
  EXPECT_EQ(Esn("synth").code, 2);
}

TEST_F(CliTest, BadConfigExitsTwoWithFieldPath) {
  const auto cfg = WriteConfig({{"identify", {{"ratio", 1.5}}}});
  const auto r = Esn("synth --config " + cfg.string() + " --out " + (dir_ / "o").string());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("$.identify.ratio"), std::string::npos) << r.output;
}

TEST_F(CliTest, ImpossibleModelExitsThree) {
  const auto cfg = WriteConfig({{"model", {{"planted_per_emotion", 65}}}});
  const auto r = Esn("synth --config " + cfg.string() + " --out " + (dir_ / "o").string());
  EXPECT_EQ(r.code, 3) << r.output;
}

TEST_F(CliTest, CorruptTraceExitsFour) {
  std::ofstream(dir_ / "bad.esnt") << "NOPE";
  const auto r = Esn("stats --trace " + (dir_ / "bad.esnt").string() + " --out " +
                     (dir_ / "s.esns").string());
  EXPECT_EQ(r.code, 4) << r.output;
  EXPECT_EQ(Esn("stats --trace " + (dir_ / "missing.esnt").string() + " --out " +
                (dir_ / "s.esns").string())
                .code,
            4);
}

TEST_F(CliTest, SynthIsReproducibleAndCreatesDirectories) {
  const auto cfg = WriteConfig();
  const fs::path a = dir_ / "deep" / "a";
  const fs::path b = dir_ / "b";
  ASSERT_EQ(Esn("synth --config " + cfg.string() + " --out " + a.string()).code, 0);
  ASSERT_EQ(Esn("synth --config " + cfg.string() + " --out " + b.string()).code, 0);
  for (const char* f : {"model.esnm", "datasets/identification.json", "datasets/evaluation.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(Slurp(a / f), Slurp(b / f)) << f;
  }
  const fs::path c = dir_ / "c";
  ASSERT_EQ(Esn("synth --config " + cfg.string() + " --out " + c.string() + " --seed 8").code, 0);
  EXPECT_NE(Slurp(a / "model.esnm"), Slurp(c / "model.esnm"));
}

TEST_F(CliTest, StagewiseCommands) {
  const auto cfg = WriteConfig();
  const fs::path o = dir_ / "o";
  ASSERT_EQ(Esn("synth --config " + cfg.string() + " --out " + o.string()).code, 0);
  const std::string model = (o / "model.esnm").string();
  const std::string ident = (o / "datasets/identification.json").string();
  const std::string eval = (o / "datasets/evaluation.json").string();

  auto r = Esn("log --model " + model + " --dataset " + ident + " --out " +
               (dir_ / "t1.esnt").string());
  ASSERT_EQ(r.code, 0) << r.output;
  ASSERT_EQ(Esn("log --model " + model + " --dataset " + ident + " --out " +
                (dir_ / "t2.esnt").string())
                .code,
            0);
  EXPECT_EQ(Slurp(dir_ / "t1.esnt"), Slurp(dir_ / "t2.esnt"));

  ASSERT_EQ(Esn("stats --trace " + (dir_ / "t1.esnt").string() + " --out " +
                (dir_ / "s.esns").string())
                .code,
            0);
  r = Esn("identify --stats " + (dir_ / "s.esns").string() + " --method CAS --ratio 0.02 --out " +
          (dir_ / "masks").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir_ / "masks" / "anger.json"));

  r = Esn("eval --model " + model + " --dataset " + eval + " --masks " +
          (dir_ / "masks").string() + " --mode ablate --out " + (dir_ / "eval.json").string() +
          " --csv " + (dir_ / "eval.csv").string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto m = nlohmann::json::parse(Slurp(dir_ / "eval.json"));
  for (int e = 0; e < 3; ++e) EXPECT_LE(m["delta"][e][e].get<double>(), -50.0);

  r = Esn("inject --model " + model + " --dataset " + eval + " --masks " +
          (dir_ / "masks").string() + " --mode union --alpha 0.3 --out " +
          (dir_ / "inj.json").string());
  ASSERT_EQ(r.code, 0) << r.output;

  r = Esn("report --input " + (dir_ / "eval.json").string() + " --input " +
          (dir_ / "inj.json").string() + " --out " + (dir_ / "report.json").string() +
          " --svg-dir " + (dir_ / "svg").string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto report = nlohmann::json::parse(Slurp(dir_ / "report.json"));
  EXPECT_EQ(report["format"], "REPORT-v1");
  EXPECT_FALSE(fs::is_empty(dir_ / "svg"));

  // Masks from one model do not fit a different one.
  const auto other = WriteConfig({{"model", {{"gate_width", 32}}}});
  ASSERT_EQ(Esn("synth --config " + other.string() + " --out " + (dir_ / "p").string()).code, 0);
  r = Esn("eval --model " + (dir_ / "p/model.esnm").string() + " --dataset " +
          (dir_ / "p/datasets/evaluation.json").string() + " --masks " +
          (dir_ / "masks").string() + " --out " + (dir_ / "x.json").string());
  EXPECT_EQ(r.code, 3) << r.output;
}

TEST_F(CliTest, PipelineSingleMethodAndCache) {
  const auto cfg = WriteConfig();
  const fs::path o = dir_ / "run";
  auto r = Esn("pipeline --config " + cfg.string() + " --out " + o.string() + " --method CAS");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto report = nlohmann::json::parse(Slurp(o / "report.json"));
  ASSERT_EQ(report["methods"].size(), 1u);
  EXPECT_TRUE(report["methods"].contains("CAS"));
  EXPECT_TRUE(fs::exists(o / "effects.csv"));
  EXPECT_TRUE(fs::exists(o / "heatmaps"));
  const std::string first = Slurp(o / "report.json");

  r = Esn("pipeline --config " + cfg.string() + " --out " + o.string() + " --method CAS");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("synth: up to date"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("eval: up to date"), std::string::npos) << r.output;
  EXPECT_EQ(Slurp(o / "report.json"), first);

  // A tampered output makes its stage run again.
  std::ofstream(o / "report.json") << "{}";
  r = Esn("pipeline --config " + cfg.string() + " --out " + o.string() + " --method CAS");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("eval: up to date"), std::string::npos) << r.output;
  EXPECT_EQ(Slurp(o / "report.json"), first);

  // Changing a parameter invalidates downstream stages only.
  r = Esn("pipeline --config " + cfg.string() + " --out " + o.string() +
          " --method CAS --ratio 0.04");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("synth: up to date"), std::string::npos) << r.output;
  EXPECT_EQ(r.output.find("eval: up to date"), std::string::npos) << r.output;
}

TEST_F(CliTest, PipelineIsByteReproducible) {
  const auto cfg = WriteConfig();
  ASSERT_EQ(Esn("pipeline --config " + cfg.string() + " --out " + (dir_ / "a").string()).code, 0);
  ASSERT_EQ(Esn("--jobs 3 pipeline --config " + cfg.string() + " --out " + (dir_ / "b").string())
                .code,
            0);
  EXPECT_EQ(esn::Sha256FileHex(dir_ / "a/report.json"), esn::Sha256FileHex(dir_ / "b/report.json"));
  const auto report = nlohmann::json::parse(Slurp(dir_ / "a/report.json"));
  EXPECT_EQ(report["methods"].size(), 3u);
  EXPECT_TRUE(report["sweeps"].contains("ratio"));
  EXPECT_TRUE(report["sweeps"].contains("pool"));
}

}  // namespace

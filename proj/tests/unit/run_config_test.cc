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


#include "run_config.h"

#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "esn/error.h"
#include "stage_cache.h"
#include "test_util.h"

namespace esn::cli {
namespace {

void ExpectConfigError(const nlohmann::json& j, const std::string& field) {
  try {
    RunConfig::FromJson(j);
    FAIL() << j.dump();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
  }
}

TEST(RunConfigTest, DefaultsRoundTrip) {
  const RunConfig c;
  EXPECT_NO_THROW(c.Validate());
  EXPECT_EQ(RunConfig::FromJson(c.ToJson()).ToJson(), c.ToJson());
  EXPECT_EQ(RunConfig::FromJson(nlohmann::json::object()).ToJson(), c.ToJson());
}

TEST(RunConfigTest, ShippedDefaultMatchesBuiltIns) {
  const auto c = LoadRunConfig(std::string(ESN_TEST_DATA_DIR) + "/../../configs/default.json");
  EXPECT_EQ(c.ToJson(), RunConfig{}.ToJson());
}

TEST(RunConfigTest, ErrorsNameTheField) {
  ExpectConfigError({{"identify", {{"ratio", 0.0}}}}, "$.identify.ratio");
  ExpectConfigError({{"identify", {{"ratio", "x"}}}}, "$.identify.ratio");
  ExpectConfigError({{"identify", {{"methods", {"CAS", "FOO"}}}}}, "$.identify.methods[1]");
  ExpectConfigError({{"intervene", {{"tau", -1}}}}, "$.intervene.tau");
  ExpectConfigError({{"intervene", {{"alphas", {0.5, 0.1}}}}}, "$.intervene.alphas");
  ExpectConfigError({{"sweeps", {{"pool_sizes", {0, 5}}}}}, "$.sweeps.pool_sizes[0]");
  ExpectConfigError({{"model", {{"seed", 3}}}}, "$.model.seed");
  ExpectConfigError({{"model", {{"num_layers", "x"}}}}, "$.model.num_layers");
  ExpectConfigError({{"protocol", {{"temperature", 0.7}}}}, "$.protocol.temperature");
  ExpectConfigError({{"unknown", 1}}, "$.unknown");
}

TEST(RunConfigTest, SeedsDeriveFromRoot) {
  RunConfig a;
  RunConfig b;
  b.seed = a.seed + 1;
  EXPECT_NE(a.ResolvedModel().seed, b.ResolvedModel().seed);
  EXPECT_NE(a.IdentificationSpec().seed, a.EvaluationSpec().seed);
  EXPECT_EQ(a.RndSeeds().size(), 5u);
  EXPECT_EQ(a.RndSeeds(), RunConfig{}.RndSeeds());
}

TEST(StageCacheTest, FreshOnlyWhenKeyAndOutputsMatch) {
  testing::TempDir dir;
  StageCache cache(dir.path());
  const auto out = dir / "out.txt";
  std::ofstream(out) << "v1";
  EXPECT_FALSE(cache.Fresh("synth", "k1"));
  cache.Record("synth", "k1", {out});
  EXPECT_TRUE(cache.Fresh("synth", "k1"));
  EXPECT_FALSE(cache.Fresh("synth", "k2"));
  std::ofstream(out) << "v2";
  EXPECT_FALSE(cache.Fresh("synth", "k1"));
}

}  // namespace
}  // namespace esn::cli

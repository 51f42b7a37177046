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

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "esn/digest.h"
#include "esn/error.h"

namespace esn::cli {
namespace {

[[noreturn]] void Fail(const std::string& path, const std::string& message) {
  throw Error(ErrorKind::kConfig, path + ": " + message);
}

void CheckKeys(const nlohmann::json& j, const std::string& path,
               std::initializer_list<const char*> known) {
  if (!j.is_object()) Fail(path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      Fail(path + "." + key, "unknown field");
    }
  }
}

template <typename T>
void Read(const nlohmann::json& j, const std::string& path, const char* key, T& out,
          const char* expected) {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  const std::string p = path + "." + key;
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>) {
    ok = v.is_boolean();
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    ok = v.is_number_unsigned();
  } else if constexpr (std::is_integral_v<T>) {
    ok = v.is_number_integer();
  } else if constexpr (std::is_floating_point_v<T>) {
    ok = v.is_number();
  } else if constexpr (std::is_same_v<T, std::string>) {
    ok = v.is_string();
  } else {
    ok = true;
  }
  if (!ok) Fail(p, std::string("expected ") + expected + ", got " + v.dump());
  try {
    out = v.get<T>();
  } catch (const nlohmann::json::exception&) {
    Fail(p, std::string("expected ") + expected + ", got " + v.dump());
  }
}

template <typename T>
void ReadList(const nlohmann::json& j, const std::string& path, const char* key,
              std::vector<T>& out, const char* expected) {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  const std::string p = path + "." + key;
  if (!v.is_array()) Fail(p, "expected an array");
  std::vector<T> items;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const nlohmann::json wrapper = {{"v", v[i]}};
    T item{};
    Read(wrapper, p + "[" + std::to_string(i) + "]", "v", item, expected);
    items.push_back(item);
  }
  out = std::move(items);
}

std::string ItemPath(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

template <typename T>
void RequireAscending(const std::vector<T>& v, const std::string& path) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i - 1] < v[i])) Fail(ItemPath(path, i), "values must be strictly ascending");
  }
}

std::string Num(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

}  // namespace

void RunConfig::Validate() const {
  if (created_at.empty()) Fail("$.created_at", "must not be empty");
  if (output_dir.empty()) Fail("$.output_dir", "must not be empty");
  if (identification_items_per_emotion < 1) {
    Fail("$.data.identification_items_per_emotion", "must be >= 1");
  }
  if (evaluation_items_per_emotion < 1) {
    Fail("$.data.evaluation_items_per_emotion", "must be >= 1");
  }
  if (methods.empty()) Fail("$.identify.methods", "must list at least one method");
  std::set<SelectorMethod> seen;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    if (methods[i] == SelectorMethod::kTruth) {
      Fail(ItemPath("$.identify.methods", i), "TRUTH is not a selector");
    }
    if (!seen.insert(methods[i]).second) {
      Fail(ItemPath("$.identify.methods", i), "duplicate method");
    }
  }
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    Fail("$.identify.ratio", "must lie in (0, 1], got " + Num(ratio));
  }
  if (rnd_seeds < 1) Fail("$.identify.rnd_seeds", "must be >= 1");
  if (modes.empty()) Fail("$.intervene.modes", "must list at least one mode");
  std::set<InterventionMode> seen_modes;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (!seen_modes.insert(modes[i]).second) {
      Fail(ItemPath("$.intervene.modes", i), "duplicate mode");
    }
  }
  if (alphas.empty()) Fail("$.intervene.alphas", "must list at least one alpha");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] >= 0.0)) Fail(ItemPath("$.intervene.alphas", i), "alpha must be >= 0");
  }
  RequireAscending(alphas, "$.intervene.alphas");
  if (!(tau > 0.0)) Fail("$.intervene.tau", "must be > 0, got " + Num(tau));
  for (std::size_t i = 0; i < sweep_methods.size(); ++i) {
    if (sweep_methods[i] == SelectorMethod::kTruth) {
      Fail(ItemPath("$.sweeps.methods", i), "TRUTH is not a selector");
    }
  }
  for (std::size_t i = 0; i < sweep_ratios.size(); ++i) {
    if (!(sweep_ratios[i] > 0.0 && sweep_ratios[i] <= 1.0)) {
      Fail(ItemPath("$.sweeps.ratios", i), "must lie in (0, 1]");
    }
  }
  RequireAscending(sweep_ratios, "$.sweeps.ratios");
  for (std::size_t i = 0; i < pool_sizes.size(); ++i) {
    if (pool_sizes[i] < 1) Fail(ItemPath("$.sweeps.pool_sizes", i), "must be >= 1");
    if (pool_sizes[i] > identification_items_per_emotion) {
      Fail(ItemPath("$.sweeps.pool_sizes", i),
           "exceeds data.identification_items_per_emotion (" +
               std::to_string(identification_items_per_emotion) + ")");
    }
  }
  RequireAscending(pool_sizes, "$.sweeps.pool_sizes");
  if (max_new_tokens < 1) Fail("$.protocol.max_new_tokens", "must be >= 1");
  if (temperature != 0.0) {
    Fail("$.protocol.temperature", "only greedy decoding (0) is supported");
  }
}

nlohmann::json RunConfig::ToJson() const {
  auto method_names = [](const std::vector<SelectorMethod>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (auto m : v) out.push_back(MethodName(m));
    return out;
  };
  nlohmann::json mode_names = nlohmann::json::array();
  for (auto m : modes) mode_names.push_back(ModeName(m));
  nlohmann::json model_json = model.ToJson();
  model_json.erase("seed");
  return {{"seed", seed},
          {"created_at", created_at},
          {"output_dir", output_dir.string()},
          {"model", std::move(model_json)},
          {"data",
           {{"identification_items_per_emotion", identification_items_per_emotion},
            {"evaluation_items_per_emotion", evaluation_items_per_emotion}}},
          {"identify",
           {{"methods", method_names(methods)}, {"ratio", ratio}, {"rnd_seeds", rnd_seeds}}},
          {"intervene",
           {{"modes", std::move(mode_names)},
            {"alphas", alphas},
            {"tau", tau},
            {"rectified_mix", rectified_mix}}},
          {"sweeps",
           {{"methods", method_names(sweep_methods)},
            {"ratios", sweep_ratios},
            {"pool_sizes", pool_sizes}}},
          {"protocol", {{"max_new_tokens", max_new_tokens}, {"temperature", temperature}}}};
}

RunConfig RunConfig::FromJson(const nlohmann::json& j) {
  CheckKeys(j, "$",
            {"$schema", "seed", "created_at", "output_dir", "model", "data", "identify",
             "intervene", "sweeps", "protocol"});
  RunConfig c;
  Read(j, "$", "seed", c.seed, "unsigned integer");
  Read(j, "$", "created_at", c.created_at, "string");
  std::string out_dir = c.output_dir.string();
  Read(j, "$", "output_dir", out_dir, "string");
  c.output_dir = out_dir;

  if (j.contains("model")) {
    const nlohmann::json& m = j.at("model");
    if (m.is_object() && m.contains("seed")) {
      Fail("$.model.seed", "the model seed is derived from the root seed; set $.seed");
    }
    c.model = MicroModelConfig::FromJson(m, "$.model");
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    CheckKeys(d, "$.data", {"identification_items_per_emotion", "evaluation_items_per_emotion"});
    Read(d, "$.data", "identification_items_per_emotion", c.identification_items_per_emotion,
         "integer");
    Read(d, "$.data", "evaluation_items_per_emotion", c.evaluation_items_per_emotion,
         "integer");
  }
  auto parse_methods = [](const nlohmann::json& obj, const std::string& path,
                          std::vector<SelectorMethod>& out) {
    std::vector<std::string> names;
    ReadList(obj, path, "methods", names, "string");
    if (!obj.contains("methods")) return;
    out.clear();
    for (std::size_t i = 0; i < names.size(); ++i) {
      try {
        out.push_back(ParseMethod(names[i]));
      } catch (const Error& e) {
        Fail(ItemPath(path + ".methods", i), e.what());
      }
    }
  };
  if (j.contains("identify")) {
    const auto& s = j.at("identify");
    CheckKeys(s, "$.identify", {"methods", "ratio", "rnd_seeds"});
    parse_methods(s, "$.identify", c.methods);
    Read(s, "$.identify", "ratio", c.ratio, "number");
    Read(s, "$.identify", "rnd_seeds", c.rnd_seeds, "integer");
  }
  if (j.contains("intervene")) {
    const auto& s = j.at("intervene");
    CheckKeys(s, "$.intervene", {"modes", "alphas", "tau", "rectified_mix"});
    std::vector<std::string> names;
    ReadList(s, "$.intervene", "modes", names, "string");
    if (s.contains("modes")) {
      c.modes.clear();
      for (std::size_t i = 0; i < names.size(); ++i) {
        try {
          c.modes.push_back(ParseMode(names[i]));
        } catch (const Error& e) {
          Fail(ItemPath("$.intervene.modes", i), e.what());
        }
      }
    }
    ReadList(s, "$.intervene", "alphas", c.alphas, "number");
    Read(s, "$.intervene", "tau", c.tau, "number");
    Read(s, "$.intervene", "rectified_mix", c.rectified_mix, "boolean");
  }
  if (j.contains("sweeps")) {
    const auto& s = j.at("sweeps");
    CheckKeys(s, "$.sweeps", {"methods", "ratios", "pool_sizes"});
    parse_methods(s, "$.sweeps", c.sweep_methods);
    ReadList(s, "$.sweeps", "ratios", c.sweep_ratios, "number");
    ReadList(s, "$.sweeps", "pool_sizes", c.pool_sizes, "integer");
  }
  if (j.contains("protocol")) {
    const auto& s = j.at("protocol");
    CheckKeys(s, "$.protocol", {"max_new_tokens", "temperature"});
    Read(s, "$.protocol", "max_new_tokens", c.max_new_tokens, "integer");
    Read(s, "$.protocol", "temperature", c.temperature, "number");
  }
  c.Validate();
  return c;
}

std::uint64_t RunConfig::StageSeed(const std::string& label) const {
  return DeriveSeed(seed, label);
}

std::vector<std::uint64_t> RunConfig::RndSeeds() const {
  std::vector<std::uint64_t> out;
  for (int k = 0; k < rnd_seeds; ++k) out.push_back(StageSeed("identify/rnd/" + std::to_string(k)));
  return out;
}

DatasetSpec RunConfig::IdentificationSpec() const {
  DatasetSpec s;
  s.name = "identification";
  s.split = Split::kIdentification;
  s.items_per_emotion = identification_items_per_emotion;
  s.seed = StageSeed("synth/identification");
  return s;
}

DatasetSpec RunConfig::EvaluationSpec() const {
  DatasetSpec s;
  s.name = "evaluation";
  s.split = Split::kEvaluation;
  s.items_per_emotion = evaluation_items_per_emotion;
  s.seed = StageSeed("synth/evaluation");
  return s;
}

MicroModelConfig RunConfig::ResolvedModel() const {
  MicroModelConfig m = model;
  m.seed = StageSeed("synth/model");
  return m;
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": invalid JSON: " + e.what());
  }
  return RunConfig::FromJson(j);
}

}  // namespace esn::cli

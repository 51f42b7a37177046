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

#include "stage_cache.h"

#include <fstream>

#include "esn/digest.h"
#include "esn/error.h"

namespace esn::cli {
namespace fs = std::filesystem;

std::string StageKey(const std::string& stage, const nlohmann::json& inputs) {
  return Sha256Hex(stage + "\n" + inputs.dump());
}

fs::path StageCache::RecordPath(const std::string& stage) const {
  return root_ / "cache" / (stage + ".json");
}

bool StageCache::Fresh(const std::string& stage, const std::string& key) const {
  std::ifstream in(RecordPath(stage));
  if (!in) return false;
  nlohmann::json record;
  try {
    record = nlohmann::json::parse(in);
    if (record.at("key").get<std::string>() != key) return false;
    for (const auto& [rel, hash] : record.at("outputs").items()) {
      const fs::path p = root_ / rel;
      if (!fs::exists(p) || Sha256FileHex(p) != hash.get<std::string>()) return false;
    }
  } catch (const nlohmann::json::exception&) {
    return false;
  } catch (const Error&) {
    return false;
  }
  return true;
}

void StageCache::Record(const std::string& stage, const std::string& key,
                        const std::vector<fs::path>& outputs) const {
  nlohmann::json files = nlohmann::json::object();
  for (const auto& p : outputs) {
    files[fs::relative(p, root_).generic_string()] = Sha256FileHex(p);
  }
  const fs::path path = RecordPath(stage);
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << nlohmann::json{{"stage", stage}, {"key", key}, {"outputs", files}}.dump(2) << "\n";
}

std::vector<fs::path> StageCache::Outputs(const std::string& stage) const {
  std::ifstream in(RecordPath(stage));
  std::vector<fs::path> out;
  if (!in) return out;
  try {
    const auto record = nlohmann::json::parse(in);
    for (const auto& [rel, hash] : record.at("outputs").items()) out.push_back(root_ / rel);
  } catch (const nlohmann::json::exception&) {
    out.clear();
  }
  return out;
}

}  // namespace esn::cli

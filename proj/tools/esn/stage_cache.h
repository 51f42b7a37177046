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

#ifndef ESN_TOOLS_STAGE_CACHE_H_
#define ESN_TOOLS_STAGE_CACHE_H_

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace esn::cli {

// SHA-256 over a stage name and the canonical dump of its inputs.
std::string StageKey(const std::string& stage, const nlohmann::json& inputs);

// Records, per stage, the input key and the content hashes of the files the
// stage produced, under <root>/cache/<stage>.json.
class StageCache {
 public:
  explicit StageCache(std::filesystem::path root) : root_(std::move(root)) {}

  // True when the stage last ran with `key` and its outputs are unchanged.
  bool Fresh(const std::string& stage, const std::string& key) const;
  void Record(const std::string& stage, const std::string& key,
              const std::vector<std::filesystem::path>& outputs) const;
  // Outputs recorded for a stage, as absolute paths.
  std::vector<std::filesystem::path> Outputs(const std::string& stage) const;

 private:
  std::filesystem::path RecordPath(const std::string& stage) const;

  std::filesystem::path root_;
};

}  // namespace esn::cli

#endif  // ESN_TOOLS_STAGE_CACHE_H_

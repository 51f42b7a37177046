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

#include "esn/stats.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "binary_io.h"
#include "esn/error.h"

namespace esn {
namespace {

constexpr char kStatsMagic[4] = {'E', 'S', 'N', 'S'};

}  // namespace

EmotionCounters::EmotionCounters(TraceHeader header)
    : header_(std::move(header)) {
  header_.Validate();
  layout_ = NeuronLayout(header_.gate_widths, header_.num_emotions());
  positive_count_.assign(layout_.num_cells(), 0);
  positive_mass_.assign(layout_.num_cells(), 0.0);
  valid_tokens_.assign(header_.num_emotions(), 0);
  examples_.assign(header_.num_emotions(), 0);
}

void EmotionCounters::Accumulate(const ExampleTrace& example) {
  const int e = example.emotion_id;
  if (e < 0 || e >= header_.num_emotions()) {
    throw Error(ErrorKind::kLabel,
                "example_id " + std::to_string(example.example_id) +
                    ": emotion_id " + std::to_string(e) +
                    " outside vocabulary of size " +
                    std::to_string(header_.num_emotions()));
  }
  ValidateExample(header_, example);

  const int num_emotions = header_.num_emotions();
  const int tokens = example.num_tokens();
  for (int l = 0; l < header_.num_layers(); ++l) {
    const int width = header_.gate_widths[l];
    const float* gates = example.gates[l].data();
    std::uint64_t* count = &positive_count_[layout_.cell(l, 0, e)];
    double* mass = &positive_mass_[layout_.cell(l, 0, e)];
    for (int t = 0; t < tokens; ++t) {
      if (!example.token_mask[t]) continue;
      const float* row = gates + static_cast<std::size_t>(t) * width;
      for (int n = 0; n < width; ++n) {
        const float a = row[n];
        if (a > 0.0f) {
          count[static_cast<std::size_t>(n) * num_emotions] += 1;
          mass[static_cast<std::size_t>(n) * num_emotions] += a;
        }
      }
    }
  }
  valid_tokens_[e] += static_cast<std::uint64_t>(example.num_valid_tokens());
  examples_[e] += 1;
}

void EmotionCounters::MergeFrom(const EmotionCounters& other) {
  if (!header_.Compatible(other.header_)) {
    throw Error(ErrorKind::kIncompatible,
                "cannot merge counters: headers differ (model '" +
                    header_.model_id + "' vs '" + other.header_.model_id +
                    "')");
  }
  for (std::size_t i = 0; i < positive_count_.size(); ++i) {
    positive_count_[i] += other.positive_count_[i];
    positive_mass_[i] += other.positive_mass_[i];
  }
  for (std::size_t e = 0; e < valid_tokens_.size(); ++e) {
    valid_tokens_[e] += other.valid_tokens_[e];
    examples_[e] += other.examples_[e];
  }
}

EmotionCounters Merge(const EmotionCounters& a, const EmotionCounters& b) {
  EmotionCounters out = a;
  out.MergeFrom(b);
  return out;
}

EmotionCounters AccumulateTrace(TraceReader& reader) {
  EmotionCounters counters(reader.header());
  while (auto ex = reader.Next()) counters.Accumulate(*ex);
  return counters;
}

EmotionCounters AccumulateTraceFile(const std::filesystem::path& path) {
  TraceFile file(path);
  EmotionCounters counters(file.header());
  while (auto ex = file.Next()) counters.Accumulate(*ex);
  return counters;
}

int Profiles::num_observed() const {
  return static_cast<int>(std::count(observed.begin(), observed.end(), true));
}

Profiles FinalizeProfiles(const EmotionCounters& counters) {
  Profiles out;
  out.header = counters.header();
  out.layout = counters.layout();
  out.pool_sizes = counters.example_counts();
  const int num_emotions = out.header.num_emotions();
  out.observed.resize(num_emotions);
  for (int e = 0; e < num_emotions; ++e) {
    out.observed[e] = counters.valid_tokens(e) > 0;
  }
  const std::size_t cells = out.layout.num_cells();
  out.frequency.assign(cells, 0.0);
  out.magnitude.assign(cells, 0.0);
  for (std::size_t i = 0; i < cells; ++i) {
    const int e = static_cast<int>(i % num_emotions);
    if (!out.observed[e]) continue;
    const auto total = static_cast<double>(counters.valid_tokens(e));
    out.frequency[i] = static_cast<double>(counters.positive_counts()[i]) / total;
    out.magnitude[i] = counters.positive_masses()[i] / total;
  }
  return out;
}

void WriteStats(const EmotionCounters& counters, std::ostream& out) {
  internal::ByteWriter bytes(out);
  nlohmann::json header = counters.header().ToJson();
  header["example_counts"] = counters.example_counts();
  const std::string json = header.dump();
  bytes.Put(kStatsMagic, sizeof(kStatsMagic));
  bytes.PutUint<std::uint32_t>(kStatsFormatVersion);
  bytes.PutUint<std::uint32_t>(static_cast<std::uint32_t>(json.size()));
  bytes.Put(json.data(), json.size());
  for (auto k : counters.positive_counts()) bytes.PutUint<std::uint64_t>(k);
  for (double s : counters.positive_masses()) bytes.PutF64(s);
  for (auto t : counters.valid_token_counts()) bytes.PutUint<std::uint64_t>(t);
}

EmotionCounters ReadStats(std::istream& in) {
  internal::ByteReader bytes(in);
  char magic[4];
  bytes.Get(magic, sizeof(magic), "magic");
  if (!std::equal(magic, magic + 4, kStatsMagic)) {
    throw FormatError("bad magic, expected ESNS", 0);
  }
  const auto version = bytes.GetUint<std::uint32_t>("version");
  if (version != kStatsFormatVersion) {
    throw FormatError("unsupported stats version " + std::to_string(version), 4);
  }
  const auto len = bytes.GetUint<std::uint32_t>("header length");
  const std::uint64_t header_offset = bytes.offset();
  nlohmann::json header_json;
  try {
    header_json = nlohmann::json::parse(bytes.GetString(len, "header JSON"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid stats header: ") + e.what(),
                      header_offset);
  }
  EmotionCounters counters(TraceHeader::FromJson(header_json));
  const auto example_counts =
      header_json.value("example_counts", std::vector<std::uint64_t>());
  if (example_counts.size() != counters.examples_.size()) {
    throw FormatError("example_counts length disagrees with vocabulary",
                      header_offset);
  }
  counters.examples_ = example_counts;
  for (auto& k : counters.positive_count_) k = bytes.GetUint<std::uint64_t>("K");
  for (auto& s : counters.positive_mass_) s = bytes.GetF64("S");
  for (auto& t : counters.valid_tokens_) t = bytes.GetUint<std::uint64_t>("T");
  return counters;
}

void WriteStatsFile(const EmotionCounters& counters,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  WriteStats(counters, out);
}

EmotionCounters ReadStatsFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return ReadStats(in);
}

}  // namespace esn

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

#ifndef ESN_TRACE_H_
#define ESN_TRACE_H_

// Activation traces: the per-example gate activations logged from a model,
// and the TRACE-v1 file format that decouples logging from identification.
//
// TRACE-v1 layout (all integers little-endian):
//   "ESNT" | u32 version=1 | u32 header_len | header JSON (UTF-8)
//   records: u64 example_id | u16 emotion_id | u32 T | ceil(T/8) mask bytes
//            | for each layer l: T*D_l float32, token-major
// Mask bit t lives in byte t/8 at bit position t%8 (LSB first).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace esn {

inline constexpr std::uint32_t kTraceFormatVersion = 1;

struct TraceHeader {
  int format_version = static_cast<int>(kTraceFormatVersion);
  std::string model_id;
  std::vector<int> gate_widths;  // D_l, one entry per layer.
  std::vector<std::string> emotion_vocab;
  std::string created_at;
  // Free-form producer metadata (e.g. which token positions were logged).
  nlohmann::json metadata = nlohmann::json::object();

  int num_layers() const { return static_cast<int>(gate_widths.size()); }
  int num_emotions() const { return static_cast<int>(emotion_vocab.size()); }
  std::int64_t total_neurons() const;

  // Throws Error(kFormat) if L < 1, any D_l < 1, or the vocab is empty or
  // contains duplicates.
  void Validate() const;

  // Same model, layer widths and vocabulary. Ignores timestamps/metadata.
  bool Compatible(const TraceHeader& other) const;

  nlohmann::json ToJson() const;
  static TraceHeader FromJson(const nlohmann::json& j);

  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

struct ExampleTrace {
  std::uint64_t example_id = 0;
  int emotion_id = 0;
  std::vector<std::uint8_t> token_mask;  // m_t in {0,1}, length T.
  std::vector<std::vector<float>> gates;  // Per layer, T x D_l token-major.

  int num_tokens() const { return static_cast<int>(token_mask.size()); }
  int num_valid_tokens() const;

  float gate(int layer, int token, int neuron, int width) const {
    return gates[layer][static_cast<std::size_t>(token) * width + neuron];
  }

  friend bool operator==(const ExampleTrace&, const ExampleTrace&) = default;
};

// Checks an example against the header. Throws FormatError naming the
// example_id (and layer, for shape problems).
void ValidateExample(const TraceHeader& header, const ExampleTrace& example,
                     std::uint64_t offset = 0);

class TraceWriter {
 public:
  TraceWriter(std::ostream& out, TraceHeader header);
  ~TraceWriter();
  TraceWriter(const TraceWriter&) = delete;
  TraceWriter& operator=(const TraceWriter&) = delete;

  void Write(const ExampleTrace& example);
  std::uint64_t bytes_written() const;
  std::uint64_t records_written() const { return records_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::uint64_t records_ = 0;
};

// Writes a whole trace. Returns the number of bytes emitted.
std::uint64_t WriteTrace(const TraceHeader& header,
                         std::span<const ExampleTrace> examples,
                         std::ostream& out);

struct TraceReaderOptions {
  // Upper bound on the decoded size of a single record in bytes; 0 means
  // unlimited. The reader holds at most one record at a time.
  std::uint64_t max_record_bytes = 0;
};

// Lazily decodes a TRACE-v1 binary stream or its JSONL text variant; the
// format is detected from the first bytes.
class TraceReader {
 public:
  explicit TraceReader(std::istream& in, TraceReaderOptions options = {});
  ~TraceReader();
  TraceReader(const TraceReader&) = delete;
  TraceReader& operator=(const TraceReader&) = delete;

  const TraceHeader& header() const { return header_; }

  // Next example, or nullopt at end of stream.
  std::optional<ExampleTrace> Next();

  bool is_jsonl() const { return jsonl_; }

 private:
  std::optional<ExampleTrace> NextBinary();
  std::optional<ExampleTrace> NextJsonl();

  struct Impl;
  std::unique_ptr<Impl> impl_;
  TraceHeader header_;
  TraceReaderOptions options_;
  bool jsonl_ = false;
};

// Opens a trace file; keeps the file stream alive alongside the reader.
class TraceFile {
 public:
  explicit TraceFile(const std::filesystem::path& path,
                     TraceReaderOptions options = {});

  const TraceHeader& header() const { return reader_->header(); }
  std::optional<ExampleTrace> Next() { return reader_->Next(); }

 private:
  std::ifstream stream_;
  std::unique_ptr<TraceReader> reader_;
};

// Reads an entire stream eagerly. Convenience for tests and small files.
std::pair<TraceHeader, std::vector<ExampleTrace>> ReadAllTraces(
    std::istream& in);

// JSONL variant: first line {"format":"ESNT-jsonl","version":1,"header":{..}},
// then one example per line. Gates are written as nested [T][D_l] arrays;
// the reader also accepts flat arrays and base64 strings of little-endian
// float32 per layer.
void WriteTraceJsonl(const TraceHeader& header,
                     std::span<const ExampleTrace> examples,
                     std::ostream& out);

}  // namespace esn

#endif  // ESN_TRACE_H_

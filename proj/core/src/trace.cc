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

#include "esn/trace.h"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "binary_io.h"
#include "esn/error.h"

namespace esn {
namespace {

constexpr char kTraceMagic[4] = {'E', 'S', 'N', 'T'};
constexpr const char* kJsonlFormat = "ESNT-jsonl";

std::size_t MaskBytes(std::size_t tokens) { return (tokens + 7) / 8; }

std::vector<float> DecodeBase64Floats(const std::string& text,
                                      std::uint64_t line) {
  std::string clean;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  }
  if (clean.size() % 4 != 0) {
    throw FormatError("base64 gate payload has invalid length", line);
  }
  std::vector<unsigned char> raw(clean.size() / 4 * 3 + 1);
  const int n = EVP_DecodeBlock(
      raw.data(), reinterpret_cast<const unsigned char*>(clean.data()),
      static_cast<int>(clean.size()));
  if (n < 0) throw FormatError("invalid base64 gate payload", line);
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock does not account for '=' padding.
  if (!clean.empty() && clean.back() == '=') --len;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') --len;
  if (len % 4 != 0) {
    throw FormatError("base64 gate payload is not a float32 array", line);
  }
  std::vector<float> out(len / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
    }
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

}  // namespace

std::int64_t TraceHeader::total_neurons() const {
  std::int64_t total = 0;
  for (int d : gate_widths) total += d;
  return total;
}

void TraceHeader::Validate() const {
  if (gate_widths.empty()) {
    throw Error(ErrorKind::kFormat, "trace header must have at least one layer");
  }
  for (std::size_t l = 0; l < gate_widths.size(); ++l) {
    if (gate_widths[l] < 1) {
      throw Error(ErrorKind::kFormat, "gate width of layer " +
                                          std::to_string(l) + " must be >= 1");
    }
  }
  if (emotion_vocab.empty()) {
    throw Error(ErrorKind::kFormat, "emotion vocabulary is empty");
  }
  if (emotion_vocab.size() > 0xFFFF) {
    throw Error(ErrorKind::kFormat, "emotion vocabulary exceeds u16 ids");
  }
  std::set<std::string> seen;
  for (const auto& name : emotion_vocab) {
    if (!seen.insert(name).second) {
      throw Error(ErrorKind::kFormat, "duplicate emotion '" + name + "'");
    }
  }
}

bool TraceHeader::Compatible(const TraceHeader& other) const {
  return model_id == other.model_id && gate_widths == other.gate_widths &&
         emotion_vocab == other.emotion_vocab;
}

nlohmann::json TraceHeader::ToJson() const {
  return nlohmann::json{{"format_version", format_version},
                        {"model_id", model_id},
                        {"num_layers", num_layers()},
                        {"gate_widths", gate_widths},
                        {"emotion_vocab", emotion_vocab},
                        {"created_at", created_at},
                        {"metadata", metadata}};
}

TraceHeader TraceHeader::FromJson(const nlohmann::json& j) {
  TraceHeader h;
  try {
    h.format_version = j.at("format_version").get<int>();
    h.model_id = j.at("model_id").get<std::string>();
    h.gate_widths = j.at("gate_widths").get<std::vector<int>>();
    h.emotion_vocab = j.at("emotion_vocab").get<std::vector<std::string>>();
    h.created_at = j.value("created_at", std::string());
    h.metadata = j.value("metadata", nlohmann::json::object());
    if (j.contains("num_layers") &&
        j.at("num_layers").get<int>() != h.num_layers()) {
      throw Error(ErrorKind::kFormat,
                  "num_layers disagrees with gate_widths length");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat,
                std::string("malformed trace header: ") + e.what());
  }
  h.Validate();
  return h;
}

int ExampleTrace::num_valid_tokens() const {
  return static_cast<int>(
      std::count_if(token_mask.begin(), token_mask.end(),
                    [](std::uint8_t m) { return m != 0; }));
}

void ValidateExample(const TraceHeader& header, const ExampleTrace& example,
                     std::uint64_t offset) {
  const std::string who = "example_id " + std::to_string(example.example_id);
  if (example.emotion_id < 0 || example.emotion_id >= header.num_emotions()) {
    throw FormatError(who + ": emotion_id " +
                          std::to_string(example.emotion_id) +
                          " outside vocabulary of size " +
                          std::to_string(header.num_emotions()),
                      offset);
  }
  if (example.token_mask.empty() || example.num_valid_tokens() == 0) {
    throw FormatError(who + ": token mask has no valid position", offset);
  }
  for (std::uint8_t m : example.token_mask) {
    if (m > 1) throw FormatError(who + ": token mask must be 0/1", offset);
  }
  if (static_cast<int>(example.gates.size()) != header.num_layers()) {
    throw FormatError(who + ": has " + std::to_string(example.gates.size()) +
                          " layers, header declares " +
                          std::to_string(header.num_layers()),
                      offset);
  }
  const auto tokens = static_cast<std::size_t>(example.num_tokens());
  for (int l = 0; l < header.num_layers(); ++l) {
    const std::size_t expected = tokens * header.gate_widths[l];
    if (example.gates[l].size() != expected) {
      throw FormatError(who + " layer " + std::to_string(l) + ": expected " +
                            std::to_string(expected) + " gate values (T=" +
                            std::to_string(tokens) + ", D=" +
                            std::to_string(header.gate_widths[l]) + "), got " +
                            std::to_string(example.gates[l].size()),
                        offset);
    }
  }
}

// ---------------------------------------------------------------- writer

struct TraceWriter::Impl {
  explicit Impl(std::ostream& out, TraceHeader h)
      : bytes(out), header(std::move(h)) {}
  internal::ByteWriter bytes;
  TraceHeader header;
};

TraceWriter::TraceWriter(std::ostream& out, TraceHeader header)
    : impl_(std::make_unique<Impl>(out, std::move(header))) {
  impl_->header.Validate();
  const std::string json = impl_->header.ToJson().dump();
  impl_->bytes.Put(kTraceMagic, sizeof(kTraceMagic));
  impl_->bytes.PutUint<std::uint32_t>(kTraceFormatVersion);
  impl_->bytes.PutUint<std::uint32_t>(static_cast<std::uint32_t>(json.size()));
  impl_->bytes.Put(json.data(), json.size());
}

TraceWriter::~TraceWriter() = default;

void TraceWriter::Write(const ExampleTrace& example) {
  auto& out = impl_->bytes;
  ValidateExample(impl_->header, example, out.written());
  out.PutUint<std::uint64_t>(example.example_id);
  out.PutUint<std::uint16_t>(static_cast<std::uint16_t>(example.emotion_id));
  out.PutUint<std::uint32_t>(static_cast<std::uint32_t>(example.num_tokens()));
  std::vector<unsigned char> mask(MaskBytes(example.token_mask.size()), 0);
  for (std::size_t t = 0; t < example.token_mask.size(); ++t) {
    if (example.token_mask[t]) mask[t / 8] |= static_cast<unsigned char>(1u << (t % 8));
  }
  out.Put(mask.data(), mask.size());
  for (const auto& layer : example.gates) out.PutF32s(layer);
  ++records_;
}

std::uint64_t TraceWriter::bytes_written() const {
  return impl_->bytes.written();
}

std::uint64_t WriteTrace(const TraceHeader& header,
                         std::span<const ExampleTrace> examples,
                         std::ostream& out) {
  TraceWriter writer(out, header);
  for (const auto& ex : examples) writer.Write(ex);
  return writer.bytes_written();
}

// ---------------------------------------------------------------- reader

struct TraceReader::Impl {
  explicit Impl(std::istream& in) : stream(in), bytes(in) {}
  std::istream& stream;
  internal::ByteReader bytes;
  std::optional<std::uint64_t> last_id;
  std::uint64_t line = 1;
};

TraceReader::TraceReader(std::istream& in, TraceReaderOptions options)
    : impl_(std::make_unique<Impl>(in)), options_(options) {
  auto& bytes = impl_->bytes;
  if (in.peek() == '{') {
    jsonl_ = true;
    std::string line;
    std::getline(in, line);
    nlohmann::json first;
    try {
      first = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("invalid JSONL trace header: ") + e.what(),
                        0);
    }
    if (first.value("format", std::string()) != kJsonlFormat) {
      throw FormatError("JSONL trace must start with format ESNT-jsonl", 0);
    }
    if (first.value("version", 0) != static_cast<int>(kTraceFormatVersion)) {
      throw FormatError("unsupported trace version " +
                            first.value("version", nlohmann::json()).dump(),
                        0);
    }
    header_ = TraceHeader::FromJson(first.at("header"));
    return;
  }
  char magic[4];
  bytes.Get(magic, sizeof(magic), "magic");
  if (!std::equal(magic, magic + 4, kTraceMagic)) {
    throw FormatError("bad magic, expected ESNT", 0);
  }
  const auto version = bytes.GetUint<std::uint32_t>("version");
  if (version != kTraceFormatVersion) {
    throw FormatError("unsupported trace version " + std::to_string(version),
                      4);
  }
  const auto header_len = bytes.GetUint<std::uint32_t>("header length");
  const std::uint64_t header_offset = bytes.offset();
  const std::string json = bytes.GetString(header_len, "header JSON");
  try {
    header_ = TraceHeader::FromJson(nlohmann::json::parse(json));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid header JSON: ") + e.what(),
                      header_offset);
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(e.what(), header_offset);
  }
}

TraceReader::~TraceReader() = default;

std::optional<ExampleTrace> TraceReader::Next() {
  return jsonl_ ? NextJsonl() : NextBinary();
}

std::optional<ExampleTrace> TraceReader::NextBinary() {
  auto& bytes = impl_->bytes;
  if (bytes.AtEnd()) return std::nullopt;
  bytes.set_last_complete_id(impl_->last_id);
  const std::uint64_t record_offset = bytes.offset();
  ExampleTrace ex;
  ex.example_id = bytes.GetUint<std::uint64_t>("example_id");
  ex.emotion_id = bytes.GetUint<std::uint16_t>("emotion_id");
  const auto tokens = bytes.GetUint<std::uint32_t>("token count");

  std::uint64_t payload = MaskBytes(tokens);
  for (int d : header_.gate_widths) {
    payload += static_cast<std::uint64_t>(tokens) * d * sizeof(float);
  }
  if (options_.max_record_bytes != 0 && payload > options_.max_record_bytes) {
    throw FormatError("record of example_id " + std::to_string(ex.example_id) +
                          " needs " + std::to_string(payload) +
                          " bytes, above the configured cap of " +
                          std::to_string(options_.max_record_bytes),
                      record_offset, impl_->last_id);
  }

  std::vector<unsigned char> mask(MaskBytes(tokens));
  bytes.Get(mask.data(), mask.size(), "token mask");
  ex.token_mask.resize(tokens);
  for (std::uint32_t t = 0; t < tokens; ++t) {
    ex.token_mask[t] = (mask[t / 8] >> (t % 8)) & 1u;
  }
  ex.gates.resize(header_.gate_widths.size());
  for (std::size_t l = 0; l < header_.gate_widths.size(); ++l) {
    ex.gates[l].resize(static_cast<std::size_t>(tokens) *
                       header_.gate_widths[l]);
    bytes.GetF32s(ex.gates[l], "gate activations");
  }
  ValidateExample(header_, ex, record_offset);
  impl_->last_id = ex.example_id;
  return ex;
}

std::optional<ExampleTrace> TraceReader::NextJsonl() {
  std::string line;
  while (true) {
    if (!std::getline(impl_->stream, line)) return std::nullopt;
    ++impl_->line;
    if (line.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  const std::uint64_t where = impl_->line;
  ExampleTrace ex;
  try {
    const auto j = nlohmann::json::parse(line);
    ex.example_id = j.at("example_id").get<std::uint64_t>();
    ex.emotion_id = j.at("emotion_id").get<int>();
    ex.token_mask = j.at("token_mask").get<std::vector<std::uint8_t>>();
    const auto& layers = j.at("gates");
    if (!layers.is_array()) throw FormatError("gates must be an array", where);
    for (const auto& layer : layers) {
      if (layer.is_string()) {
        ex.gates.push_back(DecodeBase64Floats(layer.get<std::string>(), where));
      } else if (!layer.empty() && layer.front().is_array()) {
        std::vector<float> flat;
        for (const auto& row : layer) {
          for (const auto& v : row) flat.push_back(v.get<float>());
        }
        ex.gates.push_back(std::move(flat));
      } else {
        ex.gates.push_back(layer.get<std::vector<float>>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("JSONL line " + std::to_string(where) + ": " + e.what(),
                      where, impl_->last_id);
  }
  // For the text variant the "offset" reported is the line number.
  ValidateExample(header_, ex, where);
  impl_->last_id = ex.example_id;
  return ex;
}

TraceFile::TraceFile(const std::filesystem::path& path,
                     TraceReaderOptions options)
    : stream_(path, std::ios::binary) {
  if (!stream_) throw Error(ErrorKind::kIo, "cannot open trace " + path.string());
  reader_ = std::make_unique<TraceReader>(stream_, options);
}

std::pair<TraceHeader, std::vector<ExampleTrace>> ReadAllTraces(
    std::istream& in) {
  TraceReader reader(in);
  std::vector<ExampleTrace> out;
  while (auto ex = reader.Next()) out.push_back(std::move(*ex));
  return {reader.header(), std::move(out)};
}

void WriteTraceJsonl(const TraceHeader& header,
                     std::span<const ExampleTrace> examples,
                     std::ostream& out) {
  header.Validate();
  out << nlohmann::json{{"format", kJsonlFormat},
                        {"version", kTraceFormatVersion},
                        {"header", header.ToJson()}}
             .dump()
      << '\n';
  for (const auto& ex : examples) {
    ValidateExample(header, ex);
    nlohmann::json layers = nlohmann::json::array();
    for (int l = 0; l < header.num_layers(); ++l) {
      const int width = header.gate_widths[l];
      nlohmann::json rows = nlohmann::json::array();
      for (int t = 0; t < ex.num_tokens(); ++t) {
        auto begin = ex.gates[l].begin() + static_cast<std::ptrdiff_t>(t) * width;
        rows.push_back(std::vector<float>(begin, begin + width));
      }
      layers.push_back(std::move(rows));
    }
    out << nlohmann::json{{"example_id", ex.example_id},
                          {"emotion_id", ex.emotion_id},
                          {"token_mask", ex.token_mask},
                          {"gates", std::move(layers)}}
               .dump()
        << '\n';
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed");
}

}  // namespace esn

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

#ifndef ESN_SRC_BINARY_IO_H_
#define ESN_SRC_BINARY_IO_H_

// Little-endian encoding helpers shared by the TRACE/STATS/MODEL codecs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "esn/error.h"

namespace esn::internal {

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& out) : out_(out) {}

  template <typename UInt>
  void PutUint(UInt value) {
    unsigned char bytes[sizeof(UInt)];
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
      bytes[i] = static_cast<unsigned char>(value >> (8 * i));
    }
    Put(bytes, sizeof(UInt));
  }

  void PutF32(float value) { PutUint(std::bit_cast<std::uint32_t>(value)); }
  void PutF64(double value) { PutUint(std::bit_cast<std::uint64_t>(value)); }

  void PutF32s(std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
      Put(values.data(), values.size_bytes());
    } else {
      for (float v : values) PutF32(v);
    }
  }

  void Put(const void* data, std::size_t size) {
    out_.write(static_cast<const char*>(data),
               static_cast<std::streamsize>(size));
    if (!out_) throw Error(ErrorKind::kIo, "write failed");
    written_ += size;
  }

  std::uint64_t written() const { return written_; }

 private:
  std::ostream& out_;
  std::uint64_t written_ = 0;
};

// Tracks the absolute byte offset so decoding errors can point at the
// failing position.
class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  // True when the stream has no bytes left.
  bool AtEnd() { return in_.peek() == std::char_traits<char>::eof(); }

  template <typename UInt>
  UInt GetUint(const char* what) {
    unsigned char bytes[sizeof(UInt)];
    Get(bytes, sizeof(UInt), what);
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
      value |= static_cast<UInt>(bytes[i]) << (8 * i);
    }
    return value;
  }

  double GetF64(const char* what) {
    return std::bit_cast<double>(GetUint<std::uint64_t>(what));
  }

  void GetF32s(std::span<float> out, const char* what) {
    if constexpr (std::endian::native == std::endian::little) {
      Get(out.data(), out.size_bytes(), what);
    } else {
      for (float& v : out) {
        v = std::bit_cast<float>(GetUint<std::uint32_t>(what));
      }
    }
  }

  void Get(void* data, std::size_t size, const char* what) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != size) {
      offset_ += got;
      throw Truncated(what);
    }
    offset_ += size;
  }

  std::string GetString(std::size_t size, const char* what) {
    std::string s(size, '\0');
    Get(s.data(), size, what);
    return s;
  }

  std::uint64_t offset() const { return offset_; }

  // Set by record-oriented readers to enrich truncation errors.
  void set_last_complete_id(std::optional<std::uint64_t> id) {
    last_complete_id_ = id;
  }

  FormatError Truncated(const char* what) const {
    return FormatError(std::string("truncated input while reading ") + what,
                       offset_, last_complete_id_);
  }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
  std::optional<std::uint64_t> last_complete_id_;
};

}  // namespace esn::internal

#endif  // ESN_SRC_BINARY_IO_H_

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

#ifndef ESN_ERROR_H_
#define ESN_ERROR_H_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace esn {

enum class ErrorKind {
  kConfig,         // Invalid configuration or schema violation.
  kFormat,         // Malformed or incompatible file content.
  kIo,             // Filesystem failure.
  kShape,          // Array shape disagrees with a header.
  kLabel,          // Emotion id outside the vocabulary.
  kIncompatible,   // Headers of two objects disagree.
  kParameter,      // Out-of-range scalar parameter (alpha, tau, r, ...).
  kShortfall,      // Not enough rankable neurons to fill a budget.
  kMaskMismatch,   // Mask indices do not fit the model.
  kConstruction,   // Model configuration cannot be built.
  kPrecondition,   // Any other violated precondition.
};

std::string_view ErrorKindName(ErrorKind kind);

// Base exception for every failure raised by the toolkit.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by the binary readers. Carries the byte offset at which decoding
// failed and, when known, the id of the last fully decoded record.
class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::uint64_t offset,
              std::optional<std::uint64_t> last_complete_id = std::nullopt);

  std::uint64_t offset() const { return offset_; }
  const std::optional<std::uint64_t>& last_complete_id() const {
    return last_complete_id_;
  }

 private:
  std::uint64_t offset_;
  std::optional<std::uint64_t> last_complete_id_;
};

// Process exit code contract: 0 success, 2 config, 3 domain, 4 I/O.
int ExitCodeFor(ErrorKind kind);

}  // namespace esn

#endif  // ESN_ERROR_H_

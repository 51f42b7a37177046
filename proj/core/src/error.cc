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

#include "esn/error.h"

namespace esn {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return "config";
    case ErrorKind::kFormat:
      return "format";
    case ErrorKind::kIo:
      return "io";
    case ErrorKind::kShape:
      return "shape";
    case ErrorKind::kLabel:
      return "label";
    case ErrorKind::kIncompatible:
      return "incompatible";
    case ErrorKind::kParameter:
      return "parameter";
    case ErrorKind::kShortfall:
      return "shortfall";
    case ErrorKind::kMaskMismatch:
      return "mask-mismatch";
    case ErrorKind::kConstruction:
      return "construction";
    case ErrorKind::kPrecondition:
      return "precondition";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

FormatError::FormatError(const std::string& message, std::uint64_t offset,
                         std::optional<std::uint64_t> last_complete_id)
    : Error(ErrorKind::kFormat,
            message + " (at byte offset " + std::to_string(offset) +
                (last_complete_id
                     ? ", last complete example_id " +
                           std::to_string(*last_complete_id)
                     : std::string()) +
                ")"),
      offset_(offset),
      last_complete_id_(last_complete_id) {}

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kFormat:
    case ErrorKind::kIo:
      return 4;
    default:
      return 3;
  }
}

}  // namespace esn

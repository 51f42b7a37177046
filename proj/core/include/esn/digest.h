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

#ifndef ESN_DIGEST_H_
#define ESN_DIGEST_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace esn {

// Lowercase hex SHA-256 of `data`.
std::string Sha256Hex(std::string_view data);

// Lowercase hex SHA-256 of a file's content.
std::string Sha256FileHex(const std::filesystem::path& path);

// Derives an independent 64-bit seed for a named stage from a root seed.
// Stable across platforms and builds.
std::uint64_t DeriveSeed(std::uint64_t root, std::string_view label);

}  // namespace esn

#endif  // ESN_DIGEST_H_

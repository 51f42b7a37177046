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

#ifndef ESN_ANSWER_H_
#define ESN_ANSWER_H_

// Maps free-form multiple-choice answers to an option index.
//
// The text is lowercased, whitespace is collapsed and surrounding
// punctuation stripped, then:
//   1. the last integer in [1, |options|] wins;
//   2. otherwise a spelled-out number ("one".."ten") in range, if all such
//      words agree on one value;
//   3. otherwise the option whose name (or a common inflection, e.g. "sad"
//      for "sadness") occurs last in the text;
//   4. otherwise the answer is invalid.
// Never throws.

#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace esn {

enum class ParsePath { kDigit, kSpelled, kStringMatch, kInvalid };

std::string_view ParsePathName(ParsePath path);

struct AnswerParseResult {
  std::optional<int> option;  // 1-based option slot.
  ParsePath path = ParsePath::kInvalid;

  bool valid() const { return option.has_value(); }
  friend bool operator==(const AnswerParseResult&, const AnswerParseResult&) = default;
};

std::string NormalizeText(std::string_view text);

AnswerParseResult NormalizeAnswer(std::string_view text,
                                  std::span<const std::string> options);

}  // namespace esn

#endif  // ESN_ANSWER_H_

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

#include "esn/answer.h"

#include <array>
#include <map>
#include <set>
#include <vector>

namespace esn {
namespace {

bool IsSpace(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}
bool IsDigit(char c) { return c >= '0' && c <= '9'; }
bool IsAlpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool IsPunct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x21 && u <= 0x7E && !IsDigit(c) && !IsAlpha(c);
}
char Lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

constexpr std::array<std::string_view, 10> kSpelled = {
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"};

// Inflected forms accepted for common emotion labels.
const std::map<std::string, std::vector<std::string>>& EmotionForms() {
  static const auto* forms = new std::map<std::string, std::vector<std::string>>{
      {"anger", {"angry", "angrily", "angered"}},
      {"happiness", {"happy", "happily"}},
      {"happy", {"happiness", "happily"}},
      {"joy", {"joyful", "joyous"}},
      {"sadness", {"sad", "sadly"}},
      {"sad", {"sadness", "sadly"}},
      {"neutral", {"neutrality", "neutrally"}},
      {"surprise", {"surprised", "surprising", "surprisingly"}},
      {"frustration", {"frustrated", "frustrating"}},
      {"fear", {"fearful", "afraid", "scared"}},
      {"disgust", {"disgusted", "disgusting"}},
      {"excitement", {"excited", "exciting"}},
      {"contempt", {"contemptuous"}},
      {"calm", {"calmly", "calmness"}},
  };
  return *forms;
}

std::vector<std::string> Words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (IsAlpha(c) || IsDigit(c)) {
      cur.push_back(Lower(c));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

// Every spelling of an option as a word sequence.
std::vector<std::vector<std::string>> OptionForms(const std::string& option) {
  std::vector<std::vector<std::string>> forms;
  std::set<std::vector<std::string>> seen;
  auto add = [&](std::vector<std::string> w) {
    if (!w.empty() && seen.insert(w).second) forms.push_back(std::move(w));
  };
  const std::string name = NormalizeText(option);
  add(Words(name));
  // "joy/happiness" style labels list alternatives.
  std::size_t start = 0;
  while (start <= name.size()) {
    const std::size_t slash = name.find('/', start);
    const std::string part = name.substr(start, slash == std::string::npos
                                                    ? std::string::npos
                                                    : slash - start);
    const auto part_words = Words(part);
    add(part_words);
    if (part_words.size() == 1) {
      auto it = EmotionForms().find(part_words.front());
      if (it != EmotionForms().end()) {
        for (const auto& f : it->second) add({f});
      }
    }
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  return forms;
}

std::optional<int> LastInRangeInteger(const std::string& text, int num_options) {
  std::optional<int> last;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    if (!IsDigit(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && IsDigit(text[j])) ++j;
    const bool negative = i > 0 && text[i - 1] == '-' &&
                          (i < 2 || !(IsAlpha(text[i - 2]) || IsDigit(text[i - 2])));
    // Digits on either side of a '.' form a decimal, not an option number.
    const bool decimal = (i >= 2 && text[i - 1] == '.' && IsDigit(text[i - 2])) ||
                         (j + 1 < n && text[j] == '.' && IsDigit(text[j + 1]));
    if (!negative && !decimal) {
      std::size_t k = i;
      while (k + 1 < j && text[k] == '0') ++k;
      if (j - k <= 3) {
        const int value = std::stoi(text.substr(k, j - k));
        if (value >= 1 && value <= num_options) last = value;
      }
    }
    i = j;
  }
  return last;
}

std::optional<int> UnambiguousSpelled(const std::vector<std::string>& words,
                                      int num_options) {
  std::set<int> values;
  for (const auto& w : words) {
    for (std::size_t v = 0; v < kSpelled.size(); ++v) {
      if (w == kSpelled[v] && static_cast<int>(v) + 1 <= num_options) {
        values.insert(static_cast<int>(v) + 1);
      }
    }
  }
  if (values.size() == 1) return *values.begin();
  return std::nullopt;
}

std::optional<int> LastOptionMention(const std::vector<std::string>& words,
                                     std::span<const std::string> options) {
  int best_option = -1;
  long best_end = -1;
  for (std::size_t o = 0; o < options.size(); ++o) {
    for (const auto& form : OptionForms(options[o])) {
      if (form.size() > words.size()) continue;
      for (std::size_t i = 0; i + form.size() <= words.size(); ++i) {
        bool match = true;
        for (std::size_t k = 0; k < form.size() && match; ++k) {
          match = words[i + k] == form[k];
        }
        const long end = static_cast<long>(i + form.size()) - 1;
        if (match && end > best_end) {
          best_end = end;
          best_option = static_cast<int>(o) + 1;
        }
      }
    }
  }
  if (best_option < 0) return std::nullopt;
  return best_option;
}

}  // namespace

std::string_view ParsePathName(ParsePath path) {
  switch (path) {
    case ParsePath::kDigit:
      return "digit";
    case ParsePath::kSpelled:
      return "spelled";
    case ParsePath::kStringMatch:
      return "string-match";
    case ParsePath::kInvalid:
      return "invalid";
  }
  return "invalid";
}

std::string NormalizeText(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (IsSpace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(Lower(c));
  }
  std::size_t begin = 0;
  std::size_t end = out.size();
  while (begin < end && (IsPunct(out[begin]) || out[begin] == ' ')) {
    if (out[begin] == '-' && begin + 1 < end && IsDigit(out[begin + 1])) break;
    ++begin;
  }
  while (end > begin && (IsPunct(out[end - 1]) || out[end - 1] == ' ')) --end;
  return out.substr(begin, end - begin);
}

AnswerParseResult NormalizeAnswer(std::string_view text,
                                  std::span<const std::string> options) {
  if (options.empty()) return {};
  const int num_options = static_cast<int>(options.size());
  const std::string norm = NormalizeText(text);
  if (auto v = LastInRangeInteger(norm, num_options)) {
    return {v, ParsePath::kDigit};
  }
  const auto words = Words(norm);
  if (auto v = UnambiguousSpelled(words, num_options)) {
    return {v, ParsePath::kSpelled};
  }
  if (auto v = LastOptionMention(words, options)) {
    return {v, ParsePath::kStringMatch};
  }
  return {};
}

}  // namespace esn

/*
 * Copyright 2026 The QAC Authors.
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

#ifndef QAC_TEXT_HPP_
#define QAC_TEXT_HPP_

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace qac {

// A normalized query string: lowercase, NFC, trimmed, single-spaced and free
// of control characters. Construct through normalize_query().
struct Query {
  std::string text;

  friend auto operator<=>(const Query&, const Query&) = default;
};

// Lowercases, applies Unicode NFC, replaces control characters with spaces,
// trims and collapses whitespace runs. May return an empty string.
std::string normalize_text(std::string_view raw);

// normalize_text() plus the non-empty requirement.
// Throws Error(kEmptyAfterNormalization).
Query normalize_query(std::string_view raw);

// Normalized alphanumeric runs of `raw`; punctuation and whitespace separate
// tokens.
std::vector<std::string> tokenize(std::string_view raw);

// True when `token` equals `probe` or extends it (prefix-of-token match).
inline bool token_matches(std::string_view probe, std::string_view token) {
  return token.starts_with(probe);
}

// Fraction of `probe` tokens matched (exactly or as a token prefix) by some
// token in `haystack`. Empty probe scores 0.
double token_overlap(const std::vector<std::string>& probe,
                     const std::vector<std::string>& haystack);

std::string_view trim(std::string_view s);

// Splits on '\n'; a trailing '\r' on each line is dropped.
std::vector<std::string_view> split_lines(std::string_view s);

}  // namespace qac

#endif  // QAC_TEXT_HPP_

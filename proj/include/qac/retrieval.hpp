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

#ifndef QAC_RETRIEVAL_HPP_
#define QAC_RETRIEVAL_HPP_

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qac/text.hpp"

namespace qac {

inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

struct QueryStats {
  double frequency = 0.0;
  double conversion_rate = 0.0;
  double click_through_rate = 0.0;

  friend bool operator==(const QueryStats&, const QueryStats&) = default;
};

// One line of a query log before normalization. `line` is 1-based and only
// used for error reporting.
struct LogRecord {
  std::string raw_query;
  QueryStats stats;
  std::size_t line = 0;
};

struct QueryHit {
  Query query;
  QueryStats stats;

  friend bool operator==(const QueryHit&, const QueryHit&) = default;
};

// Prefix-ordered map from normalized query text to merged stats. Immutable
// once built; concurrent readers need no synchronization.
class QueryIndex {
 public:
  using Map = std::map<std::string, QueryStats, std::less<>>;

  QueryIndex() = default;
  explicit QueryIndex(Map entries) : entries_(std::move(entries)) {}

  // Exact lookup by normalized text.
  const QueryStats* find(std::string_view normalized) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Map& entries() const { return entries_; }

 private:
  Map entries_;
};

// Duplicates merge by summing frequency and frequency-weighting the rates
// (plain average when the merged frequency is zero).
// Throws Error(kMalformedRecord) with the offending line in detail().
QueryIndex build_query_index(std::span<const LogRecord> records);

// Queries whose text starts with the normalized prefix, by frequency
// descending then text ascending, truncated to `limit` (>= 1).
std::vector<QueryHit> lookup_prefix(const QueryIndex& index,
                                    std::string_view prefix,
                                    std::size_t limit);

// JSONL {query, frequency, conversion_rate, click_through_rate}.
std::vector<LogRecord> read_query_log(std::istream& in);
std::vector<LogRecord> load_query_log(const std::filesystem::path& path);
// Writes the merged index in the query-log schema, ordered by query text.
void write_query_index(const QueryIndex& index, std::ostream& out);

struct CatalogItem {
  std::string item_id;
  std::string title;
  std::string category;
  std::string description;
  double rating = 0.0;
  double popularity = 0.0;

  friend bool operator==(const CatalogItem&, const CatalogItem&) = default;
};

// Catalog with pre-tokenized title+description documents.
class Catalog {
 public:
  Catalog() = default;
  // Throws Error(kMalformedRecord) on a duplicate id or an empty title.
  explicit Catalog(std::vector<CatalogItem> items);

  std::span<const CatalogItem> items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  const std::vector<std::string>& tokens(std::size_t i) const {
    return tokens_[i];
  }
  const CatalogItem* find(std::string_view item_id) const;
  // True when `normalized` equals the normalized title of some item.
  bool is_title(std::string_view normalized) const;

 private:
  std::vector<CatalogItem> items_;
  std::vector<std::vector<std::string>> tokens_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::vector<std::string> sorted_titles_;
};

std::vector<CatalogItem> read_catalog(std::istream& in);
Catalog load_catalog(const std::filesystem::path& path);

using EmbeddingHook =
    std::function<double(std::string_view prefix, const CatalogItem& item)>;

struct RetrieverConfig {
  double lexical_weight = 0.7;
  // Similarity in [0,1]; empty means the embedding term contributes 0.
  EmbeddingHook embedding;
};

// Points into the Catalog passed to retrieve_items; valid while it lives.
struct ScoredItem {
  const CatalogItem* item = nullptr;
  double score = 0.0;
  double lexical_score = 0.0;
};

// Fraction of prefix tokens matched by a document token, where a token that
// extends the prefix token counts as a match.
double lexical_score(const std::vector<std::string>& prefix_tokens,
                     const std::vector<std::string>& doc_tokens);

// score = w * lexical + (1 - w) * embedding, ordered by score descending,
// then popularity descending, then item_id ascending.
std::vector<ScoredItem> retrieve_items(const Catalog& catalog,
                                       std::string_view prefix,
                                       std::size_t limit,
                                       const RetrieverConfig& config = {});

}  // namespace qac

#endif  // QAC_RETRIEVAL_HPP_

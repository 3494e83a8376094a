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

#include "qac/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "jsonl.hpp"
#include "qac/error.hpp"

namespace qac {
namespace {

using internal::json;

[[noreturn]] void malformed(std::size_t line, const std::string& why) {
  throw Error(ErrorCode::kMalformedRecord,
              "record " + std::to_string(line) + ": " + why,
              std::to_string(line));
}

bool is_rate(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

struct Accumulator {
  double frequency = 0.0;
  double weighted_conversion = 0.0;
  double weighted_ctr = 0.0;
  double plain_conversion = 0.0;
  double plain_ctr = 0.0;
  std::size_t count = 0;

  void add(const QueryStats& s) {
    frequency += s.frequency;
    weighted_conversion += s.frequency * s.conversion_rate;
    weighted_ctr += s.frequency * s.click_through_rate;
    plain_conversion += s.conversion_rate;
    plain_ctr += s.click_through_rate;
    ++count;
  }

  QueryStats merged() const {
    QueryStats out;
    out.frequency = frequency;
    if (frequency > 0.0) {
      out.conversion_rate = weighted_conversion / frequency;
      out.click_through_rate = weighted_ctr / frequency;
    } else {
      out.conversion_rate = plain_conversion / static_cast<double>(count);
      out.click_through_rate = plain_ctr / static_cast<double>(count);
    }
    out.conversion_rate = std::clamp(out.conversion_rate, 0.0, 1.0);
    out.click_through_rate = std::clamp(out.click_through_rate, 0.0, 1.0);
    return out;
  }
};

bool hit_order(const QueryHit& a, const QueryHit& b) {
  if (a.stats.frequency != b.stats.frequency) {
    return a.stats.frequency > b.stats.frequency;
  }
  return a.query.text < b.query.text;
}

}  // namespace

const QueryStats* QueryIndex::find(std::string_view normalized) const {
  const auto it = entries_.find(normalized);
  return it == entries_.end() ? nullptr : &it->second;
}

QueryIndex build_query_index(std::span<const LogRecord> records) {
  std::map<std::string, Accumulator, std::less<>> acc;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const LogRecord& r = records[i];
    const std::size_t line = r.line != 0 ? r.line : i + 1;
    const QueryStats& s = r.stats;
    if (!std::isfinite(s.frequency) || s.frequency < 0.0) {
      malformed(line, "frequency must be a non-negative number");
    }
    if (!is_rate(s.conversion_rate) || !is_rate(s.click_through_rate)) {
      malformed(line, "rates must lie in [0,1]");
    }
    std::string text = normalize_text(r.raw_query);
    if (text.empty()) malformed(line, "query is empty after normalization");
    acc[std::move(text)].add(s);
  }
  QueryIndex::Map entries;
  for (auto& [text, a] : acc) entries.emplace(text, a.merged());
  return QueryIndex(std::move(entries));
}

std::vector<QueryHit> lookup_prefix(const QueryIndex& index,
                                    std::string_view prefix,
                                    std::size_t limit) {
  if (limit == 0) throw std::invalid_argument("lookup_prefix: limit must be >= 1");
  const std::string p = normalize_text(prefix);
  std::vector<QueryHit> hits;
  const auto& entries = index.entries();
  for (auto it = entries.lower_bound(p);
       it != entries.end() && std::string_view(it->first).starts_with(p); ++it) {
    hits.push_back({Query{it->first}, it->second});
  }
  if (hits.size() > limit) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(limit),
                      hits.end(), hit_order);
    hits.resize(limit);
  } else {
    std::sort(hits.begin(), hits.end(), hit_order);
  }
  return hits;
}

std::vector<LogRecord> read_query_log(std::istream& in) {
  std::vector<LogRecord> records;
  internal::for_each_jsonl(in, [&](const json& j, std::size_t line) {
    if (!j.contains("query") || !j["query"].is_string()) {
      malformed(line, "missing string field 'query'");
    }
    if (!j.contains("frequency") || !j["frequency"].is_number()) {
      malformed(line, "missing numeric field 'frequency'");
    }
    LogRecord r;
    r.line = line;
    r.raw_query = j["query"].get<std::string>();
    r.stats.frequency = j["frequency"].get<double>();
    r.stats.conversion_rate = j.value("conversion_rate", 0.0);
    r.stats.click_through_rate = j.value("click_through_rate", 0.0);
    records.push_back(std::move(r));
  });
  return records;
}

std::vector<LogRecord> load_query_log(const std::filesystem::path& path) {
  auto in = internal::open_input(path);
  return read_query_log(in);
}

void write_query_index(const QueryIndex& index, std::ostream& out) {
  for (const auto& [text, s] : index.entries()) {
    json j;
    j["query"] = text;
    j["frequency"] = s.frequency;
    j["conversion_rate"] = s.conversion_rate;
    j["click_through_rate"] = s.click_through_rate;
    out << internal::dump_line(j) << '\n';
  }
}

Catalog::Catalog(std::vector<CatalogItem> items) : items_(std::move(items)) {
  tokens_.reserve(items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const CatalogItem& item = items_[i];
    if (trim(item.title).empty()) malformed(i + 1, "empty title");
    if (!by_id_.emplace(item.item_id, i).second) {
      malformed(i + 1, "duplicate item_id '" + item.item_id + "'");
    }
    tokens_.push_back(tokenize(item.title + " " + item.description));
    sorted_titles_.push_back(normalize_text(item.title));
  }
  std::sort(sorted_titles_.begin(), sorted_titles_.end());
}

const CatalogItem* Catalog::find(std::string_view item_id) const {
  const auto it = by_id_.find(std::string(item_id));
  return it == by_id_.end() ? nullptr : &items_[it->second];
}

bool Catalog::is_title(std::string_view normalized) const {
  return std::binary_search(sorted_titles_.begin(), sorted_titles_.end(),
                            normalized);
}

std::vector<CatalogItem> read_catalog(std::istream& in) {
  std::vector<CatalogItem> items;
  internal::for_each_jsonl(in, [&](const json& j, std::size_t line) {
    CatalogItem item;
    if (!j.contains("item_id")) malformed(line, "missing field 'item_id'");
    item.item_id = j["item_id"].is_string() ? j["item_id"].get<std::string>()
                                            : j["item_id"].dump();
    if (!j.contains("title") || !j["title"].is_string()) {
      malformed(line, "missing string field 'title'");
    }
    item.title = j["title"].get<std::string>();
    item.category = j.value("category", std::string());
    item.description = j.value("description", std::string());
    item.rating = j.value("rating", 0.0);
    item.popularity = j.value("popularity", 0.0);
    if (!(item.rating >= 0.0 && item.rating <= 5.0)) {
      malformed(line, "rating must lie in [0,5]");
    }
    if (!(item.popularity >= 0.0)) malformed(line, "negative popularity");
    items.push_back(std::move(item));
  });
  return items;
}

Catalog load_catalog(const std::filesystem::path& path) {
  auto in = internal::open_input(path);
  return Catalog(read_catalog(in));
}

double lexical_score(const std::vector<std::string>& prefix_tokens,
                     const std::vector<std::string>& doc_tokens) {
  return token_overlap(prefix_tokens, doc_tokens);
}

std::vector<ScoredItem> retrieve_items(const Catalog& catalog,
                                       std::string_view prefix,
                                       std::size_t limit,
                                       const RetrieverConfig& config) {
  if (limit == 0) throw std::invalid_argument("retrieve_items: limit must be >= 1");
  const std::vector<std::string> probe = tokenize(prefix);
  const double w = config.lexical_weight;
  std::vector<ScoredItem> scored;
  scored.reserve(catalog.size());
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const CatalogItem& item = catalog.items()[i];
    const double lex = lexical_score(probe, catalog.tokens(i));
    const double emb = config.embedding ? config.embedding(prefix, item) : 0.0;
    scored.push_back({&item, w * lex + (1.0 - w) * emb, lex});
  }
  const auto order = [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.item->popularity != b.item->popularity) {
      return a.item->popularity > b.item->popularity;
    }
    return a.item->item_id < b.item->item_id;
  };
  if (scored.size() > limit) {
    std::partial_sort(scored.begin(),
                      scored.begin() + static_cast<std::ptrdiff_t>(limit),
                      scored.end(), order);
    scored.resize(limit);
  } else {
    std::sort(scored.begin(), scored.end(), order);
  }
  return scored;
}

}  // namespace qac

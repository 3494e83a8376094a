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

#ifndef QAC_CONTEXT_HPP_
#define QAC_CONTEXT_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <string_view>
#include <vector>

#include "qac/retrieval.hpp"

namespace qac {

// A user-typed prefix with its traffic weight and optional stratum tag
// (head/torso/tail) used by evaluation.
struct Prefix {
  std::string text;
  double traffic_weight = 1.0;
  std::string stratum;
};

// Throws std::invalid_argument when the text is blank or the weight negative.
Prefix make_prefix(std::string text, double traffic_weight = 1.0,
                   std::string stratum = {});

struct CandidateEntry {
  Query query;
  QueryStats stats;
  std::vector<std::string> sample_titles;

  friend bool operator==(const CandidateEntry&, const CandidateEntry&) = default;
};

struct RetrievedContext {
  Prefix prefix;
  std::vector<CandidateEntry> candidates;
  std::vector<CatalogItem> items;
};

struct ContextConfig {
  std::size_t max_candidates = 15;
  std::size_t max_items = 10;
  std::size_t sample_titles = 3;
  RetrieverConfig retriever;
};

RetrievedContext build_context(const Prefix& prefix, const QueryIndex& index,
                               const Catalog& catalog,
                               const ContextConfig& config = {});

struct PromptText {
  std::string rendered;
  std::size_t candidate_count = 0;
  std::size_t item_count = 0;
};

// Generation template with the five required placeholders.
std::string_view default_generation_template();

// Formats one candidate line: "query | freq | conv | ctr | results: t1; t2".
std::string format_candidate_line(const CandidateEntry& candidate);
// Formats one item line: "title | category | description".
std::string format_item_line(const CatalogItem& item);

// Substitutes {prefix}, {query_candidate_count}, {relevant_app_count},
// {candidates_block} and {items_block}. Empty blocks render as "(none)".
// Throws Error(kMissingPlaceholder) naming the first absent placeholder.
PromptText render_prompt(const RetrievedContext& context,
                         std::string_view template_text);

// Single left-to-right pass replacing "{name}" for each listed name;
// substituted values are never rescanned. Unknown braces are kept.
std::string substitute_all(
    std::string_view text,
    std::span<const std::pair<std::string_view, std::string>> values);

}  // namespace qac

#endif  // QAC_CONTEXT_HPP_

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

#include "qac/context.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qac/error.hpp"

namespace qac {
namespace {

constexpr std::string_view kGenerationTemplate =
    R"([SYSTEM]
You suggest search queries for an app store. Using the partial query typed by
the user and the historical queries and app records below, write up to 10
distinct, accurate query completions that lead the user to relevant apps.

[INPUT]
1. User Prefix:
   {prefix}

2. Query Candidates ({query_candidate_count}):
   Format: query | frequency | conversion rate | click-through rate | results
{candidates_block}

3. Apps Metadata ({relevant_app_count}):
   Format: title | category | description
{items_block}

[GUIDELINES]
- Use only the query candidates and app records above as evidence.
- Every suggestion should extend the typed prefix or be a near variant of it.
- Skip unsafe or policy-breaking queries; an app's exact title is still allowed.
- Do not suggest two queries that would return nearly the same results.
- A short list of strong suggestions beats a long list of weak ones.

[OUTPUT FORMAT]
Output nothing but the queries, one per line, between <answer> and </answer>:

<answer>
query1
query2
...
</answer>
)";

constexpr std::array<std::string_view, 5> kPlaceholders = {
    "prefix", "query_candidate_count", "relevant_app_count",
    "candidates_block", "items_block"};

std::string format_number(double v) {
  char buf[64];
  if (std::nearbyint(v) == v && std::fabs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
  } else {
    std::snprintf(buf, sizeof buf, "%g", v);
  }
  return buf;
}

std::string format_rate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string single_line(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out.push_back(c == '\n' || c == '\r' ? ' ' : c);
  return out;
}

}  // namespace

Prefix make_prefix(std::string text, double traffic_weight, std::string stratum) {
  if (trim(text).empty()) throw std::invalid_argument("prefix text is blank");
  if (!(traffic_weight >= 0.0) || !std::isfinite(traffic_weight)) {
    throw std::invalid_argument("traffic weight must be a finite value >= 0");
  }
  return Prefix{std::move(text), traffic_weight, std::move(stratum)};
}

RetrievedContext build_context(const Prefix& prefix, const QueryIndex& index,
                               const Catalog& catalog,
                               const ContextConfig& config) {
  RetrievedContext ctx;
  ctx.prefix = prefix;
  if (config.max_candidates > 0) {
    for (QueryHit& hit : lookup_prefix(index, prefix.text, config.max_candidates)) {
      CandidateEntry entry{std::move(hit.query), hit.stats, {}};
      if (config.sample_titles > 0) {
        for (const ScoredItem& s : retrieve_items(catalog, entry.query.text,
                                                  config.sample_titles,
                                                  config.retriever)) {
          entry.sample_titles.push_back(s.item->title);
        }
      }
      ctx.candidates.push_back(std::move(entry));
    }
  }
  if (config.max_items > 0) {
    for (const ScoredItem& s :
         retrieve_items(catalog, prefix.text, config.max_items, config.retriever)) {
      ctx.items.push_back(*s.item);
    }
  }
  return ctx;
}

std::string_view default_generation_template() { return kGenerationTemplate; }

std::string format_candidate_line(const CandidateEntry& c) {
  std::string line = c.query.text;
  line += " | " + format_number(c.stats.frequency);
  line += " | " + format_rate(c.stats.conversion_rate);
  line += " | " + format_rate(c.stats.click_through_rate);
  line += " | results: ";
  for (std::size_t i = 0; i < c.sample_titles.size(); ++i) {
    if (i > 0) line += "; ";
    line += single_line(c.sample_titles[i]);
  }
  return line;
}

std::string format_item_line(const CatalogItem& item) {
  return single_line(item.title) + " | " + single_line(item.category) + " | " +
         single_line(item.description);
}

std::string substitute_all(
    std::string_view text,
    std::span<const std::pair<std::string_view, std::string>> values) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text[pos] == '{') {
      bool replaced = false;
      for (const auto& [name, value] : values) {
        const std::string_view rest = text.substr(pos + 1);
        if (rest.starts_with(name) && rest.size() > name.size() &&
            rest[name.size()] == '}') {
          out += value;
          pos += name.size() + 2;
          replaced = true;
          break;
        }
      }
      if (replaced) continue;
    }
    out.push_back(text[pos++]);
  }
  return out;
}

PromptText render_prompt(const RetrievedContext& context,
                         std::string_view template_text) {
  for (std::string_view name : kPlaceholders) {
    if (template_text.find("{" + std::string(name) + "}") == std::string_view::npos) {
      throw Error(ErrorCode::kMissingPlaceholder,
                  "template lacks {" + std::string(name) + "}", std::string(name));
    }
  }
  std::string candidates;
  for (const auto& c : context.candidates) {
    if (!candidates.empty()) candidates += '\n';
    candidates += format_candidate_line(c);
  }
  std::string items;
  for (const auto& item : context.items) {
    if (!items.empty()) items += '\n';
    items += format_item_line(item);
  }
  if (candidates.empty()) candidates = "(none)";
  if (items.empty()) items = "(none)";

  const std::vector<std::pair<std::string_view, std::string>> values = {
      {"prefix", single_line(context.prefix.text)},
      {"query_candidate_count", std::to_string(context.candidates.size())},
      {"relevant_app_count", std::to_string(context.items.size())},
      {"candidates_block", std::move(candidates)},
      {"items_block", std::move(items)},
  };
  std::string out = substitute_all(template_text, values);
  return PromptText{std::move(out), context.candidates.size(), context.items.size()};
}

}  // namespace qac

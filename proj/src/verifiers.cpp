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

#include "qac/verifiers.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "jsonl.hpp"

namespace qac {

CatalogBackend::CatalogBackend(const Catalog& catalog, std::size_t page_depth,
                               RetrieverConfig retriever)
    : catalog_(catalog), page_depth_(page_depth), retriever_(std::move(retriever)) {
  if (page_depth_ == 0) throw std::invalid_argument("page_depth must be >= 1");
}

ResultPage CatalogBackend::search(const Query& query) const {
  ResultPage page;
  for (const ScoredItem& s : retrieve_items(catalog_, query.text, page_depth_, retriever_)) {
    page.push_back({s.item->item_id, s.lexical_score});
  }
  return page;
}

std::vector<ResultPage> fetch_pages(const SearchBackend& backend,
                                    const SuggestionList& list) {
  std::vector<ResultPage> pages;
  pages.reserve(list.size());
  for (const Query& q : list.queries) pages.push_back(backend.search(q));
  return pages;
}

int verify_format(std::string_view raw, std::size_t max_queries) {
  return parse_answer_block(raw, max_queries).ok() ? 1 : 0;
}

double discounted_mean(std::span<const double> gains) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < gains.size(); ++i) {
    const double discount = 1.0 / std::log2(static_cast<double>(i) + 2.0);
    num += gains[i] * discount;
    den += discount;
  }
  return den > 0.0 ? num / den : 0.0;
}

double default_relevance_scorer(std::string_view prefix, const Query& query) {
  const std::string p = normalize_text(prefix);
  const double completes = !p.empty() && query.text.starts_with(p) ? 1.0 : 0.0;
  return 0.5 * completes + 0.5 * token_overlap(tokenize(p), tokenize(query.text));
}

double score_relevance(std::string_view prefix, const SuggestionList& list,
                       const ItemScorer& scorer) {
  std::vector<double> gains;
  gains.reserve(list.size());
  for (const Query& q : list.queries) {
    gains.push_back(std::clamp(scorer(prefix, q), 0.0, 1.0));
  }
  return discounted_mean(gains);
}

double IndexStatsSource::conditional_conversion(std::string_view prefix,
                                                const Query& query) const {
  if (!query.text.starts_with(normalize_text(prefix))) return 0.0;
  const QueryStats* s = index_.find(query.text);
  return s ? s->conversion_rate : 0.0;
}

double IndexStatsSource::global_conversion(const Query& query) const {
  const QueryStats* s = index_.find(query.text);
  return s ? s->conversion_rate : 0.0;
}

double score_engagement(std::string_view prefix, const SuggestionList& list,
                        const StatsSource& stats, double alpha) {
  std::vector<double> gains;
  gains.reserve(list.size());
  for (const Query& q : list.queries) {
    const double e = alpha * stats.conditional_conversion(prefix, q) +
                     (1.0 - alpha) * stats.global_conversion(q);
    gains.push_back(std::clamp(e, 0.0, 1.0));
  }
  return discounted_mean(gains);
}

LexiconClassifier::LexiconClassifier(std::vector<std::string> terms,
                                     const Catalog* catalog)
    : catalog_(catalog) {
  for (const std::string& term : terms) {
    std::vector<std::string> tokens = tokenize(term);
    if (!tokens.empty()) terms_.push_back(std::move(tokens));
  }
}

bool LexiconClassifier::is_unsafe(const Query& query) const {
  if (catalog_ != nullptr && catalog_->is_title(query.text)) return false;
  const std::vector<std::string> tokens = tokenize(query.text);
  for (const auto& term : terms_) {
    if (term.size() > tokens.size()) continue;
    for (std::size_t i = 0; i + term.size() <= tokens.size(); ++i) {
      if (std::equal(term.begin(), term.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
        return true;
      }
    }
  }
  return false;
}

std::vector<std::string> read_blocklist(std::istream& in) {
  std::vector<std::string> terms;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    std::string term = normalize_text(view);
    if (!term.empty()) terms.push_back(std::move(term));
  }
  return terms;
}

std::vector<std::string> load_blocklist(const std::filesystem::path& path) {
  auto in = internal::open_input(path);
  return read_blocklist(in);
}

SafetyResult score_safety(const SuggestionList& list,
                          const SafetyClassifier& classifier) {
  SafetyResult result;
  result.unsafe.reserve(list.size());
  for (const Query& q : list.queries) {
    const bool unsafe = classifier.is_unsafe(q);
    result.unsafe.push_back(unsafe);
    if (unsafe) result.safe = 0;
  }
  return result;
}

namespace {

GroundednessResult fraction_of(std::vector<bool> grounded) {
  GroundednessResult r;
  if (!grounded.empty()) {
    const auto hits = std::count(grounded.begin(), grounded.end(), true);
    r.score = static_cast<double>(hits) / static_cast<double>(grounded.size());
  }
  r.grounded = std::move(grounded);
  return r;
}

}  // namespace

GroundednessResult catalog_groundedness_from_pages(std::span<const ResultPage> pages,
                                                   std::size_t tau) {
  std::vector<bool> grounded;
  grounded.reserve(pages.size());
  for (const ResultPage& page : pages) {
    const auto positive = std::count_if(page.begin(), page.end(), [](const ResultEntry& e) {
      return e.lexical_score > 0.0;
    });
    grounded.push_back(static_cast<std::size_t>(positive) >= tau);
  }
  return fraction_of(std::move(grounded));
}

GroundednessResult score_catalog_groundedness(const SuggestionList& list,
                                              const SearchBackend& backend,
                                              std::size_t tau) {
  const std::vector<ResultPage> pages = fetch_pages(backend, list);
  return catalog_groundedness_from_pages(pages, tau);
}

bool is_stopword(std::string_view token) {
  static const std::unordered_set<std::string_view> kStopwords = {
      "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "how",
      "i", "in", "is", "it", "me", "my", "of", "on", "or", "the", "to", "with",
      "what", "best", "free", "new", "app", "apps"};
  return kStopwords.contains(token);
}

bool RuleJudge::grounded(const Query& query, const RetrievedContext& context) const {
  std::unordered_set<std::string> evidence;
  for (const CandidateEntry& c : context.candidates) {
    for (auto& t : tokenize(c.query.text)) evidence.insert(std::move(t));
  }
  for (const CatalogItem& item : context.items) {
    for (auto& t : tokenize(item.title)) evidence.insert(std::move(t));
    for (auto& t : tokenize(item.description)) evidence.insert(std::move(t));
  }
  for (const std::string& token : tokenize(query.text)) {
    if (is_stopword(token)) continue;
    if (!evidence.contains(token)) return false;
  }
  return true;
}

GroundednessResult score_context_groundedness(
    const SuggestionList& list, const RetrievedContext& context,
    std::span<const GroundingJudge* const> judges) {
  if (judges.empty() || judges.size() % 2 == 0) {
    throw std::invalid_argument("context groundedness needs an odd number of judges");
  }
  std::vector<bool> grounded;
  grounded.reserve(list.size());
  for (const Query& q : list.queries) {
    std::size_t votes = 0;
    for (const GroundingJudge* judge : judges) {
      if (judge->grounded(q, context)) ++votes;
    }
    grounded.push_back(2 * votes > judges.size());
  }
  return fraction_of(std::move(grounded));
}

DiversityBreakdown diversity_from_pages(std::span<const ResultPage> pages) {
  DiversityBreakdown d;
  d.suggestions = pages.size();
  std::unordered_map<std::string, std::size_t> slot;
  for (const ResultPage& page : pages) {
    std::unordered_set<std::string> seen_in_page;
    for (const ResultEntry& entry : page) {
      auto [it, inserted] = slot.try_emplace(entry.item_id, d.results.size());
      if (inserted) d.results.push_back(ResultStat{entry.item_id, 0, 0, 0.0});
      ResultStat& stat = d.results[it->second];
      ++stat.occurrences;
      if (seen_in_page.insert(entry.item_id).second) ++stat.containing;
    }
  }
  d.distinct_results = d.results.size();

  double total = 0.0;
  for (std::size_t i = 0; i < d.results.size(); ++i) {
    total += static_cast<double>(d.results[i].occurrences) /
             std::log2(static_cast<double>(i) + 2.0);
  }
  const double T = static_cast<double>(d.suggestions);
  for (std::size_t i = 0; i < d.results.size(); ++i) {
    ResultStat& stat = d.results[i];
    const double p = static_cast<double>(stat.occurrences) /
                     std::log2(static_cast<double>(i) + 2.0) / total;
    stat.weighted_probability = p;
    const double surprisal = -p * std::log2(p);
    d.standard_entropy += surprisal;
    if (stat.containing > 1) {
      d.penalty += surprisal * static_cast<double>(stat.containing) / T;
    }
  }
  if (d.distinct_results <= 1 || d.suggestions == 0) {
    d.adjusted_entropy = 0.0;
  } else {
    const double h = (d.standard_entropy - d.penalty) /
                     std::log2(static_cast<double>(d.distinct_results));
    d.adjusted_entropy = std::clamp(h, 0.0, 1.0);
  }
  return d;
}

DiversityBreakdown score_diversity(const SuggestionList& list,
                                   const SearchBackend& backend) {
  const std::vector<ResultPage> pages = fetch_pages(backend, list);
  return diversity_from_pages(pages);
}

VerifierSuite::VerifierSuite(const SearchBackend& backend, const StatsSource& stats,
                             const SafetyClassifier& classifier, VerifierParams params,
                             ItemScorer relevance_scorer)
    : backend_(backend),
      stats_(stats),
      classifier_(classifier),
      params_(params),
      relevance_scorer_(std::move(relevance_scorer)) {
  if (params_.judges == 0 || params_.judges % 2 == 0) {
    throw std::invalid_argument("verifier judges must be an odd count");
  }
  judges_.assign(params_.judges, &rule_judge_);
}

void VerifierSuite::set_judges(std::vector<const GroundingJudge*> judges) {
  if (judges.empty() || judges.size() % 2 == 0) {
    throw std::invalid_argument("verifier judges must be an odd count");
  }
  judges_ = std::move(judges);
}

VerifierScores VerifierSuite::score(std::string_view prefix, const SuggestionList& list,
                                    const RetrievedContext& context,
                                    int format_ok) const {
  const std::vector<ResultPage> pages = fetch_pages(backend_, list);
  VerifierScores s;
  s.format_ok = format_ok != 0 ? 1 : 0;
  s.relevance = score_relevance(prefix, list, relevance_scorer_);
  s.engagement = score_engagement(prefix, list, stats_, params_.alpha);
  const SafetyResult safety = score_safety(list, classifier_);
  s.safety = safety.safe;
  const GroundednessResult catalog = catalog_groundedness_from_pages(pages, params_.tau);
  s.catalog_grounded = catalog.score;
  const GroundednessResult ctx = score_context_groundedness(list, context, judges_);
  s.context_grounded = ctx.score;
  s.diversity_detail = diversity_from_pages(pages);
  s.diversity = s.diversity_detail.adjusted_entropy;
  s.per_query_flags.resize(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) {
    s.per_query_flags[i] = {safety.unsafe[i], catalog.grounded[i], ctx.grounded[i]};
  }
  return s;
}

}  // namespace qac

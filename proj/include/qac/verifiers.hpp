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

#ifndef QAC_VERIFIERS_HPP_
#define QAC_VERIFIERS_HPP_

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qac/context.hpp"
#include "qac/generator.hpp"
#include "qac/retrieval.hpp"

namespace qac {

struct QueryFlags {
  bool unsafe = false;
  bool catalog_grounded = false;
  bool context_grounded = false;

  friend bool operator==(const QueryFlags&, const QueryFlags&) = default;
};

struct ResultStat {
  std::string item_id;
  std::size_t occurrences = 0;   // C_i
  std::size_t containing = 0;    // c_i
  double weighted_probability = 0.0;
};

struct DiversityBreakdown {
  std::size_t distinct_results = 0;  // n
  std::size_t suggestions = 0;       // T
  std::vector<ResultStat> results;   // in first-appearance order
  double standard_entropy = 0.0;
  double penalty = 0.0;
  double adjusted_entropy = 0.0;     // clamped to [0,1]
};

struct VerifierScores {
  int format_ok = 0;
  double relevance = 0.0;
  double engagement = 0.0;
  int safety = 1;
  double catalog_grounded = 0.0;
  double context_grounded = 0.0;
  double diversity = 0.0;
  std::vector<QueryFlags> per_query_flags;
  DiversityBreakdown diversity_detail;
};

// ---------------------------------------------------------------------------
// Search backend

struct ResultEntry {
  std::string item_id;
  double lexical_score = 0.0;

  friend bool operator==(const ResultEntry&, const ResultEntry&) = default;
};

using ResultPage = std::vector<ResultEntry>;

// Deterministic, read-only search over a fixed catalog. Implementations may
// throw Error(kBackendUnavailable).
class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  virtual ResultPage search(const Query& query) const = 0;
};

// retrieve_items() over the catalog, truncated to `page_depth`.
class CatalogBackend final : public SearchBackend {
 public:
  CatalogBackend(const Catalog& catalog, std::size_t page_depth = 10,
                 RetrieverConfig retriever = {});
  ResultPage search(const Query& query) const override;

 private:
  const Catalog& catalog_;
  std::size_t page_depth_;
  RetrieverConfig retriever_;
};

std::vector<ResultPage> fetch_pages(const SearchBackend& backend,
                                    const SuggestionList& list);

// ---------------------------------------------------------------------------
// Format

// 1 iff parse_answer_block() succeeds.
int verify_format(std::string_view raw, std::size_t max_queries = kMaxSuggestions);

// ---------------------------------------------------------------------------
// Relevance and engagement

// Σ g_i / log2(i + 1) divided by Σ 1 / log2(i + 1); empty input gives 0.
double discounted_mean(std::span<const double> gains);

using ItemScorer = std::function<double(std::string_view prefix, const Query& query)>;

// 0.5 * [query starts with the normalized prefix] + 0.5 * token overlap of
// the prefix tokens against the query tokens.
double default_relevance_scorer(std::string_view prefix, const Query& query);

double score_relevance(std::string_view prefix, const SuggestionList& list,
                       const ItemScorer& scorer = default_relevance_scorer);

// Conversion signals behind the engagement verifier.
class StatsSource {
 public:
  virtual ~StatsSource() = default;
  virtual double conditional_conversion(std::string_view prefix,
                                        const Query& query) const = 0;
  virtual double global_conversion(const Query& query) const = 0;
};

// P(conv | p, q): conversion rate of q when q is an indexed completion of p,
// else 0. cr(q): conversion rate of q when indexed, else 0.
class IndexStatsSource final : public StatsSource {
 public:
  explicit IndexStatsSource(const QueryIndex& index) : index_(index) {}
  double conditional_conversion(std::string_view prefix,
                                const Query& query) const override;
  double global_conversion(const Query& query) const override;

 private:
  const QueryIndex& index_;
};

double score_engagement(std::string_view prefix, const SuggestionList& list,
                        const StatsSource& stats, double alpha = 0.5);

// ---------------------------------------------------------------------------
// Safety

class SafetyClassifier {
 public:
  virtual ~SafetyClassifier() = default;
  virtual bool is_unsafe(const Query& query) const = 0;
};

// Flags a query containing a blocklisted term (single token or a contiguous
// token sequence), except when the query is exactly a catalog title.
class LexiconClassifier final : public SafetyClassifier {
 public:
  LexiconClassifier(std::vector<std::string> terms, const Catalog* catalog = nullptr);
  bool is_unsafe(const Query& query) const override;

  std::size_t term_count() const { return terms_.size(); }

 private:
  std::vector<std::vector<std::string>> terms_;
  const Catalog* catalog_;
};

// One term per line; '#' starts a comment; blank lines ignored.
std::vector<std::string> read_blocklist(std::istream& in);
std::vector<std::string> load_blocklist(const std::filesystem::path& path);

struct SafetyResult {
  int safe = 1;
  std::vector<bool> unsafe;
};

SafetyResult score_safety(const SuggestionList& list,
                          const SafetyClassifier& classifier);

// ---------------------------------------------------------------------------
// Groundedness

struct GroundednessResult {
  double score = 0.0;
  std::vector<bool> grounded;
};

// A query is grounded when its page holds at least `tau` results with a
// positive lexical score.
GroundednessResult catalog_groundedness_from_pages(std::span<const ResultPage> pages,
                                                   std::size_t tau = 1);
GroundednessResult score_catalog_groundedness(const SuggestionList& list,
                                              const SearchBackend& backend,
                                              std::size_t tau = 1);

class GroundingJudge {
 public:
  virtual ~GroundingJudge() = default;
  virtual bool grounded(const Query& query, const RetrievedContext& context) const = 0;
};

// Grounded iff every content token (stopwords excluded) of the query occurs
// as a token of some candidate query or item title/description.
class RuleJudge final : public GroundingJudge {
 public:
  bool grounded(const Query& query, const RetrievedContext& context) const override;
};

bool is_stopword(std::string_view token);

// Majority vote over an odd, non-empty judge panel.
GroundednessResult score_context_groundedness(
    const SuggestionList& list, const RetrievedContext& context,
    std::span<const GroundingJudge* const> judges);

// ---------------------------------------------------------------------------
// Diversity

// Adjusted entropy over the distinct results of all pages. Results are
// indexed by first appearance (suggestion order, then rank in page).
DiversityBreakdown diversity_from_pages(std::span<const ResultPage> pages);
DiversityBreakdown score_diversity(const SuggestionList& list,
                                   const SearchBackend& backend);

// ---------------------------------------------------------------------------
// Suite

struct VerifierParams {
  double alpha = 0.5;
  std::size_t tau = 1;
  std::size_t judges = 3;
  std::size_t page_depth = 10;
};

// Bundles the pluggable verifier dependencies. All references must outlive
// the suite.
class VerifierSuite {
 public:
  VerifierSuite(const SearchBackend& backend, const StatsSource& stats,
                const SafetyClassifier& classifier, VerifierParams params = {},
                ItemScorer relevance_scorer = default_relevance_scorer);

  // Replaces the default panel of `params.judges` rule judges.
  void set_judges(std::vector<const GroundingJudge*> judges);

  VerifierScores score(std::string_view prefix, const SuggestionList& list,
                       const RetrievedContext& context, int format_ok) const;

  const VerifierParams& params() const { return params_; }
  const SearchBackend& backend() const { return backend_; }
  const SafetyClassifier& classifier() const { return classifier_; }
  std::span<const GroundingJudge* const> judges() const { return judges_; }

 private:
  const SearchBackend& backend_;
  const StatsSource& stats_;
  const SafetyClassifier& classifier_;
  VerifierParams params_;
  ItemScorer relevance_scorer_;
  RuleJudge rule_judge_;
  std::vector<const GroundingJudge*> judges_;
};

}  // namespace qac

#endif  // QAC_VERIFIERS_HPP_

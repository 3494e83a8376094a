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

#ifndef QAC_EVAL_HPP_
#define QAC_EVAL_HPP_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qac/context.hpp"
#include "qac/generator.hpp"
#include "qac/retrieval.hpp"
#include "qac/serving.hpp"
#include "qac/verifiers.hpp"

namespace qac {

// Σ w·m / Σ w. Throws Error(kZeroTotalWeight) when the weights sum to zero
// (or the input is empty), std::invalid_argument on a negative weight.
double traffic_weighted_mean(std::span<const std::pair<double, double>> values);

// Something that answers a prefix with a suggestion list.
class EvalSystem {
 public:
  virtual ~EvalSystem() = default;
  virtual std::string name() const = 0;
  virtual SuggestionList serve(const Prefix& prefix) = 0;
};

// Serves through a ServingEngine (cache first, compact fallback).
class EngineSystem final : public EvalSystem {
 public:
  EngineSystem(std::string name, ServingEngine& engine)
      : name_(std::move(name)), engine_(engine) {}
  std::string name() const override { return name_; }
  SuggestionList serve(const Prefix& prefix) override;

 private:
  std::string name_;
  ServingEngine& engine_;
};

// Most frequent logged completions of the prefix, no generation.
class FrequencySystem final : public EvalSystem {
 public:
  FrequencySystem(std::string name, const QueryIndex& index,
                  std::size_t limit = kMaxSuggestions)
      : name_(std::move(name)), index_(index), limit_(limit) {}
  std::string name() const override { return name_; }
  SuggestionList serve(const Prefix& prefix) override;

 private:
  std::string name_;
  const QueryIndex& index_;
  std::size_t limit_;
};

struct EvalRecord {
  Prefix prefix;
  SuggestionList served;
  VerifierScores scores;
  std::optional<double> baseline_engagement;
  bool error = false;
  std::string error_message;
};

// The per-prefix values m_p that get traffic-weighted.
struct PrefixMetrics {
  double coverage = 0.0;
  double relevance = 0.0;
  double unsafe = 0.0;
  std::optional<double> eng_win;   // absent without a baseline score
  std::optional<double> eng_loss;
  double catalog_ungrounded = 0.0;
  double context_ungrounded = 0.0;
  double diversity = 0.0;
};

PrefixMetrics prefix_metrics(const EvalRecord& record);

struct Metric {
  std::optional<double> value;
  std::size_t count = 0;
};

struct MetricSet {
  Metric coverage;
  Metric relevance;
  Metric unsafe_rate;
  Metric eng_win_rate;
  // Weighted (win - loss), ties neither.
  Metric eng_win_signed;
  Metric catalog_ungrounded_rate;
  Metric context_ungrounded_rate;
  Metric diversity;
};

struct MetricReport {
  std::string system;
  MetricSet overall;
  std::map<std::string, MetricSet> strata;
  std::size_t prefixes = 0;
  std::size_t errors = 0;
  std::vector<EvalRecord> records;
};

// Aggregates already-scored records. Error records are left out.
MetricReport aggregate_records(std::string system, std::vector<EvalRecord> records);

struct EvalDeps {
  const QueryIndex& index;
  const Catalog& catalog;
  ContextConfig context;
  const VerifierSuite& suite;
};

using BaselineScores = std::map<std::string, double, std::less<>>;

// Serves and scores every prefix, then aggregates. Per-prefix failures
// (backend or generator errors) are counted and excluded. `threads` > 1
// evaluates prefixes concurrently; results do not depend on it.
MetricReport evaluate_system(std::span<const Prefix> prefixes, EvalSystem& system,
                             const EvalDeps& deps,
                             const BaselineScores* baseline = nullptr,
                             std::size_t threads = 1);

// JSONL {prefix, weight, stratum}.
std::vector<Prefix> read_eval_set(std::istream& in);
std::vector<Prefix> load_eval_set(const std::filesystem::path& path);
// JSONL {prefix, engagement_score}; keys are normalized.
BaselineScores read_baseline(std::istream& in);
BaselineScores load_baseline(const std::filesystem::path& path);
void write_baseline(const MetricReport& report, std::ostream& out);

enum class ReportFormat { kJson, kMarkdown };
ReportFormat parse_report_format(std::string_view name);

void write_report_json(std::span<const MetricReport> reports, std::ostream& out);
// One row per system; metrics shown as percentages.
void write_report_markdown(std::span<const MetricReport> reports, std::ostream& out);
void write_report(std::span<const MetricReport> reports, const std::filesystem::path& path,
                  ReportFormat format);

// Reads the summary part of write_report_json() back (records are not
// serialized).
std::vector<MetricReport> read_report_json(std::istream& in);

}  // namespace qac

#endif  // QAC_EVAL_HPP_

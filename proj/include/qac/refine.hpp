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

#ifndef QAC_REFINE_HPP_
#define QAC_REFINE_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qac/context.hpp"
#include "qac/generator.hpp"
#include "qac/verifiers.hpp"

namespace qac {

// An empty `query` marks a list-level issue (e.g. broken format).
struct QueryNote {
  std::string query;
  std::string issue;

  friend bool operator==(const QueryNote&, const QueryNote&) = default;
};

struct CritiqueAssessment {
  std::vector<QueryNote> notes;
  bool revise = false;
  // Rendered critique, ending with the decision line.
  std::string text;

  std::size_t flag_count() const { return notes.size(); }
};

// Reads the last "Final decision to revise: YES|NO" line (case-insensitive).
std::optional<bool> parse_revise_decision(std::string_view text);
// "- query: issue" lines followed by the decision line.
std::string render_assessment(std::span<const QueryNote> notes, bool revise);
// Inverse of render_assessment; throws Error(kMalformedResponse) when the
// decision line is missing.
CritiqueAssessment parse_assessment(std::string_view text);

class Critic {
 public:
  virtual ~Critic() = default;
  virtual CritiqueAssessment critique(const PromptText& prompt, std::string_view response,
                                      const RetrievedContext& context) = 0;
};

class Reviser {
 public:
  virtual ~Reviser() = default;
  // Returns a full answer block, or `response` unchanged when the assessment
  // does not ask for a revision.
  virtual std::string revise(const PromptText& prompt, std::string_view response,
                             const CritiqueAssessment& assessment,
                             const RetrievedContext& context) = 0;
};

// Flags format errors, context-ungrounded queries, unsafe queries and
// queries repeating the intent (same content-token multiset) of an earlier
// one.
class RuleCritic final : public Critic {
 public:
  RuleCritic(const SafetyClassifier& classifier, const GroundingJudge& judge,
             std::size_t max_queries = kMaxSuggestions)
      : classifier_(classifier), judge_(judge), max_queries_(max_queries) {}

  CritiqueAssessment critique(const PromptText& prompt, std::string_view response,
                              const RetrievedContext& context) override;

 private:
  const SafetyClassifier& classifier_;
  const GroundingJudge& judge_;
  std::size_t max_queries_;
};

// Replaces each flagged query in place with the next unused context
// candidate that is safe, grounded and not an intent duplicate; drops it when
// none is left. Unflagged queries keep their order.
class RuleReviser final : public Reviser {
 public:
  RuleReviser(const SafetyClassifier& classifier, const GroundingJudge& judge,
              std::size_t max_queries = kMaxSuggestions)
      : classifier_(classifier), judge_(judge), max_queries_(max_queries) {}

  std::string revise(const PromptText& prompt, std::string_view response,
                     const CritiqueAssessment& assessment,
                     const RetrievedContext& context) override;

 private:
  const SafetyClassifier& classifier_;
  const GroundingJudge& judge_;
  std::size_t max_queries_;
};

std::string_view default_critic_template();
std::string_view default_reviser_template();

// Model-backed critic: renders the critic template ({prompt}, {response})
// and parses the returned assessment.
class LlmCritic final : public Critic {
 public:
  explicit LlmCritic(BoundedGenerator& generator,
                     std::string template_text = std::string(default_critic_template()))
      : generator_(generator), template_(std::move(template_text)) {}

  CritiqueAssessment critique(const PromptText& prompt, std::string_view response,
                              const RetrievedContext& context) override;

 private:
  BoundedGenerator& generator_;
  std::string template_;
};

// Model-backed reviser: renders the reviser template ({prompt}, {response},
// {assessment}) and keeps the last answer block of the reply.
class LlmReviser final : public Reviser {
 public:
  explicit LlmReviser(BoundedGenerator& generator,
                      std::string template_text = std::string(default_reviser_template()))
      : generator_(generator), template_(std::move(template_text)) {}

  std::string revise(const PromptText& prompt, std::string_view response,
                     const CritiqueAssessment& assessment,
                     const RetrievedContext& context) override;

 private:
  BoundedGenerator& generator_;
  std::string template_;
};

// Last "<answer>" ... "</answer>" line span of `text`, or `text` itself.
std::string extract_answer_block(std::string_view text);

enum class StopReason { kCriticApproved, kConverged, kMaxRounds, kFailed };

std::string_view stop_reason_name(StopReason reason);

struct RefinementRound {
  std::string raw;
  CritiqueAssessment assessment;
};

struct RefinementTrace {
  std::vector<RefinementRound> rounds;
  SuggestionList final;
  StopReason stop_reason = StopReason::kMaxRounds;
  bool failed = false;
  std::string error;
};

struct RefineOptions {
  std::size_t max_rounds = 3;
  std::uint64_t seed = 0;
};

// Critiques `initial`, then alternates revise/critique. Stops when the
// critic approves, when a revision parses to the same list as the round
// before it, or after max_rounds critiques.
RefinementTrace refine_response(std::string initial, const PromptText& prompt,
                                const RetrievedContext& context, Critic& critic,
                                Reviser& reviser, std::size_t max_rounds = 3);

// Generates once with `generator`, then runs refine_response(). Generator
// failures produce a failed trace.
RefinementTrace refine_loop(std::shared_ptr<const RetrievedContext> context,
                            const PromptText& prompt, BoundedGenerator& generator,
                            Critic& critic, Reviser& reviser,
                            const RefineOptions& options = {});

// JSONL {prompt, final_answer_block, stop_reason, rounds}.
void write_sft_record(std::ostream& out, const PromptText& prompt,
                      const RefinementTrace& trace);

struct SftRecord {
  std::string prompt;
  std::string final_answer_block;
  std::string stop_reason;
  std::size_t rounds = 0;
};

std::vector<SftRecord> read_sft_corpus(std::istream& in);
std::vector<SftRecord> load_sft_corpus(const std::filesystem::path& path);

}  // namespace qac

#endif  // QAC_REFINE_HPP_

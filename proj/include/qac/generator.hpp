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

#ifndef QAC_GENERATOR_HPP_
#define QAC_GENERATOR_HPP_

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "qac/clock.hpp"
#include "qac/context.hpp"
#include "qac/error.hpp"
#include "qac/text.hpp"

namespace qac {

inline constexpr std::size_t kMaxSuggestions = 10;

struct SuggestionList {
  std::vector<Query> queries;
  std::string raw_text;

  std::size_t size() const { return queries.size(); }
  bool empty() const { return queries.empty(); }
  bool same_queries(const SuggestionList& other) const {
    return queries == other.queries;
  }
};

enum class FormatErrorKind {
  kMissingOpenTag,
  kMissingCloseTag,
  kExtraneousText,
  kDuplicateQuery,
  kTooManyQueries,
};

std::string_view format_error_name(FormatErrorKind kind);

struct FormatError {
  FormatErrorKind kind;
  std::string message;
};

class ParseResult {
 public:
  ParseResult(SuggestionList list) : value_(std::move(list)) {}
  ParseResult(FormatError error) : value_(std::move(error)) {}

  bool ok() const { return std::holds_alternative<SuggestionList>(value_); }
  explicit operator bool() const { return ok(); }

  const SuggestionList& list() const { return std::get<SuggestionList>(value_); }
  const FormatError& error() const { return std::get<FormatError>(value_); }

 private:
  std::variant<SuggestionList, FormatError> value_;
};

// Accepts exactly: optional surrounding whitespace, a "<answer>" line, one
// query per interior line (blank lines skipped, each normalized), and a
// closing "</answer>" line. Duplicates after normalization and lists longer
// than `max_queries` are rejected.
ParseResult parse_answer_block(std::string_view raw,
                               std::size_t max_queries = kMaxSuggestions);

// Best-effort extraction for diagnostics and repair: reads lines between the
// tags when present (else every line), drops tag lines, normalizes, removes
// duplicates and truncates to `max_queries`. Never fails.
SuggestionList salvage_parse(std::string_view raw,
                             std::size_t max_queries = kMaxSuggestions);

std::string render_answer_block(const std::vector<Query>& queries);

enum class GeneratorRole { kLarge, kCompact, kTeacher, kCritic, kReviser };

std::string_view role_name(GeneratorRole role);
// Throws std::invalid_argument for unknown names.
GeneratorRole parse_role(std::string_view name);

struct SamplingParams {
  double temperature = 0.0;
  double top_p = 1.0;
  std::uint64_t seed = 0;
};

struct GeneratorProfile {
  std::string name;
  GeneratorRole role = GeneratorRole::kCompact;
  SamplingParams sampling;
  // Zero means no budget.
  std::chrono::milliseconds latency_budget{0};
  std::size_t max_parallelism = 1;
};

struct GenerationRequest {
  PromptText prompt;
  // Structured context; generators that only read text may ignore it.
  std::shared_ptr<const RetrievedContext> context;
  std::uint64_t seed = 0;
  double temperature = 0.0;
};

// Text-in/text-out generation contract. Implementations are either safe for
// concurrent calls or run behind a BoundedGenerator with parallelism 1.
class Generator {
 public:
  virtual ~Generator() = default;
  // Throws Error(kGeneratorUnavailable) or Error(kTimeout).
  virtual std::string generate(const GenerationRequest& request) = 0;
};

// Deterministic stand-in for a tuned model: top candidates completing the
// prefix (up to half the list), then queries derived from item titles. A
// non-zero `noise_seed` applies seeded perturbations (drops, reordering,
// off-context insertions, duplicates, broken tags).
std::string template_mock_generate(const RetrievedContext& context,
                                   std::uint64_t noise_seed,
                                   std::size_t max_queries = kMaxSuggestions);

// Uses request.context; noise is enabled when request.temperature > 0 and is
// keyed by request.seed.
class TemplateMockGenerator final : public Generator {
 public:
  explicit TemplateMockGenerator(std::size_t max_queries = kMaxSuggestions)
      : max_queries_(max_queries) {}
  std::string generate(const GenerationRequest& request) override;

 private:
  std::size_t max_queries_;
};

// Talks to a child process over stdio. Each message is a frame of
// "<decimal byte length>\n<payload>": the prompt goes to the child's stdin,
// the raw completion comes back on its stdout. The child persists across
// calls and is respawned after a failure or timeout.
class ExternalProcessGenerator final : public Generator {
 public:
  ExternalProcessGenerator(std::vector<std::string> argv,
                           std::chrono::milliseconds io_timeout);
  ~ExternalProcessGenerator() override;

  ExternalProcessGenerator(const ExternalProcessGenerator&) = delete;
  ExternalProcessGenerator& operator=(const ExternalProcessGenerator&) = delete;

  std::string generate(const GenerationRequest& request) override;

 private:
  void spawn();
  void terminate();

  std::vector<std::string> argv_;
  std::chrono::milliseconds io_timeout_;
  std::mutex mu_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
};

// Runs a Generator on a fixed pool of profile.max_parallelism workers and
// enforces the profile's latency budget (and any tighter caller deadline)
// against the supplied clock. A call that misses its deadline throws
// Error(kTimeout); its late result is discarded.
class BoundedGenerator {
 public:
  BoundedGenerator(std::shared_ptr<Generator> generator, GeneratorProfile profile,
                   Clock& clock = SteadyClock::instance(),
                   std::size_t queue_capacity = 256);
  ~BoundedGenerator();

  BoundedGenerator(const BoundedGenerator&) = delete;
  BoundedGenerator& operator=(const BoundedGenerator&) = delete;

  std::string generate(GenerationRequest request,
                       std::optional<Clock::TimePoint> deadline = std::nullopt);

  const GeneratorProfile& profile() const { return profile_; }
  std::uint64_t calls() const;

 private:
  struct Task;
  void worker_loop();

  std::shared_ptr<Generator> generator_;
  GeneratorProfile profile_;
  Clock& clock_;
  std::size_t queue_capacity_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::shared_ptr<Task>> queue_;
  bool stopping_ = false;
  std::uint64_t calls_ = 0;
  std::vector<std::thread> workers_;
};

// Name -> generator lookup built from configuration.
class GeneratorRegistry {
 public:
  void add(std::string name, std::shared_ptr<BoundedGenerator> generator);
  // Throws Error(kGeneratorUnavailable) when `name` is not registered.
  BoundedGenerator& get(std::string_view name) const;
  bool contains(std::string_view name) const;

 private:
  std::map<std::string, std::shared_ptr<BoundedGenerator>, std::less<>> entries_;
};

struct SampleFailure {
  std::size_t index = 0;
  ErrorCode code = ErrorCode::kGeneratorUnavailable;
  std::string message;
};

struct SampleBatch {
  std::vector<std::string> outputs;
  std::vector<SampleFailure> failures;
};

// n >= 2 generations; sample i uses derive_seed(base, i + 1) where base is
// the profile seed, or derive_seed(profile seed, stream) for a non-zero
// stream (e.g. a prefix hash). Failed samples are recorded and skipped.
SampleBatch sample_candidate_lists(BoundedGenerator& generator,
                                   const PromptText& prompt,
                                   std::shared_ptr<const RetrievedContext> context,
                                   std::size_t n, std::uint64_t stream = 0);

}  // namespace qac

#endif  // QAC_GENERATOR_HPP_

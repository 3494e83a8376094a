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

#ifndef QAC_SERVING_HPP_
#define QAC_SERVING_HPP_

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qac/clock.hpp"
#include "qac/context.hpp"
#include "qac/generator.hpp"
#include "qac/retrieval.hpp"
#include "qac/reward.hpp"
#include "qac/verifiers.hpp"

namespace qac {

inline constexpr int kSnapshotFormatVersion = 1;

struct CacheEntry {
  std::vector<Query> queries;
  // Catalog groundedness per query, aligned with `queries`.
  std::vector<bool> grounded;
  std::string profile;
  std::int64_t timestamp = 0;
  double reward = 0.0;

  friend bool operator==(const CacheEntry&, const CacheEntry&) = default;
};

// Immutable prefix -> suggestions map keyed by normalized prefix text. The
// version is stamped by the engine when the snapshot goes live.
class CacheSnapshot {
 public:
  using Map = std::map<std::string, CacheEntry, std::less<>>;

  CacheSnapshot() = default;
  explicit CacheSnapshot(Map entries) : entries_(std::move(entries)) {}

  const CacheEntry* find(std::string_view normalized_prefix) const;
  std::size_t size() const { return entries_.size(); }
  const Map& entries() const { return entries_; }

  std::uint64_t version() const { return version_; }
  void set_version(std::uint64_t v) { version_ = v; }

 private:
  Map entries_;
  std::uint64_t version_ = 0;
};

// JSONL container: a header {format_version, entry_count} then one entry per
// line in prefix order.
void write_snapshot(const CacheSnapshot& snapshot, std::ostream& out);
void save_snapshot(const CacheSnapshot& snapshot, const std::filesystem::path& path);
// Throws Error(kCorruptSnapshot) with the header's format version (or "?")
// in detail().
CacheSnapshot read_snapshot(std::istream& in);
CacheSnapshot load_snapshot_file(const std::filesystem::path& path);

struct GateResult {
  SuggestionList list;
  std::vector<bool> grounded;
  std::size_t filtered = 0;
};

// Drops queries flagged unsafe or catalog-ungrounded, keeping order.
GateResult serving_gate(const SuggestionList& list, std::span<const QueryFlags> flags);

// Computes the serve-time flags (safety and catalog groundedness only) and
// applies serving_gate().
GateResult gate_list(const SuggestionList& list, const SafetyClassifier& classifier,
                     const SearchBackend& backend, std::size_t tau);

struct PregenerateInputs {
  const QueryIndex& index;
  const Catalog& catalog;
  const ContextConfig& context;
  std::string_view prompt_template;
  const VerifierSuite& suite;
  RewardWeights weights;
  double reward_floor = 0.3;
  std::int64_t timestamp = 0;
};

struct PregenerateSkip {
  std::string prefix;
  std::string reason;
};

struct PregenerateResult {
  CacheSnapshot snapshot;
  std::vector<PregenerateSkip> skipped;
};

// Generates (deterministically, temperature 0) and scores each prefix with
// the large generator; admits format-valid lists whose reward reaches the
// floor, after the serving gate.
PregenerateResult pregenerate_cache(std::span<const Prefix> prefixes,
                                    BoundedGenerator& large,
                                    const PregenerateInputs& inputs);

struct ServeResult {
  SuggestionList suggestions;
  std::vector<bool> grounded;
  // 1-based position in the cached list; empty on the online path.
  std::vector<std::optional<std::size_t>> cached_rank;
  bool cache_hit = false;
  bool degraded = false;
  std::int64_t latency_us = 0;
  std::size_t filtered_count = 0;
  std::uint64_t snapshot_version = 0;
};

struct ServingConfig {
  std::size_t default_limit = 10;
  std::chrono::milliseconds deadline{150};
  std::size_t tau = 1;
};

struct ServingCounters {
  std::uint64_t requests = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t retrievals = 0;
  std::uint64_t renders = 0;
  std::uint64_t generations = 0;
  std::uint64_t degraded = 0;
};

struct ServingDeps {
  const QueryIndex& index;
  const Catalog& catalog;
  ContextConfig context;
  std::string prompt_template;
  const SearchBackend& backend;
  const SafetyClassifier& classifier;
};

// Cache-first completion service with online fallback to the compact
// generator. Thread-safe; snapshots are replaced atomically as a whole.
class ServingEngine {
 public:
  ServingEngine(ServingDeps deps, BoundedGenerator& compact,
                Clock& clock = SteadyClock::instance(), ServingConfig config = {});

  ServeResult complete(std::string_view prefix,
                       std::optional<Clock::Duration> deadline = std::nullopt,
                       std::optional<std::size_t> limit = std::nullopt);

  // Stamps and publishes the snapshot; returns its version.
  std::uint64_t swap_snapshot(CacheSnapshot snapshot);
  // Loads and swaps. On failure the live snapshot stays in place.
  std::uint64_t load_snapshot(const std::filesystem::path& path);

  std::shared_ptr<const CacheSnapshot> snapshot() const;
  ServingCounters counters() const;
  const ServingConfig& config() const { return config_; }

 private:
  ServeResult degraded_answer(std::string_view prefix, std::size_t limit);

  ServingDeps deps_;
  BoundedGenerator& compact_;
  Clock& clock_;
  ServingConfig config_;

  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const CacheSnapshot> snapshot_;
  std::uint64_t next_version_ = 0;

  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> retrievals_{0};
  std::atomic<std::uint64_t> renders_{0};
  std::atomic<std::uint64_t> generations_{0};
  std::atomic<std::uint64_t> degraded_{0};
};

}  // namespace qac

#endif  // QAC_SERVING_HPP_

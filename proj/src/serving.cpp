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

#include "qac/serving.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>

#include "jsonl.hpp"
#include "qac/error.hpp"
#include "qac/seed.hpp"

namespace qac {

using internal::json;

const CacheEntry* CacheSnapshot::find(std::string_view normalized_prefix) const {
  const auto it = entries_.find(normalized_prefix);
  return it == entries_.end() ? nullptr : &it->second;
}

void write_snapshot(const CacheSnapshot& snapshot, std::ostream& out) {
  json header;
  header["format_version"] = kSnapshotFormatVersion;
  header["entry_count"] = snapshot.size();
  out << internal::dump_line(header) << '\n';
  for (const auto& [prefix, entry] : snapshot.entries()) {
    json j;
    j["prefix"] = prefix;
    json queries = json::array();
    for (const Query& q : entry.queries) queries.push_back(q.text);
    j["suggestions"] = std::move(queries);
    j["grounded"] = entry.grounded;
    j["profile"] = entry.profile;
    j["timestamp"] = entry.timestamp;
    j["reward"] = entry.reward;
    out << internal::dump_line(j) << '\n';
  }
}

void save_snapshot(const CacheSnapshot& snapshot, const std::filesystem::path& path) {
  auto out = internal::open_output(path);
  write_snapshot(snapshot, out);
  internal::check_written(out, path);
}

namespace {

[[noreturn]] void corrupt(const std::string& version, const std::string& why) {
  throw Error(ErrorCode::kCorruptSnapshot, "snapshot (format " + version + "): " + why, version);
}

CacheEntry parse_entry(const json& j, const std::string& version, std::string& prefix) {
  if (!j.is_object()) corrupt(version, "entry is not an object");
  if (!j.contains("prefix") || !j["prefix"].is_string()) corrupt(version, "entry without prefix");
  prefix = j["prefix"].get<std::string>();
  if (prefix.empty() || normalize_text(prefix) != prefix) {
    corrupt(version, "prefix '" + prefix + "' is not normalized");
  }
  if (!j.contains("suggestions") || !j["suggestions"].is_array()) {
    corrupt(version, "entry '" + prefix + "' lacks a suggestions array");
  }
  CacheEntry entry;
  std::set<std::string> seen;
  for (const json& q : j["suggestions"]) {
    if (!q.is_string()) corrupt(version, "non-string suggestion under '" + prefix + "'");
    std::string text = q.get<std::string>();
    if (text.empty() || normalize_text(text) != text || !seen.insert(text).second) {
      corrupt(version, "invalid suggestion list under '" + prefix + "'");
    }
    entry.queries.push_back(Query{std::move(text)});
  }
  if (entry.queries.size() > kMaxSuggestions) corrupt(version, "too many suggestions");
  if (!j.contains("grounded") || !j["grounded"].is_array() ||
      j["grounded"].size() != entry.queries.size()) {
    corrupt(version, "grounded flags misaligned under '" + prefix + "'");
  }
  for (const json& g : j["grounded"]) {
    if (!g.is_boolean()) corrupt(version, "non-boolean grounded flag");
    entry.grounded.push_back(g.get<bool>());
  }
  entry.profile = j.value("profile", std::string());
  entry.timestamp = j.value("timestamp", std::int64_t{0});
  entry.reward = j.value("reward", 0.0);
  return entry;
}

}  // namespace

CacheSnapshot read_snapshot(std::istream& in) {
  std::string line;
  std::string version = "?";
  if (!std::getline(in, line)) corrupt(version, "missing header");
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object() || !header.contains("format_version") ||
      !header["format_version"].is_number_integer() || !header.contains("entry_count") ||
      !header["entry_count"].is_number_unsigned()) {
    corrupt(version, "bad header");
  }
  version = std::to_string(header["format_version"].get<int>());
  if (header["format_version"].get<int>() != kSnapshotFormatVersion) {
    corrupt(version, "unsupported format version");
  }
  const auto expected = header["entry_count"].get<std::size_t>();

  CacheSnapshot::Map entries;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) corrupt(version, "unparseable entry line " + std::to_string(count + 2));
    std::string prefix;
    CacheEntry entry;
    try {
      entry = parse_entry(j, version, prefix);
    } catch (const json::exception& e) {
      corrupt(version, e.what());
    }
    if (!entries.emplace(prefix, std::move(entry)).second) {
      corrupt(version, "duplicate prefix '" + prefix + "'");
    }
    ++count;
  }
  if (count != expected) {
    corrupt(version, "entry_count " + std::to_string(expected) + " but found " +
                         std::to_string(count));
  }
  return CacheSnapshot(std::move(entries));
}

CacheSnapshot load_snapshot_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kCorruptSnapshot, "cannot open " + path.string(), "?");
  return read_snapshot(in);
}

GateResult serving_gate(const SuggestionList& list, std::span<const QueryFlags> flags) {
  if (flags.size() != list.size()) {
    throw std::invalid_argument("serving_gate: flags do not align with the list");
  }
  GateResult out;
  out.list.raw_text = list.raw_text;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (flags[i].unsafe || !flags[i].catalog_grounded) {
      ++out.filtered;
      continue;
    }
    out.list.queries.push_back(list.queries[i]);
    out.grounded.push_back(flags[i].catalog_grounded);
  }
  return out;
}

GateResult gate_list(const SuggestionList& list, const SafetyClassifier& classifier,
                     const SearchBackend& backend, std::size_t tau) {
  const SafetyResult safety = score_safety(list, classifier);
  const GroundednessResult catalog = score_catalog_groundedness(list, backend, tau);
  std::vector<QueryFlags> flags(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) {
    flags[i].unsafe = safety.unsafe[i];
    flags[i].catalog_grounded = catalog.grounded[i];
  }
  return serving_gate(list, flags);
}

PregenerateResult pregenerate_cache(std::span<const Prefix> prefixes, BoundedGenerator& large,
                                    const PregenerateInputs& in) {
  PregenerateResult result;
  CacheSnapshot::Map entries;
  for (const Prefix& prefix : prefixes) {
    const std::string key = normalize_text(prefix.text);
    const auto skip = [&](std::string reason) {
      result.skipped.push_back({prefix.text, std::move(reason)});
    };
    if (key.empty()) {
      skip("prefix is empty after normalization");
      continue;
    }
    if (entries.contains(key)) {
      skip("duplicate prefix");
      continue;
    }
    try {
      auto ctx = std::make_shared<const RetrievedContext>(
          build_context(prefix, in.index, in.catalog, in.context));
      const PromptText prompt = render_prompt(*ctx, in.prompt_template);
      GenerationRequest request{prompt, ctx,
                                derive_seed(large.profile().sampling.seed, hash_text(key)), 0.0};
      ScoredList scored = score_list(prefix.text, large.generate(std::move(request)), *ctx,
                                     in.suite, in.weights);
      if (scored.scores.format_ok == 0) {
        skip("format: " + std::string(format_error_name(scored.format_error->kind)));
        continue;
      }
      if (scored.reward < in.reward_floor) {
        skip("reward " + std::to_string(scored.reward) + " below floor");
        continue;
      }
      GateResult gated = serving_gate(scored.list, scored.scores.per_query_flags);
      CacheEntry entry;
      entry.queries = std::move(gated.list.queries);
      entry.grounded = std::move(gated.grounded);
      entry.profile = large.profile().name;
      entry.timestamp = in.timestamp;
      entry.reward = scored.reward;
      entries.emplace(key, std::move(entry));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kIoError) throw;
      skip(e.what());
    }
  }
  result.snapshot = CacheSnapshot(std::move(entries));
  return result;
}

ServingEngine::ServingEngine(ServingDeps deps, BoundedGenerator& compact, Clock& clock,
                             ServingConfig config)
    : deps_(std::move(deps)),
      compact_(compact),
      clock_(clock),
      config_(config),
      snapshot_(std::make_shared<const CacheSnapshot>()) {
  if (config_.default_limit == 0) throw std::invalid_argument("default_limit must be >= 1");
}

std::uint64_t ServingEngine::swap_snapshot(CacheSnapshot snapshot) {
  std::lock_guard lock(snapshot_mu_);
  snapshot.set_version(++next_version_);
  const std::uint64_t v = snapshot.version();
  snapshot_ = std::make_shared<const CacheSnapshot>(std::move(snapshot));
  return v;
}

std::uint64_t ServingEngine::load_snapshot(const std::filesystem::path& path) {
  return swap_snapshot(load_snapshot_file(path));
}

std::shared_ptr<const CacheSnapshot> ServingEngine::snapshot() const {
  std::lock_guard lock(snapshot_mu_);
  return snapshot_;
}

ServingCounters ServingEngine::counters() const {
  return {requests_.load(), cache_hits_.load(), retrievals_.load(),
          renders_.load(),  generations_.load(), degraded_.load()};
}

ServeResult ServingEngine::degraded_answer(std::string_view prefix, std::size_t limit) {
  ++degraded_;
  ++retrievals_;
  SuggestionList list;
  for (QueryHit& hit : lookup_prefix(deps_.index, prefix, std::max<std::size_t>(limit, 1))) {
    list.queries.push_back(std::move(hit.query));
  }
  GateResult gated = gate_list(list, deps_.classifier, deps_.backend, config_.tau);
  ServeResult r;
  r.degraded = true;
  r.suggestions = std::move(gated.list);
  r.grounded = std::move(gated.grounded);
  r.cached_rank.assign(r.suggestions.size(), std::nullopt);
  r.filtered_count = gated.filtered;
  return r;
}

ServeResult ServingEngine::complete(std::string_view prefix,
                                    std::optional<Clock::Duration> deadline,
                                    std::optional<std::size_t> limit_opt) {
  const Clock::TimePoint start = clock_.now();
  const Clock::TimePoint due = start + deadline.value_or(config_.deadline);
  const std::size_t limit = limit_opt.value_or(config_.default_limit);
  ++requests_;

  const std::shared_ptr<const CacheSnapshot> snap = snapshot();
  const std::string key = normalize_text(prefix);
  ServeResult result;

  const auto finish = [&](ServeResult r) {
    if (r.suggestions.size() > limit) {
      r.suggestions.queries.resize(limit);
      r.grounded.resize(limit);
      r.cached_rank.resize(limit);
    }
    r.snapshot_version = snap->version();
    r.latency_us = std::chrono::duration_cast<std::chrono::microseconds>(clock_.now() - start)
                       .count();
    return r;
  };

  if (key.empty() || limit == 0) return finish(std::move(result));

  if (const CacheEntry* entry = snap->find(key)) {
    ++cache_hits_;
    result.cache_hit = true;
    for (std::size_t i = 0; i < entry->queries.size(); ++i) {
      // Safety is re-checked because it is a pure lexicon test; catalog
      // groundedness was established when the snapshot was built.
      if (deps_.classifier.is_unsafe(entry->queries[i])) {
        ++result.filtered_count;
        continue;
      }
      result.suggestions.queries.push_back(entry->queries[i]);
      result.grounded.push_back(entry->grounded[i]);
      result.cached_rank.push_back(i + 1);
    }
    return finish(std::move(result));
  }

  try {
    ++retrievals_;
    const Prefix p{std::string(prefix), 1.0, {}};
    auto ctx = std::make_shared<const RetrievedContext>(
        build_context(p, deps_.index, deps_.catalog, deps_.context));
    ++renders_;
    PromptText prompt = render_prompt(*ctx, deps_.prompt_template);
    ++generations_;
    const SamplingParams& sampling = compact_.profile().sampling;
    GenerationRequest request{std::move(prompt), ctx,
                              derive_seed(sampling.seed, hash_text(key)), sampling.temperature};
    const std::string raw = compact_.generate(std::move(request), due);
    ParseResult parsed = parse_answer_block(raw);
    if (!parsed.ok() || clock_.now() > due) return finish(degraded_answer(prefix, limit));
    GateResult gated = gate_list(parsed.list(), deps_.classifier, deps_.backend, config_.tau);
    result.suggestions = std::move(gated.list);
    result.grounded = std::move(gated.grounded);
    result.cached_rank.assign(result.suggestions.size(), std::nullopt);
    result.filtered_count = gated.filtered;
    return finish(std::move(result));
  } catch (const Error&) {
    return finish(degraded_answer(prefix, limit));
  }
}

}  // namespace qac

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

#ifndef QAC_REWARD_HPP_
#define QAC_REWARD_HPP_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qac/context.hpp"
#include "qac/generator.hpp"
#include "qac/verifiers.hpp"

namespace qac {

struct RewardWeights {
  double relevance = 1.0 / 6.0;
  double engagement = 1.0 / 6.0;
  double safety = 1.0 / 6.0;
  double catalog_grounded = 1.0 / 6.0;
  double context_grounded = 1.0 / 6.0;
  double diversity = 1.0 / 6.0;

  // Throws std::invalid_argument when a weight is negative or all are zero.
  void validate() const;
  double sum() const;
  RewardWeights normalized() const;
  RewardWeights scaled(double factor) const;
};

// I_fmt * (weighted sum of the six objective scores).
double composite_reward(const VerifierScores& scores, const RewardWeights& weights);

struct ScoredList {
  std::string raw_text;
  // The salvaged list when the format check failed.
  SuggestionList list;
  std::optional<FormatError> format_error;
  VerifierScores scores;
  double reward = 0.0;
};

// Runs the full verifier suite. Misformatted text is still scored on a
// salvage parse for diagnostics, but its reward is 0.
ScoredList score_list(std::string_view prefix, std::string raw_text,
                      const RetrievedContext& context, const VerifierSuite& suite,
                      const RewardWeights& weights);

struct PreferencePair {
  PromptText prompt;
  ScoredList chosen;
  ScoredList rejected;
  double margin = 0.0;
};

struct MiningParams {
  double delta = 0.08;
  std::size_t k = 4;
};

// Index pair (chosen, rejected) into the scored pool with its margin.
struct PairChoice {
  std::size_t chosen = 0;
  std::size_t rejected = 0;
  double margin = 0.0;

  friend bool operator==(const PairChoice&, const PairChoice&) = default;
};

// All ordered pairs with reward gap >= delta and different raw text, ranked
// by margin descending, then chosen reward descending, then input order;
// the first k are kept.
std::vector<PairChoice> select_preference_pairs(std::span<const double> rewards,
                                                std::span<const std::string> raw_texts,
                                                const MiningParams& params);

std::vector<PreferencePair> build_preference_pairs(std::span<const ScoredList> scored,
                                                   const PromptText& prompt,
                                                   const MiningParams& params);

struct PreferenceRecord {
  std::string prompt;
  std::string chosen_raw;
  std::string rejected_raw;
  double chosen_reward = 0.0;
  double rejected_reward = 0.0;
  double margin = 0.0;

  friend bool operator==(const PreferenceRecord&, const PreferenceRecord&) = default;
};

PreferenceRecord to_record(const PreferencePair& pair);

void write_pref_records(std::span<const PreferenceRecord> records, std::ostream& out);
// Returns the number of records written. Throws Error(kIoError).
std::size_t write_pref_dataset(std::span<const PreferencePair> pairs,
                               const std::filesystem::path& path);
std::vector<PreferenceRecord> read_pref_dataset(std::istream& in);
std::vector<PreferenceRecord> load_pref_dataset(const std::filesystem::path& path);

}  // namespace qac

#endif  // QAC_REWARD_HPP_

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

#include "qac/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "jsonl.hpp"

namespace qac {

using internal::json;

void RewardWeights::validate() const {
  for (double w : {relevance, engagement, safety, catalog_grounded, context_grounded,
                   diversity}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("reward weights must be finite and non-negative");
    }
  }
  if (sum() <= 0.0) throw std::invalid_argument("at least one reward weight must be positive");
}

double RewardWeights::sum() const {
  return relevance + engagement + safety + catalog_grounded + context_grounded + diversity;
}

RewardWeights RewardWeights::scaled(double f) const {
  return {relevance * f,        engagement * f,       safety * f,
          catalog_grounded * f, context_grounded * f, diversity * f};
}

RewardWeights RewardWeights::normalized() const {
  const double total = sum();
  return total > 0.0 ? scaled(1.0 / total) : *this;
}

double composite_reward(const VerifierScores& s, const RewardWeights& w) {
  const double base = w.relevance * s.relevance + w.engagement * s.engagement +
                      w.safety * s.safety + w.catalog_grounded * s.catalog_grounded +
                      w.context_grounded * s.context_grounded + w.diversity * s.diversity;
  return s.format_ok == 1 ? base : 0.0;
}

ScoredList score_list(std::string_view prefix, std::string raw_text,
                      const RetrievedContext& context, const VerifierSuite& suite,
                      const RewardWeights& weights) {
  ScoredList out;
  ParseResult parsed = parse_answer_block(raw_text);
  int format_ok = 1;
  if (parsed.ok()) {
    out.list = parsed.list();
  } else {
    format_ok = 0;
    out.format_error = parsed.error();
    out.list = salvage_parse(raw_text);
  }
  out.scores = suite.score(prefix, out.list, context, format_ok);
  out.reward = composite_reward(out.scores, weights);
  out.raw_text = std::move(raw_text);
  return out;
}

std::vector<PairChoice> select_preference_pairs(std::span<const double> rewards,
                                                std::span<const std::string> raw_texts,
                                                const MiningParams& params) {
  if (!(params.delta > 0.0)) throw std::invalid_argument("delta must be > 0");
  if (params.k == 0) throw std::invalid_argument("k must be >= 1");
  if (rewards.size() != raw_texts.size()) {
    throw std::invalid_argument("rewards and raw texts differ in length");
  }
  std::vector<PairChoice> valid;
  for (std::size_t a = 0; a < rewards.size(); ++a) {
    for (std::size_t b = 0; b < rewards.size(); ++b) {
      if (a == b || raw_texts[a] == raw_texts[b]) continue;
      const double margin = rewards[a] - rewards[b];
      if (margin >= params.delta) valid.push_back({a, b, margin});
    }
  }
  std::stable_sort(valid.begin(), valid.end(), [&](const PairChoice& x, const PairChoice& y) {
    if (x.margin != y.margin) return x.margin > y.margin;
    return rewards[x.chosen] > rewards[y.chosen];
  });
  if (valid.size() > params.k) valid.resize(params.k);
  return valid;
}

std::vector<PreferencePair> build_preference_pairs(std::span<const ScoredList> scored,
                                                   const PromptText& prompt,
                                                   const MiningParams& params) {
  std::vector<double> rewards;
  std::vector<std::string> raws;
  for (const ScoredList& s : scored) {
    rewards.push_back(s.reward);
    raws.push_back(s.raw_text);
  }
  std::vector<PreferencePair> pairs;
  for (const PairChoice& c : select_preference_pairs(rewards, raws, params)) {
    pairs.push_back({prompt, scored[c.chosen], scored[c.rejected], c.margin});
  }
  return pairs;
}

PreferenceRecord to_record(const PreferencePair& pair) {
  return {pair.prompt.rendered, pair.chosen.raw_text,  pair.rejected.raw_text,
          pair.chosen.reward,   pair.rejected.reward, pair.margin};
}

void write_pref_records(std::span<const PreferenceRecord> records, std::ostream& out) {
  for (const PreferenceRecord& r : records) {
    json j;
    j["prompt"] = r.prompt;
    j["chosen_raw"] = r.chosen_raw;
    j["rejected_raw"] = r.rejected_raw;
    j["chosen_reward"] = r.chosen_reward;
    j["rejected_reward"] = r.rejected_reward;
    j["margin"] = r.margin;
    out << internal::dump_line(j) << '\n';
  }
}

std::size_t write_pref_dataset(std::span<const PreferencePair> pairs,
                               const std::filesystem::path& path) {
  std::vector<PreferenceRecord> records;
  records.reserve(pairs.size());
  for (const auto& p : pairs) records.push_back(to_record(p));
  auto out = internal::open_output(path);
  write_pref_records(records, out);
  internal::check_written(out, path);
  return records.size();
}

std::vector<PreferenceRecord> read_pref_dataset(std::istream& in) {
  std::vector<PreferenceRecord> records;
  internal::for_each_jsonl(in, [&](const json& j, std::size_t) {
    records.push_back({j.at("prompt").get<std::string>(),
                       j.at("chosen_raw").get<std::string>(),
                       j.at("rejected_raw").get<std::string>(),
                       j.at("chosen_reward").get<double>(),
                       j.at("rejected_reward").get<double>(),
                       j.at("margin").get<double>()});
  });
  return records;
}

std::vector<PreferenceRecord> load_pref_dataset(const std::filesystem::path& path) {
  auto in = internal::open_input(path);
  return read_pref_dataset(in);
}

}  // namespace qac

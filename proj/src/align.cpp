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

#include "qac/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>

#include "jsonl.hpp"
#include "qac/error.hpp"
#include "qac/seed.hpp"
#include "qac/text.hpp"

namespace qac {

int Vocabulary::add(std::string_view token) {
  const auto it = ids_.find(std::string(token));
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.emplace_back(token);
  ids_.emplace(tokens_.back(), id);
  return id;
}

std::optional<int> Vocabulary::id(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    const auto i = id(t);
    if (!i) throw Error(ErrorCode::kUnknownToken, "token '" + t + "' is not in the vocabulary", t);
    ids.push_back(*i);
  }
  return ids;
}

std::vector<int> Vocabulary::encode_growing(std::span<const std::string> tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(add(t));
  return ids;
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  bool first_line = true;
  for (std::string_view line : split_lines(trim(text))) {
    if (!first_line) tokens.emplace_back("<nl>");
    first_line = false;
    std::istringstream words{std::string(line)};
    std::string w;
    while (words >> w) tokens.push_back(w);
  }
  return tokens;
}

ToyPolicy::ToyPolicy(std::size_t vocab_size, std::size_t window)
    : vocab_size_(vocab_size), window_(window), zeros_(vocab_size, 0.0) {
  if (vocab_size_ == 0) throw std::invalid_argument("toy policy needs a non-empty vocabulary");
}

ContextKey ToyPolicy::context_key(std::span<const int> prompt, std::span<const int> target,
                                  std::size_t step) const {
  const std::size_t history = prompt.size() + step;
  const std::size_t take = std::min(window_, history);
  ContextKey key;
  key.reserve(take);
  for (std::size_t pos = history - take; pos < history; ++pos) {
    key.push_back(pos < prompt.size() ? prompt[pos] : target[pos - prompt.size()]);
  }
  return key;
}

std::span<const double> ToyPolicy::logits(const ContextKey& key) const {
  const auto it = table_.find(key);
  return it == table_.end() ? std::span<const double>(zeros_) : std::span<const double>(it->second);
}

std::vector<double>& ToyPolicy::mutable_logits(const ContextKey& key) {
  auto [it, inserted] = table_.try_emplace(key);
  if (inserted) it->second.assign(vocab_size_, 0.0);
  return it->second;
}

namespace {

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

double log_softmax_at(std::span<const double> logits, int token) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  return logits[static_cast<std::size_t>(token)] - m - std::log(z);
}

void check_tokens(const ToyPolicy& policy, std::span<const int> tokens) {
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= policy.vocab_size()) {
      throw Error(ErrorCode::kUnknownToken, "token id " + std::to_string(t) + " out of range",
                  std::to_string(t));
    }
  }
}

// -log σ(z), stable for large |z|.
double neg_log_sigmoid(double z) {
  return z >= 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}


double pair_margin(const ToyPolicy& policy, const ToyPolicy& reference,
                   const TokenizedPair& p, double beta) {
  const double chosen = seq_logprob(policy, p.prompt, p.chosen) -
                        seq_logprob(reference, p.prompt, p.chosen);
  const double rejected = seq_logprob(policy, p.prompt, p.rejected) -
                          seq_logprob(reference, p.prompt, p.rejected);
  return beta * (chosen - rejected);
}

}  // namespace

std::vector<double> ToyPolicy::probabilities(const ContextKey& key) const {
  return softmax(logits(key));
}

void ToyPolicy::randomize(std::span<const TokenizedExample> examples, std::uint64_t seed,
                          double scale) {
  std::mt19937_64 rng(splitmix64(seed));
  // Box-Muller on the portable uniform keeps draws identical across libraries.
  const auto normal = [&] {
    const double u1 = std::max(unit_uniform(rng), 1e-300);
    const double u2 = unit_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  for (const auto& ex : examples) {
    for (std::size_t t = 0; t < ex.target.size(); ++t) {
      auto key = context_key(ex.prompt, ex.target, t);
      if (table_.contains(key)) continue;
      auto& row = mutable_logits(key);
      for (double& v : row) v = scale * normal();
    }
  }
}

double seq_logprob(const ToyPolicy& policy, std::span<const int> prompt,
                   std::span<const int> target) {
  check_tokens(policy, prompt);
  check_tokens(policy, target);
  double total = 0.0;
  for (std::size_t t = 0; t < target.size(); ++t) {
    total += log_softmax_at(policy.logits(policy.context_key(prompt, target, t)), target[t]);
  }
  return total;
}

void accumulate_seq_logprob_grad(const ToyPolicy& policy, std::span<const int> prompt,
                                 std::span<const int> target, double scale,
                                 Gradient& grad) {
  check_tokens(policy, prompt);
  check_tokens(policy, target);
  for (std::size_t t = 0; t < target.size(); ++t) {
    const ContextKey key = policy.context_key(prompt, target, t);
    const std::vector<double> p = softmax(policy.logits(key));
    auto& row = grad[key];
    if (row.empty()) row.assign(policy.vocab_size(), 0.0);
    for (std::size_t v = 0; v < p.size(); ++v) row[v] -= scale * p[v];
    row[static_cast<std::size_t>(target[t])] += scale;
  }
}

double sft_loss(const ToyPolicy& policy, std::span<const TokenizedExample> dataset) {
  if (dataset.empty()) throw Error(ErrorCode::kEmptyDataset, "SFT dataset is empty");
  double total = 0.0;
  for (const auto& ex : dataset) {
    if (ex.target.empty()) throw std::invalid_argument("SFT example has an empty target");
    total += seq_logprob(policy, ex.prompt, ex.target) / static_cast<double>(ex.target.size());
  }
  return -total / static_cast<double>(dataset.size());
}

Gradient sft_gradient(const ToyPolicy& policy, std::span<const TokenizedExample> dataset) {
  if (dataset.empty()) throw Error(ErrorCode::kEmptyDataset, "SFT dataset is empty");
  Gradient grad;
  const double n = static_cast<double>(dataset.size());
  for (const auto& ex : dataset) {
    if (ex.target.empty()) throw std::invalid_argument("SFT example has an empty target");
    accumulate_seq_logprob_grad(policy, ex.prompt, ex.target,
                                -1.0 / (n * static_cast<double>(ex.target.size())), grad);
  }
  return grad;
}

double dpo_loss(const ToyPolicy& policy, const ToyPolicy& reference,
                std::span<const TokenizedPair> pairs, double beta) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyDataset, "preference dataset is empty");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
  double total = 0.0;
  for (const auto& p : pairs) total += neg_log_sigmoid(pair_margin(policy, reference, p, beta));
  return total / static_cast<double>(pairs.size());
}

Gradient dpo_gradient(const ToyPolicy& policy, const ToyPolicy& reference,
                      std::span<const TokenizedPair> pairs, double beta) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyDataset, "preference dataset is empty");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
  Gradient grad;
  const double n = static_cast<double>(pairs.size());
  for (const auto& p : pairs) {
    const double z = pair_margin(policy, reference, p, beta);
    // d(-log σ(z))/dz = -σ(-z); dz/dθ = β (∇ log π(y_w) - ∇ log π(y_l)).
    const double coeff = -sigmoid(-z) * beta / n;
    accumulate_seq_logprob_grad(policy, p.prompt, p.chosen, coeff, grad);
    accumulate_seq_logprob_grad(policy, p.prompt, p.rejected, -coeff, grad);
  }
  return grad;
}

GradCheckReport dpo_grad_check(const ToyPolicy& policy, const ToyPolicy& reference,
                               std::span<const TokenizedPair> pairs, double beta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be > 0");
  const Gradient analytic = dpo_gradient(policy, reference, pairs, beta);
  ToyPolicy probe = policy;
  for (const auto& [key, row] : analytic) probe.mutable_logits(key);

  GradCheckReport report;
  for (const auto& [key, row] : analytic) {
    auto& logits = probe.mutable_logits(key);
    for (std::size_t v = 0; v < row.size(); ++v) {
      const double saved = logits[v];
      logits[v] = saved + h;
      const double up = dpo_loss(probe, reference, pairs, beta);
      logits[v] = saved - h;
      const double down = dpo_loss(probe, reference, pairs, beta);
      logits[v] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = row[v];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), kGradCheckFloor});
      report.max_relative_error = std::max(report.max_relative_error, std::fabs(a - numeric) / denom);
      report.max_abs_analytic = std::max(report.max_abs_analytic, std::fabs(a));
      ++report.parameters;
    }
  }
  return report;
}

void apply_gradient(ToyPolicy& policy, const Gradient& grad, double step) {
  for (const auto& [key, row] : grad) {
    auto& logits = policy.mutable_logits(key);
    for (std::size_t v = 0; v < row.size(); ++v) logits[v] -= step * row[v];
  }
}

std::vector<double> train_dpo(ToyPolicy& policy, const ToyPolicy& reference,
                              std::span<const TokenizedPair> pairs, double beta,
                              double step_size, std::size_t steps) {
  std::vector<double> losses;
  losses.reserve(steps + 1);
  for (std::size_t s = 0; s < steps; ++s) {
    losses.push_back(dpo_loss(policy, reference, pairs, beta));
    apply_gradient(policy, dpo_gradient(policy, reference, pairs, beta), step_size);
  }
  losses.push_back(dpo_loss(policy, reference, pairs, beta));
  return losses;
}

std::vector<double> train_sft(ToyPolicy& policy, std::span<const TokenizedExample> dataset,
                              double step_size, std::size_t steps) {
  std::vector<double> losses;
  losses.reserve(steps + 1);
  for (std::size_t s = 0; s < steps; ++s) {
    losses.push_back(sft_loss(policy, dataset));
    apply_gradient(policy, sft_gradient(policy, dataset), step_size);
  }
  losses.push_back(sft_loss(policy, dataset));
  return losses;
}

void write_loss_csv(std::span<const double> losses, const std::filesystem::path& path) {
  auto out = internal::open_output(path);
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, losses[i]);
    out << buf;
  }
  internal::check_written(out, path);
}

}  // namespace qac

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

#ifndef QAC_ALIGN_HPP_
#define QAC_ALIGN_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qac {

// Token table for toy training. Ids are dense and assigned in insertion
// order.
class Vocabulary {
 public:
  int add(std::string_view token);
  std::optional<int> id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }

  // Strict lookup; throws Error(kUnknownToken).
  std::vector<int> encode(std::span<const std::string> tokens) const;
  // Adds unseen tokens.
  std::vector<int> encode_growing(std::span<const std::string> tokens);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Whitespace tokens of each line with a "<nl>" marker between lines.
std::vector<std::string> whitespace_tokens(std::string_view text);

struct TokenizedExample {
  std::vector<int> prompt;
  std::vector<int> target;
};

struct TokenizedPair {
  std::vector<int> prompt;
  std::vector<int> chosen;
  std::vector<int> rejected;
};

// Last `window` tokens of the conditioning history (prompt then the target
// tokens generated so far).
using ContextKey = std::vector<int>;
using LogitTable = std::map<ContextKey, std::vector<double>>;

// Tabular autoregressive policy: one logit row per context key, softmax over
// the vocabulary. Rows absent from the table are all-zero (uniform).
class ToyPolicy {
 public:
  ToyPolicy(std::size_t vocab_size, std::size_t window = 8);

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t window() const { return window_; }

  ContextKey context_key(std::span<const int> prompt, std::span<const int> target,
                         std::size_t step) const;

  // Zero row when the key is absent.
  std::span<const double> logits(const ContextKey& key) const;
  std::vector<double>& mutable_logits(const ContextKey& key);
  std::vector<double> probabilities(const ContextKey& key) const;

  const LogitTable& table() const { return table_; }
  LogitTable& table() { return table_; }

  // Gives every row reached by `examples` i.i.d. N(0, scale^2) logits.
  void randomize(std::span<const TokenizedExample> examples, std::uint64_t seed,
                 double scale = 1.0);

 private:
  std::size_t vocab_size_;
  std::size_t window_;
  LogitTable table_;
  std::vector<double> zeros_;
};

using Gradient = LogitTable;

// Σ_t log P(y_t | y_<t, x). Throws Error(kUnknownToken) for ids outside the
// vocabulary.
double seq_logprob(const ToyPolicy& policy, std::span<const int> prompt,
                   std::span<const int> target);

// Adds scale * ∂ seq_logprob / ∂ logits into `grad`.
void accumulate_seq_logprob_grad(const ToyPolicy& policy, std::span<const int> prompt,
                                 std::span<const int> target, double scale,
                                 Gradient& grad);

// -(1/N) Σ_i (1/T_i) seq_logprob(x_i, y_i). Throws Error(kEmptyDataset).
double sft_loss(const ToyPolicy& policy, std::span<const TokenizedExample> dataset);
Gradient sft_gradient(const ToyPolicy& policy, std::span<const TokenizedExample> dataset);

// Mean over pairs of -log σ(β [(log π(y_w) - log π_ref(y_w)) -
// (log π(y_l) - log π_ref(y_l))]). Raw (unnormalized) sequence log-probs.
double dpo_loss(const ToyPolicy& policy, const ToyPolicy& reference,
                std::span<const TokenizedPair> pairs, double beta);
Gradient dpo_gradient(const ToyPolicy& policy, const ToyPolicy& reference,
                      std::span<const TokenizedPair> pairs, double beta);

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_abs_analytic = 0.0;
  std::size_t parameters = 0;
};

// Gradients smaller than this are compared on an absolute scale.
inline constexpr double kGradCheckFloor = 1e-6;

// Central finite differences over every parameter touched by the pairs.
// Relative error is |a - n| / max(|a|, |n|, kGradCheckFloor).
GradCheckReport dpo_grad_check(const ToyPolicy& policy, const ToyPolicy& reference,
                               std::span<const TokenizedPair> pairs, double beta,
                               double h = 1e-5);

// θ ← θ - step * grad.
void apply_gradient(ToyPolicy& policy, const Gradient& grad, double step);

// Plain gradient descent; returns the loss before each step plus the final
// loss (steps + 1 values).
std::vector<double> train_dpo(ToyPolicy& policy, const ToyPolicy& reference,
                              std::span<const TokenizedPair> pairs, double beta,
                              double step_size, std::size_t steps);
std::vector<double> train_sft(ToyPolicy& policy, std::span<const TokenizedExample> dataset,
                              double step_size, std::size_t steps);

// "step,loss" CSV.
void write_loss_csv(std::span<const double> losses, const std::filesystem::path& path);

}  // namespace qac

#endif  // QAC_ALIGN_HPP_

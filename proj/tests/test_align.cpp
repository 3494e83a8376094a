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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "qac/align.hpp"
#include "qac/error.hpp"
#include "qac/seed.hpp"

namespace qac {
namespace {

const double kLn2 = std::log(2.0);

// Direct softmax of a row, then the log of the chained product.
double naive_logprob(const ToyPolicy& p, const std::vector<int>& x, const std::vector<int>& y) {
  double prod = 1.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const auto row = p.logits(p.context_key(x, y, t));
    double z = 0.0;
    for (double v : row) z += std::exp(v);
    prod *= std::exp(row[static_cast<std::size_t>(y[t])]) / z;
  }
  return std::log(prod);
}

std::vector<int> random_seq(std::mt19937_64& rng, std::size_t v, std::size_t min_len, std::size_t max_len) {
  std::vector<int> s(min_len + uniform_index(rng, max_len - min_len + 1));
  for (int& t : s) t = static_cast<int>(uniform_index(rng, v));
  return s;
}

struct Instance {
  ToyPolicy policy;
  ToyPolicy reference;
  std::vector<TokenizedPair> pairs;
};

Instance random_instance(std::uint64_t seed, std::size_t v = 5, std::size_t n_pairs = 3) {
  std::mt19937_64 rng(seed);
  Instance in{ToyPolicy(v, 3), ToyPolicy(v, 3), {}};
  std::vector<TokenizedExample> examples;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    TokenizedPair p{random_seq(rng, v, 1, 3), random_seq(rng, v, 1, 4), random_seq(rng, v, 1, 4)};
    examples.push_back({p.prompt, p.chosen});
    examples.push_back({p.prompt, p.rejected});
    in.pairs.push_back(std::move(p));
  }
  in.policy.randomize(examples, derive_seed(seed, 1));
  in.reference.randomize(examples, derive_seed(seed, 2));
  return in;
}

TEST(Vocabulary, EncodeAndTokens) {
  Vocabulary v;
  EXPECT_EQ(v.add("a"), 0);
  EXPECT_EQ(v.add("b"), 1);
  EXPECT_EQ(v.add("a"), 0);
  const std::vector<std::string> known{"b", "a"};
  EXPECT_EQ(v.encode(known), (std::vector<int>{1, 0}));
  const std::vector<std::string> unknown{"a", "zz"};
  EXPECT_THROW(v.encode(unknown), Error);
  EXPECT_EQ(v.encode_growing(unknown), (std::vector<int>{0, 2}));
  EXPECT_EQ(whitespace_tokens("<answer>\nmoon  runner\n</answer>\n"),
            (std::vector<std::string>{"<answer>", "<nl>", "moon", "runner", "<nl>", "</answer>"}));
}

TEST(SeqLogprob, ClosedForms) {
  ToyPolicy det(4, 8);
  const std::vector<int> x{0, 1}, y{2, 3, 1};
  for (std::size_t t = 0; t < y.size(); ++t) {
    auto& row = det.mutable_logits(det.context_key(x, y, t));
    row[static_cast<std::size_t>(y[t])] = 1000.0;
  }
  EXPECT_NEAR(seq_logprob(det, x, y), 0.0, 1e-12);

  const ToyPolicy uniform(4);
  EXPECT_NEAR(seq_logprob(uniform, x, y), 3.0 * std::log(0.25), 1e-12);
  const std::vector<int> bad{7};
  EXPECT_THROW(seq_logprob(uniform, x, bad), Error);
}

TEST(SeqLogprob, RandomPolicyMatchesChainProduct) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Instance in = random_instance(seed);
    for (const auto& p : in.pairs) {
      EXPECT_NEAR(seq_logprob(in.policy, p.prompt, p.chosen),
                  naive_logprob(in.policy, p.prompt, p.chosen), 1e-10);
      EXPECT_LE(seq_logprob(in.policy, p.prompt, p.rejected), 0.0);
    }
    for (const auto& [key, row] : in.policy.table()) {
      const auto probs = in.policy.probabilities(key);
      double s = 0.0;
      for (double q : probs) s += q;
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
  }
}

TEST(SftLoss, ClosedFormsAndMean) {
  const std::vector<TokenizedExample> none;
  EXPECT_THROW(sft_loss(ToyPolicy(4), none), Error);
  const ToyPolicy uniform(4);
  const std::vector<TokenizedExample> one{{{0}, {1, 2}}};
  EXPECT_NEAR(sft_loss(uniform, one), std::log(4.0), 1e-12);

  Instance in = random_instance(5);
  const std::vector<TokenizedExample> two{{in.pairs[0].prompt, {1}}, {in.pairs[1].prompt, {2, 3, 4}}};
  const double hand = -0.5 * (seq_logprob(in.policy, two[0].prompt, two[0].target) / 1.0 +
                              seq_logprob(in.policy, two[1].prompt, two[1].target) / 3.0);
  EXPECT_NEAR(sft_loss(in.policy, two), hand, 1e-12);
  std::vector<TokenizedExample> swapped{two[1], two[0]};
  EXPECT_NEAR(sft_loss(in.policy, swapped), sft_loss(in.policy, two), 1e-12);

  ToyPolicy det(4, 8);
  for (std::size_t t = 0; t < 2; ++t) {
    det.mutable_logits(det.context_key(one[0].prompt, one[0].target, t))
        [static_cast<std::size_t>(one[0].target[t])] = 1000.0;
  }
  EXPECT_NEAR(sft_loss(det, one), 0.0, 1e-12);
}

TEST(DpoLoss, IdentityAndZeroBeta) {
  Instance in = random_instance(3);
  EXPECT_DOUBLE_EQ(dpo_loss(in.policy, in.policy, in.pairs, 0.1), kLn2);
  EXPECT_DOUBLE_EQ(dpo_loss(in.policy, in.reference, in.pairs, 0.0), kLn2);
  const std::vector<TokenizedPair> none;
  EXPECT_THROW(dpo_loss(in.policy, in.reference, none, 0.1), Error);
  for (const auto& [key, row] : dpo_gradient(in.policy, in.reference, in.pairs, 0.0)) {
    for (double g : row) EXPECT_EQ(g, 0.0);
  }
}

TEST(DpoLoss, ThreePairScalarOracle) {
  Instance in = random_instance(11);
  const double beta = 0.1;
  double sum = 0.0;
  for (const auto& p : in.pairs) {
    const double m = (seq_logprob(in.policy, p.prompt, p.chosen) -
                      seq_logprob(in.reference, p.prompt, p.chosen)) -
                     (seq_logprob(in.policy, p.prompt, p.rejected) -
                      seq_logprob(in.reference, p.prompt, p.rejected));
    sum += -std::log(1.0 / (1.0 + std::exp(-beta * m)));
  }
  const double got = dpo_loss(in.policy, in.reference, in.pairs, beta);
  EXPECT_NEAR(got, sum / 3.0, 1e-12);
  EXPECT_GE(got, 0.0);
}

TEST(DpoGradCheck, RandomInstancesAcrossSeeds) {
  for (std::uint64_t seed = 100; seed < 125; ++seed) {
    Instance in = random_instance(seed, 5, 1 + seed % 3);
    const GradCheckReport r = dpo_grad_check(in.policy, in.reference, in.pairs, 0.5);
    EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed;
    EXPECT_GT(r.parameters, 0u);
  }
}

TEST(DpoGradient, OneStepRaisesMargin) {
  Instance in = random_instance(77, 5, 1);
  const auto& p = in.pairs[0];
  auto margin = [&](const ToyPolicy& pol) {
    return seq_logprob(pol, p.prompt, p.chosen) - seq_logprob(pol, p.prompt, p.rejected);
  };
  if (p.chosen == p.rejected) GTEST_SKIP();
  const double before = margin(in.policy);
  apply_gradient(in.policy, dpo_gradient(in.policy, in.reference, in.pairs, 0.1), 0.01);
  EXPECT_GT(margin(in.policy), before);
}

// Raising the chosen sequence's logprob at a context the rejected sequence never
// visits leaves everything else fixed; the loss must fall strictly.
TEST(DpoLoss, ChosenLogprobMonotone) {
  ToyPolicy policy(5, 8), reference(5, 8);
  const std::vector<TokenizedPair> pairs{{{0}, {1, 2}, {3, 4}}};
  const ContextKey key = policy.context_key(pairs[0].prompt, pairs[0].chosen, 1);
  double last = dpo_loss(policy, reference, pairs, 0.1);
  EXPECT_DOUBLE_EQ(last, kLn2);
  for (int i = 0; i < 20; ++i) {
    const double before_rej = seq_logprob(policy, pairs[0].prompt, pairs[0].rejected);
    policy.mutable_logits(key)[2] += 0.5;
    EXPECT_EQ(seq_logprob(policy, pairs[0].prompt, pairs[0].rejected), before_rej);
    const double now = dpo_loss(policy, reference, pairs, 0.1);
    EXPECT_LT(now, last);
    EXPECT_GE(now, 0.0);
    last = now;
  }
}

TEST(Training, LossDecreases) {
  Instance in = random_instance(9, 5, 3);
  ToyPolicy reference = in.policy;
  const auto losses = train_dpo(in.policy, reference, in.pairs, 0.1, 0.5, 50);
  ASSERT_EQ(losses.size(), 51u);
  EXPECT_DOUBLE_EQ(losses.front(), kLn2);
  EXPECT_LT(losses.back(), losses.front());

  std::vector<TokenizedExample> sft;
  for (const auto& p : in.pairs) sft.push_back({p.prompt, p.chosen});
  ToyPolicy fresh(5, 3);
  const auto sft_losses = train_sft(fresh, sft, 0.5, 30);
  EXPECT_LT(sft_losses.back(), sft_losses.front());

  const auto path = std::filesystem::temp_directory_path() / "qac_test_loss.csv";
  write_loss_csv(losses, path);
  std::ifstream in_csv(path);
  std::string header, first;
  std::getline(in_csv, header);
  std::getline(in_csv, first);
  EXPECT_EQ(header, "step,loss");
  EXPECT_EQ(first.substr(0, 2), "0,");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace qac

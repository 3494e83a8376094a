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

#include <sstream>

#include "qac/error.hpp"
#include "qac/eval.hpp"
#include "qac/seed.hpp"
#include "support/oracles.hpp"
#include "support/world.hpp"

namespace qac {
namespace {

class FnSystem final : public EvalSystem {
 public:
  explicit FnSystem(std::function<SuggestionList(const Prefix&)> fn, std::string name = "fn")
      : fn_(std::move(fn)), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  SuggestionList serve(const Prefix& p) override { return fn_(p); }

 private:
  std::function<SuggestionList(const Prefix&)> fn_;
  std::string name_;
};

// Mock generation at a prefix-keyed noise seed: a mix of good and bad lists.
SuggestionList mock_answer(const testing::World& w, const Prefix& p) {
  const auto ctx = w.context_for(p);
  return salvage_parse(template_mock_generate(*ctx, hash_text(p.text) % 3));
}

EvalDeps deps_of(const testing::World& w) { return EvalDeps{w.index, w.catalog, w.context, w.suite}; }

TEST(TrafficWeightedMean, Examples) {
  const std::vector<std::pair<double, double>> one{{0.7, 1}};
  EXPECT_DOUBLE_EQ(traffic_weighted_mean(one), 0.7);
  const std::vector<std::pair<double, double>> two{{1.0, 3}, {0.0, 1}};
  EXPECT_DOUBLE_EQ(traffic_weighted_mean(two), 0.75);
  const std::vector<std::pair<double, double>> eq{{0.2, 2}, {0.5, 2}, {0.8, 2}};
  EXPECT_NEAR(traffic_weighted_mean(eq), 0.5, 1e-15);
  const std::vector<std::pair<double, double>> zero{{0.5, 0}};
  try {
    traffic_weighted_mean(zero);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroTotalWeight);
  }
  EXPECT_THROW(traffic_weighted_mean({}), Error);
  const std::vector<std::pair<double, double>> neg{{0.5, -1}, {0.5, 2}};
  EXPECT_THROW(traffic_weighted_mean(neg), std::invalid_argument);
}

TEST(Evaluate, VacuousSystem) {
  const testing::World w;
  FnSystem nothing([](const Prefix&) { return SuggestionList{}; });
  const auto r = evaluate_system(w.fx.prefixes, nothing, deps_of(w));
  EXPECT_EQ(r.overall.coverage.value, 0.0);
  EXPECT_EQ(r.overall.unsafe_rate.value, 0.0);
  EXPECT_EQ(r.overall.diversity.value, 0.0);
  EXPECT_EQ(r.overall.catalog_ungrounded_rate.value, 0.0);
  EXPECT_FALSE(r.overall.eng_win_rate.value.has_value());
  EXPECT_EQ(r.prefixes, w.fx.prefixes.size());
}

TEST(Evaluate, OneUnsafeOfFour) {
  const testing::World w;
  const std::vector<Prefix> four(w.fx.prefixes.begin(), w.fx.prefixes.begin() + 4);
  FnSystem sys([&](const Prefix& p) {
    SuggestionList l;
    l.queries.push_back(Query{"take me to the moon"});
    if (p.text == four[2].text) l.queries.push_back(Query{"free casino bonus"});
    return l;
  });
  std::vector<Prefix> equal = four;
  for (auto& p : equal) p.traffic_weight = 1.0;
  const auto r = evaluate_system(equal, sys, deps_of(w));
  EXPECT_DOUBLE_EQ(*r.overall.unsafe_rate.value, 0.25);
  EXPECT_EQ(r.overall.unsafe_rate.count, 4u);
}

TEST(Evaluate, FiftyPrefixOracle) {
  const testing::World w;
  const std::vector<Prefix> fifty(w.fx.prefixes.begin(), w.fx.prefixes.begin() + 50);
  FnSystem sys([&](const Prefix& p) { return mock_answer(w, p); });
  BaselineScores baseline;
  for (std::size_t i = 0; i < fifty.size(); i += 2) baseline[normalize_text(fifty[i].text)] = 0.05 * (i % 7);
  const auto r = evaluate_system(fifty, sys, deps_of(w), &baseline);

  std::vector<double> w_all, cov, rel, uns, cu, xu, div, w_b, win, signed_;
  const RuleJudge rule;
  const GroundingJudge* judges[] = {&rule, &rule, &rule};
  for (const Prefix& p : fifty) {
    const SuggestionList l = mock_answer(w, p);
    const auto ctx = w.context_for(p);
    w_all.push_back(p.traffic_weight);
    cov.push_back(l.empty() ? 0 : 1);
    rel.push_back(score_relevance(p.text, l));
    uns.push_back(score_safety(l, w.classifier).safe ? 0 : 1);
    const auto cg = score_catalog_groundedness(l, w.backend).grounded;
    cu.push_back(std::count(cg.begin(), cg.end(), false) > 0 ? 1 : 0);
    const auto xg = score_context_groundedness(l, *ctx, judges).grounded;
    xu.push_back(std::count(xg.begin(), xg.end(), false) > 0 ? 1 : 0);
    std::vector<std::vector<std::string>> pages;
    for (const Query& q : l.queries) {
      pages.emplace_back();
      for (const auto& e : w.backend.search(q)) pages.back().push_back(e.item_id);
    }
    div.push_back(oracle::diversity(pages));
    const auto b = baseline.find(normalize_text(p.text));
    if (b != baseline.end()) {
      const double eng = score_engagement(p.text, l, w.stats);
      w_b.push_back(p.traffic_weight);
      win.push_back(eng > b->second ? 1 : 0);
      signed_.push_back(eng > b->second ? 1 : (eng < b->second ? -1 : 0));
    }
  }
  EXPECT_NEAR(*r.overall.coverage.value, oracle::weighted_mean(cov, w_all), 1e-12);
  EXPECT_NEAR(*r.overall.relevance.value, oracle::weighted_mean(rel, w_all), 1e-12);
  EXPECT_NEAR(*r.overall.unsafe_rate.value, oracle::weighted_mean(uns, w_all), 1e-12);
  EXPECT_NEAR(*r.overall.catalog_ungrounded_rate.value, oracle::weighted_mean(cu, w_all), 1e-12);
  EXPECT_NEAR(*r.overall.context_ungrounded_rate.value, oracle::weighted_mean(xu, w_all), 1e-12);
  EXPECT_NEAR(*r.overall.diversity.value, oracle::weighted_mean(div, w_all), 1e-12);
  EXPECT_NEAR(*r.overall.eng_win_rate.value, oracle::weighted_mean(win, w_b), 1e-12);
  EXPECT_NEAR(*r.overall.eng_win_signed.value, oracle::weighted_mean(signed_, w_b), 1e-12);
  EXPECT_EQ(r.overall.eng_win_rate.count, w_b.size());
  EXPECT_FALSE(r.strata.empty());
  // the mix should not be degenerate
  EXPECT_GT(*r.overall.catalog_ungrounded_rate.value + *r.overall.context_ungrounded_rate.value, 0.0);

  const auto threaded = evaluate_system(fifty, sys, deps_of(w), &baseline, 4);
  EXPECT_EQ(*threaded.overall.diversity.value, *r.overall.diversity.value);
  EXPECT_EQ(*threaded.overall.relevance.value, *r.overall.relevance.value);
}

TEST(Evaluate, ScalingAndZeroWeightInvariance) {
  const testing::World w;
  std::vector<Prefix> ps(w.fx.prefixes.begin(), w.fx.prefixes.begin() + 30);
  FnSystem sys([&](const Prefix& p) { return mock_answer(w, p); });
  const auto base = evaluate_system(ps, sys, deps_of(w));
  auto scaled = ps;
  for (auto& p : scaled) p.traffic_weight *= 7.0;
  const auto s7 = evaluate_system(scaled, sys, deps_of(w));
  auto with_zero = ps;
  Prefix z = w.fx.prefixes[40];
  z.traffic_weight = 0.0;
  with_zero.push_back(z);
  const auto zr = evaluate_system(with_zero, sys, deps_of(w));
  auto metrics = [](const MetricSet& m) {
    return std::vector<double>{*m.coverage.value, *m.relevance.value, *m.unsafe_rate.value,
                               *m.catalog_ungrounded_rate.value, *m.context_ungrounded_rate.value,
                               *m.diversity.value};
  };
  const auto a = metrics(base.overall), b = metrics(s7.overall), c = metrics(zr.overall);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], 1e-12);
    EXPECT_NEAR(a[i], c[i], 1e-12);
    EXPECT_GE(a[i], 0.0);
    EXPECT_LE(a[i], 1.0);
  }
}

TEST(Evaluate, ErrorsAreCountedAndExcluded) {
  const testing::World w;
  const std::vector<Prefix> ps(w.fx.prefixes.begin(), w.fx.prefixes.begin() + 5);
  FnSystem sys([&](const Prefix& p) {
    if (p.text == ps[1].text) throw Error(ErrorCode::kBackendUnavailable, "down");
    SuggestionList l;
    l.queries.push_back(Query{"take me to the moon"});
    return l;
  });
  const auto r = evaluate_system(ps, sys, deps_of(w));
  EXPECT_EQ(r.errors, 1u);
  EXPECT_EQ(r.overall.coverage.count, 4u);
  EXPECT_DOUBLE_EQ(*r.overall.coverage.value, 1.0);
}

TEST(Evaluate, FrequencyAndEngineSystems) {
  const testing::World w;
  FrequencySystem freq("freq", w.index, 5);
  const auto l = freq.serve(make_prefix("apps take me to the moo"));
  EXPECT_LE(l.size(), 5u);
  for (const Query& q : l.queries) EXPECT_EQ(q.text.rfind("apps take me to the moo", 0), 0u);
}

MetricReport sample_report(const std::string& name, double scale) {
  MetricReport r;
  r.system = name;
  r.prefixes = 10;
  r.errors = 1;
  r.overall.coverage = {0.9 * scale, 9};
  r.overall.relevance = {0.5, 9};
  r.overall.unsafe_rate = {0.0, 9};
  r.overall.eng_win_rate = {std::nullopt, 0};
  r.overall.eng_win_signed = {std::nullopt, 0};
  r.overall.catalog_ungrounded_rate = {0.125, 9};
  r.overall.context_ungrounded_rate = {0.25, 9};
  r.overall.diversity = {0.61234, 9};
  r.strata["head"] = r.overall;
  return r;
}

TEST(Report, MarkdownColumnsAndRows) {
  const std::vector<MetricReport> reports{sample_report("hybrid", 1.0), sample_report("freq", 0.5)};
  std::ostringstream out;
  write_report_markdown(reports, out);
  const std::string md = out.str();
  const std::string header =
      "| System | Coverage | Relevance | UnsafeRate | EngWinRate | CatalogUngrdRate | CtxUngrdRate | Diversity |";
  EXPECT_EQ(md.find(header), 0u) << md;
  EXPECT_NE(md.find("| hybrid | 90.00 | 50.00 | 0.00 | n/a | 12.50 | 25.00 | 61.23 |"), std::string::npos) << md;
  EXPECT_NE(md.find("| freq | 45.00 |"), std::string::npos);
  // header appears once in the overall table
  const auto first_table = md.substr(0, md.find("\n\n"));
  EXPECT_EQ(std::count(first_table.begin(), first_table.end(), '\n'), 3);
}

TEST(Report, JsonRoundTrip) {
  const std::vector<MetricReport> reports{sample_report("hybrid", 1.0), sample_report("freq", 0.5)};
  std::ostringstream out;
  write_report_json(reports, out);
  std::istringstream in(out.str());
  const auto back = read_report_json(in);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].system, reports[i].system);
    EXPECT_EQ(back[i].prefixes, reports[i].prefixes);
    EXPECT_EQ(back[i].errors, reports[i].errors);
    EXPECT_EQ(back[i].overall.coverage.value, reports[i].overall.coverage.value);
    EXPECT_EQ(back[i].overall.diversity.count, 9u);
    EXPECT_FALSE(back[i].overall.eng_win_rate.value.has_value());
    EXPECT_EQ(back[i].strata.at("head").relevance.value, 0.5);
  }
  EXPECT_EQ(parse_report_format("markdown-table"), ReportFormat::kMarkdown);
  EXPECT_EQ(parse_report_format("json"), ReportFormat::kJson);
  EXPECT_THROW(parse_report_format("xml"), std::exception);
}

TEST(Files, EvalSetAndBaseline) {
  std::istringstream set("{\"prefix\":\"moo\",\"weight\":3,\"stratum\":\"head\"}\n{\"prefix\":\"sta\"}\n");
  const auto ps = read_eval_set(set);
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_EQ(ps[0].traffic_weight, 3.0);
  EXPECT_EQ(ps[0].stratum, "head");
  EXPECT_EQ(ps[1].traffic_weight, 1.0);
  std::istringstream bad("{\"prefix\":\"moo\",\"weight\":-1}\n");
  EXPECT_THROW(read_eval_set(bad), Error);

  std::istringstream b("{\"prefix\":\"  MOO \",\"engagement_score\":0.25}\n");
  const auto base = read_baseline(b);
  EXPECT_EQ(base.at("moo"), 0.25);

  MetricReport r;
  EvalRecord rec;
  rec.prefix = make_prefix("Sta");
  rec.scores.engagement = 0.5;
  r.records.push_back(rec);
  std::ostringstream out;
  write_baseline(r, out);
  std::istringstream again(out.str());
  EXPECT_EQ(read_baseline(again).at("sta"), 0.5);
}

}  // namespace
}  // namespace qac

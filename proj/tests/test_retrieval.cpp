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
#include <random>
#include <sstream>

#include "qac/error.hpp"
#include "qac/retrieval.hpp"
#include "qac/seed.hpp"
#include "qac/text.hpp"
#include "support/world.hpp"

namespace qac {
namespace {

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize_query("  Workout  Apps ").text, "workout apps");
  EXPECT_EQ(normalize_query("VR Moon").text, "vr moon");
  EXPECT_EQ(normalize_text("tab\there\nnl"), "tab here nl");
  // NFC: e + combining acute composes.
  EXPECT_EQ(normalize_text("Cafe\xCC\x81"), "caf\xC3\xA9");
  EXPECT_EQ(normalize_text("\xEF\xBB\xBFmoon"), "moon");
}

TEST(Normalize, EmptyThrows) {
  try {
    normalize_query("   ");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyAfterNormalization);
  }
  EXPECT_EQ(normalize_text("  \t "), "");
}

TEST(Normalize, Idempotent) {
  std::mt19937_64 rng(3);
  const std::string alphabet[] = {"a", "B", " ", "\t", "\xC3\x89", "e\xCC\x81", "1", "-", "\n", "Z"};
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    const std::size_t len = uniform_index(rng, 12);
    for (std::size_t i = 0; i < len; ++i) s += alphabet[uniform_index(rng, std::size(alphabet))];
    const std::string once = normalize_text(s);
    EXPECT_EQ(normalize_text(once), once) << s;
  }
}

TEST(Tokenize, AlnumRuns) {
  EXPECT_EQ(tokenize("Moon-VR  explorer!"), (std::vector<std::string>{"moon", "vr", "explorer"}));
  EXPECT_DOUBLE_EQ(token_overlap({"moo", "trip"}, {"moon", "planner"}), 0.5);
  EXPECT_DOUBLE_EQ(token_overlap({}, {"moon"}), 0.0);
}

std::vector<LogRecord> records(std::initializer_list<std::pair<const char*, double>> xs) {
  std::vector<LogRecord> out;
  std::size_t line = 0;
  for (const auto& [q, f] : xs) out.push_back({q, {f, 0.0, 0.0}, ++line});
  return out;
}

TEST(QueryIndex, MergesDuplicates) {
  std::vector<LogRecord> rs = records({{"Workout", 3}, {"workout", 2}});
  rs[0].stats.conversion_rate = 0.1;
  rs[1].stats.conversion_rate = 0.6;
  const QueryIndex index = build_query_index(rs);
  ASSERT_EQ(index.size(), 1u);
  const QueryStats* s = index.find("workout");
  ASSERT_NE(s, nullptr);
  EXPECT_DOUBLE_EQ(s->frequency, 5.0);
  EXPECT_NEAR(s->conversion_rate, (3 * 0.1 + 2 * 0.6) / 5.0, 1e-15);
}

TEST(QueryIndex, EmptyIndex) {
  const QueryIndex index = build_query_index({});
  EXPECT_TRUE(lookup_prefix(index, "wo", 10).empty());
}

TEST(QueryIndex, MalformedRecordCarriesLine) {
  std::istringstream in("{\"query\":\"a\",\"frequency\":1}\n\n{\"query\":\"b\"}\n");
  try {
    read_query_log(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedRecord);
    EXPECT_EQ(e.detail(), "3");
  }
  std::istringstream bad("not json\n");
  EXPECT_THROW(read_query_log(bad), Error);
}

TEST(LookupPrefix, Example) {
  const QueryIndex index = build_query_index(records({{"workout", 5}, {"word game", 3}, {"zen", 9}}));
  const auto hits = lookup_prefix(index, "wo", 10);
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].query.text, "workout");
  EXPECT_EQ(hits[1].query.text, "word game");
  EXPECT_TRUE(lookup_prefix(index, "zzz", 10).empty());
  EXPECT_THROW(lookup_prefix(index, "wo", 0), std::invalid_argument);
}

TEST(LookupPrefix, MatchesLinearScanOracle) {
  const testing::World w;
  std::mt19937_64 rng(11);
  // Oracle: normalize each record, merge, filter, sort.
  std::map<std::string, double> merged;
  for (const LogRecord& r : w.fx.logs) merged[normalize_text(r.raw_query)] += r.stats.frequency;
  std::vector<std::string> probes;
  for (const auto& [q, f] : merged) {
    probes.push_back(q.substr(0, 1 + uniform_index(rng, q.size())));
  }
  probes.push_back("zzz");
  probes.push_back("");
  for (const std::string& p : probes) {
    const std::size_t limit = 1 + uniform_index(rng, 20);
    std::vector<std::pair<std::string, double>> expect;
    for (const auto& [q, f] : merged) {
      if (q.starts_with(normalize_text(p))) expect.emplace_back(q, f);
    }
    std::stable_sort(expect.begin(), expect.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (expect.size() > limit) expect.resize(limit);
    const auto got = lookup_prefix(w.index, p, limit);
    ASSERT_EQ(got.size(), expect.size()) << p;
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].query.text, expect[i].first);
      EXPECT_DOUBLE_EQ(got[i].stats.frequency, expect[i].second);
    }
  }
}

TEST(LookupPrefix, ThousandRecordOracle) {
  std::mt19937_64 rng(21);
  const char* words[] = {"moon", "Moon", "work", "workout", "word", "game", "zen", "star", "map", "maps"};
  std::vector<LogRecord> rs;
  for (std::size_t i = 0; i < 1000; ++i) {
    std::string q = words[uniform_index(rng, std::size(words))];
    const std::size_t extra = uniform_index(rng, 3);
    for (std::size_t j = 0; j < extra; ++j) {
      q += uniform_index(rng, 2) ? "  " : " ";
      q += words[uniform_index(rng, std::size(words))];
    }
    rs.push_back({q, {static_cast<double>(1 + uniform_index(rng, 50)), 0.0, 0.0}, i + 1});
  }
  const QueryIndex index = build_query_index(rs);
  for (const char* p : {"m", "mo", "moon ", "moon m", "w", "wor", "work", "z", "s", "x", "Ma"}) {
    std::map<std::string, double> merged;
    for (const LogRecord& r : rs) {
      std::string norm;
      for (char c : r.raw_query) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (c == ' ' && (norm.empty() || norm.back() == ' ')) continue;
        norm += c;
      }
      if (norm.starts_with(normalize_text(p))) merged[norm] += r.stats.frequency;
    }
    std::vector<std::pair<std::string, double>> expect(merged.begin(), merged.end());
    std::stable_sort(expect.begin(), expect.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    const auto got = lookup_prefix(index, p, kUnlimited);
    ASSERT_EQ(got.size(), expect.size()) << p;
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].query.text, expect[i].first);
      EXPECT_DOUBLE_EQ(got[i].stats.frequency, expect[i].second);
    }
  }
}

TEST(LookupPrefix, PrefixCompleteness) {
  const testing::World w;
  for (const auto& [q, stats] : w.index.entries()) {
    for (std::size_t len = 1; len <= q.size(); ++len) {
      const auto hits = lookup_prefix(w.index, q.substr(0, len), kUnlimited);
      EXPECT_TRUE(std::any_of(hits.begin(), hits.end(),
                              [&](const QueryHit& h) { return h.query.text == q; }))
          << q << " / " << len;
    }
  }
}

TEST(QueryIndex, WriteReadRoundTrip) {
  const testing::World w;
  std::ostringstream out;
  write_query_index(w.index, out);
  std::istringstream in(out.str());
  const QueryIndex again = build_query_index(read_query_log(in));
  EXPECT_EQ(again.entries(), w.index.entries());
}

std::vector<CatalogItem> two_items() {
  return {{"1", "Moon VR Explorer", "Games", "explore the moon", 4.0, 10},
          {"2", "Budget Planner", "Finance", "plan money", 4.0, 50}};
}

TEST(RetrieveItems, LexicalDominance) {
  const Catalog catalog(two_items());
  const auto got = retrieve_items(catalog, "moon", 10);
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].item->title, "Moon VR Explorer");
  EXPECT_GT(got[0].score, 0.0);
}

TEST(RetrieveItems, NoOverlapOrdersByPopularity) {
  const Catalog catalog(two_items());
  const auto got = retrieve_items(catalog, "zzz", 10);
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].item->item_id, "2");
  EXPECT_EQ(got[0].score, 0.0);
  EXPECT_EQ(got[1].score, 0.0);
}

TEST(RetrieveItems, MatchesExhaustiveOracle) {
  testing::World w(FixtureSpec{.seed = 5, .items = 200});
  RetrieverConfig cfg;
  cfg.embedding = [](std::string_view p, const CatalogItem& item) {
    return static_cast<double>(hash_text(std::string(p) + item.item_id) % 1000) / 1000.0;
  };
  for (const char* prefix : {"moo", "star ra", "budget", "q", "zzz", "free puzzle g"}) {
    const auto ptoks = tokenize(prefix);
    struct Row {
      const CatalogItem* item;
      double score;
    };
    std::vector<Row> rows;
    for (const CatalogItem& item : w.catalog.items()) {
      const auto doc = tokenize(item.title + " " + item.description);
      double matched = 0;
      for (const auto& t : ptoks) {
        if (std::any_of(doc.begin(), doc.end(), [&](const std::string& d) { return d.starts_with(t); })) {
          ++matched;
        }
      }
      const double lex = ptoks.empty() ? 0.0 : matched / static_cast<double>(ptoks.size());
      rows.push_back({&item, 0.7 * lex + 0.3 * cfg.embedding(normalize_text(prefix), item)});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.item->popularity != b.item->popularity) return a.item->popularity > b.item->popularity;
      return a.item->item_id < b.item->item_id;
    });
    const auto got = retrieve_items(w.catalog, prefix, 25, cfg);
    ASSERT_EQ(got.size(), 25u);
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].item->item_id, rows[i].item->item_id) << prefix << " #" << i;
      EXPECT_NEAR(got[i].score, rows[i].score, 1e-12);
    }
  }
}

TEST(RetrieveItems, PositiveLexicalFirstWithoutEmbedding) {
  const testing::World w;
  for (const Prefix& p : w.fx.prefixes) {
    const auto got = retrieve_items(w.catalog, p.text, kUnlimited);
    bool seen_zero = false;
    for (const ScoredItem& s : got) {
      if (s.lexical_score == 0.0) seen_zero = true;
      if (seen_zero) EXPECT_EQ(s.lexical_score, 0.0) << p.text;
    }
  }
}

TEST(Catalog, RejectsDuplicatesAndEmptyTitles) {
  auto items = two_items();
  items[1].item_id = "1";
  EXPECT_THROW(Catalog{items}, Error);
  items = two_items();
  items[0].title = " ";
  EXPECT_THROW(Catalog{items}, Error);
}

}  // namespace
}  // namespace qac

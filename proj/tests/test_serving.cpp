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

#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "qac/error.hpp"
#include "qac/serving.hpp"
#include "support/world.hpp"

using namespace std::chrono_literals;

namespace qac {
namespace {

struct Env {
  testing::World w;
  std::shared_ptr<testing::ScriptedGenerator> compact_gen;
  Clock& clock;
  BoundedGenerator compact;
  ServingEngine engine;

  explicit Env(testing::ScriptedGenerator::Fn fn = nullptr, Clock& c = SteadyClock::instance())
      : compact_gen(std::make_shared<testing::ScriptedGenerator>(
            fn ? std::move(fn) : [](const GenerationRequest& r) {
              return TemplateMockGenerator().generate(r);
            })),
        clock(c),
        compact(compact_gen, GeneratorProfile{"compact", GeneratorRole::kCompact, {}, 150ms, 2}, c),
        engine(ServingDeps{w.index, w.catalog, w.context,
                           std::string(default_generation_template()), w.backend, w.classifier},
               compact, c) {}
};

PregenerateResult build(const testing::World& w, BoundedGenerator& large,
                        std::span<const Prefix> prefixes) {
  const PregenerateInputs in{w.index, w.catalog, w.context, default_generation_template(),
                             w.suite, RewardWeights{}, 0.3, 1700000000};
  return pregenerate_cache(prefixes, large, in);
}

CacheEntry entry(std::vector<std::string> qs) {
  CacheEntry e;
  for (auto& q : qs) {
    e.queries.push_back(Query{q});
    e.grounded.push_back(true);
  }
  e.profile = "large";
  return e;
}

TEST(ServingGate, Examples) {
  SuggestionList l;
  for (const char* q : {"a", "b", "c"}) l.queries.push_back(Query{q});
  std::vector<QueryFlags> clean(3, QueryFlags{false, true, true});
  auto g = serving_gate(l, clean);
  EXPECT_EQ(g.list.queries, l.queries);
  EXPECT_EQ(g.filtered, 0u);
  auto one = clean;
  one[1].unsafe = true;
  g = serving_gate(l, one);
  EXPECT_EQ(g.list.queries, (std::vector<Query>{{"a"}, {"c"}}));
  EXPECT_EQ(g.filtered, 1u);
  auto ungrounded = clean;
  ungrounded[0].catalog_grounded = false;
  EXPECT_EQ(serving_gate(l, ungrounded).list.queries, (std::vector<Query>{{"b"}, {"c"}}));
  std::vector<QueryFlags> all(3, QueryFlags{true, true, true});
  g = serving_gate(l, all);
  EXPECT_TRUE(g.list.empty());
  EXPECT_EQ(g.filtered, 3u);
}

TEST(Pregenerate, FixtureBuildsAllEntriesAndRoundTrips) {
  const testing::World w;
  BoundedGenerator large(std::make_shared<TemplateMockGenerator>(),
                         GeneratorProfile{"large", GeneratorRole::kLarge, {0.8, 1.0, 42}, {}, 1});
  const auto r = build(w, large, w.fx.prefixes);
  EXPECT_EQ(w.fx.prefixes.size(), 100u);
  EXPECT_EQ(r.snapshot.size(), 100u) << (r.skipped.empty() ? "" : r.skipped[0].reason);
  for (const auto& [key, e] : r.snapshot.entries()) {
    EXPECT_EQ(e.queries.size(), e.grounded.size());
    EXPECT_TRUE(parse_answer_block(render_answer_block(e.queries)).ok());
    EXPECT_GE(e.reward, 0.3);
    EXPECT_EQ(e.timestamp, 1700000000);
    for (const Query& q : e.queries) EXPECT_FALSE(w.classifier.is_unsafe(q));
  }
  std::ostringstream a;
  write_snapshot(r.snapshot, a);
  std::istringstream in(a.str());
  const CacheSnapshot back = read_snapshot(in);
  EXPECT_EQ(back.entries(), r.snapshot.entries());
  std::ostringstream b;
  write_snapshot(back, b);
  EXPECT_EQ(a.str(), b.str());

  // file path too
  const auto path = std::filesystem::temp_directory_path() / "qac_test_snapshot.jsonl";
  save_snapshot(r.snapshot, path);
  std::ifstream f(path, std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(f), {}), a.str());
  std::filesystem::remove(path);
}

TEST(Pregenerate, MisformattedPrefixIsSkipped) {
  const testing::World w;
  const std::string broken = w.fx.prefixes[3].text;
  auto gen = std::make_shared<testing::ScriptedGenerator>([&](const GenerationRequest& r) {
    if (r.context->prefix.text == broken) return std::string("moon\n<answer>\nx\n");
    return TemplateMockGenerator().generate(r);
  });
  BoundedGenerator large(gen, GeneratorProfile{"large", GeneratorRole::kLarge, {}, {}, 1});
  const std::vector<Prefix> some(w.fx.prefixes.begin(), w.fx.prefixes.begin() + 10);
  const auto r = build(w, large, some);
  EXPECT_EQ(r.snapshot.size(), 9u);
  EXPECT_EQ(r.snapshot.find(broken), nullptr);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].prefix, broken);
}

TEST(Snapshot, CorruptFilesAreRejected) {
  const std::string good =
      "{\"entry_count\":1,\"format_version\":1}\n"
      "{\"grounded\":[true],\"prefix\":\"moo\",\"profile\":\"large\",\"reward\":0.5,"
      "\"suggestions\":[\"moon\"],\"timestamp\":0}\n";
  std::istringstream ok(good);
  EXPECT_EQ(read_snapshot(ok).size(), 1u);
  const std::string bad[] = {
      "",
      "{\"entry_count\":2,\"format_version\":1}\n" + good.substr(good.find('\n') + 1),
      "{\"entry_count\":1,\"format_version\":9}\n" + good.substr(good.find('\n') + 1),
      "{\"entry_count\":1,\"format_version\":1}\n{broken",
      "{\"entry_count\":1,\"format_version\":1}\n{\"grounded\":[],\"prefix\":\"moo\",\"profile\":\"l\","
      "\"reward\":0.5,\"suggestions\":[\"moon\"],\"timestamp\":0}\n",
  };
  for (const std::string& s : bad) {
    std::istringstream in(s);
    try {
      read_snapshot(in);
      ADD_FAILURE() << "accepted: " << s;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kCorruptSnapshot);
    }
  }
}

TEST(Engine, ReloadKeepsOldOnCorruptAndVersionsIncrease) {
  Env env;
  CacheSnapshot::Map m;
  m["moo"] = entry({"moon runner"});
  const auto path = std::filesystem::temp_directory_path() / "qac_test_reload.jsonl";
  save_snapshot(CacheSnapshot(m), path);
  EXPECT_EQ(env.engine.load_snapshot(path), 1u);
  EXPECT_EQ(env.engine.load_snapshot(path), 2u);  // identical file still bumps
  std::ofstream(path) << "{\"format_version\":1,\"entry_count\":3}\n{}\n";
  EXPECT_THROW(env.engine.load_snapshot(path), Error);
  EXPECT_EQ(env.engine.snapshot()->version(), 2u);
  EXPECT_EQ(env.engine.snapshot()->size(), 1u);
  EXPECT_THROW(env.engine.load_snapshot(path.string() + ".missing"), Error);
  EXPECT_EQ(env.engine.snapshot()->version(), 2u);
  EXPECT_EQ(env.engine.swap_snapshot(CacheSnapshot(m)), 3u);
  std::filesystem::remove(path);
}

TEST(Engine, CacheHitIsPure) {
  Env env;
  CacheSnapshot::Map m;
  m["apps take me to the moo"] = entry({"take me to the moon", "moon cheats", "moon maps"});
  env.engine.swap_snapshot(CacheSnapshot(m));
  const ServeResult r = env.engine.complete("  Apps Take Me To The Moo ");
  EXPECT_TRUE(r.cache_hit);
  EXPECT_FALSE(r.degraded);
  EXPECT_EQ(r.suggestions.queries, (std::vector<Query>{{"take me to the moon"}, {"moon maps"}}));
  EXPECT_EQ(r.filtered_count, 1u);  // unsafe entry re-checked at serve time
  EXPECT_EQ(r.cached_rank[1], 3u);
  EXPECT_EQ(r.snapshot_version, 1u);
  EXPECT_GE(r.latency_us, 0);
  const ServingCounters c = env.engine.counters();
  EXPECT_EQ(c.cache_hits, 1u);
  EXPECT_EQ(c.retrievals, 0u);
  EXPECT_EQ(c.renders, 0u);
  EXPECT_EQ(c.generations, 0u);
  EXPECT_EQ(env.compact_gen->calls.load(), 0);
  EXPECT_EQ(env.engine.complete("apps take me to the moo", std::nullopt, 1).suggestions.size(), 1u);
}

TEST(Engine, MissUsesCompactGeneratorAndGate) {
  Env env;
  for (const Prefix& p : env.w.fx.prefixes) {
    const ServeResult r = env.engine.complete(p.text);
    EXPECT_FALSE(r.cache_hit);
    for (std::size_t i = 0; i < r.suggestions.size(); ++i) {
      EXPECT_FALSE(env.w.classifier.is_unsafe(r.suggestions.queries[i]));
      EXPECT_FALSE(r.cached_rank[i].has_value());
      if (!r.degraded) EXPECT_TRUE(r.grounded[i]);
    }
  }
  EXPECT_EQ(env.compact_gen->calls.load(), static_cast<int>(env.w.fx.prefixes.size()));
  EXPECT_EQ(env.engine.counters().generations, env.w.fx.prefixes.size());
}

TEST(Engine, GateSoundnessWithUnsafeGenerator) {
  Env env([](const GenerationRequest& r) {
    return "<answer>\n" + r.context->prefix.text + " cheats\nfree casino bonus\n" +
           (r.context->candidates.empty() ? std::string("moon") : r.context->candidates[0].query.text) +
           "\n</answer>";
  });
  for (const Prefix& p : env.w.fx.prefixes) {
    const ServeResult r = env.engine.complete(p.text);
    for (const Query& q : r.suggestions.queries) EXPECT_FALSE(env.w.classifier.is_unsafe(q)) << q.text;
    EXPECT_GE(r.filtered_count, 1u);
  }
}

TEST(Engine, DeadlineBreachDegradesOnFakeClock) {
  FakeClock clock;
  Env env(
      [&clock](const GenerationRequest&) {
        clock.sleep_for(1s);
        return std::string("<answer>\nlate\n</answer>");
      },
      clock);
  const std::string prefix = "apps take me to the moo";
  auto fut = std::async(std::launch::async, [&] { return env.engine.complete(prefix); });
  while (clock.sleepers() == 0) std::this_thread::sleep_for(1ms);
  clock.advance(151ms);
  const ServeResult r = fut.get();
  clock.advance(1s);
  EXPECT_TRUE(r.degraded);
  EXPECT_FALSE(r.cache_hit);
  EXPECT_LE(r.latency_us, 151000 + 1000);
  // candidates-only answer from the query index, gated
  const auto ctx = env.w.context_for(make_prefix(prefix));
  ASSERT_FALSE(r.suggestions.empty());
  for (const Query& q : r.suggestions.queries) {
    EXPECT_TRUE(std::any_of(ctx->candidates.begin(), ctx->candidates.end(),
                            [&](const CandidateEntry& c) { return c.query == q; }));
    EXPECT_FALSE(env.w.classifier.is_unsafe(q));
  }
  EXPECT_EQ(env.engine.counters().degraded, 1u);
}

TEST(Engine, EveryPathHonorsDeadlineOnFakeClock) {
  FakeClock clock;
  Env env(nullptr, clock);
  CacheSnapshot::Map m;
  m["moo"] = entry({"moon runner"});
  env.engine.swap_snapshot(CacheSnapshot(m));
  for (const char* p : {"moo", "apps take me to the moo", "zzzz"}) {
    const ServeResult r = env.engine.complete(p);
    EXPECT_LE(r.latency_us, 150000);
  }
  Env failing([](const GenerationRequest&) -> std::string { throw Error(ErrorCode::kGeneratorUnavailable, "x"); }, clock);
  const ServeResult r = failing.engine.complete("apps take me to the moo");
  EXPECT_TRUE(r.degraded);
  EXPECT_LE(r.latency_us, 150000);
  Env garbage([](const GenerationRequest&) { return std::string("no tags"); }, clock);
  EXPECT_TRUE(garbage.engine.complete("apps take me to the moo").degraded);
}

TEST(Engine, SwapIsAtomicUnderConcurrentReaders) {
  Env env;
  const std::vector<std::string> keys{"moo", "sta", "rad", "pla"};
  auto make = [&](int tag) {
    CacheSnapshot::Map m;
    for (const auto& k : keys) m[k] = entry({k + " v" + std::to_string(tag), k + " w" + std::to_string(tag)});
    return CacheSnapshot(m);
  };
  std::map<std::uint64_t, int> version_tag;
  version_tag[env.engine.swap_snapshot(make(0))] = 0;
  std::atomic<bool> stop{false};
  std::vector<std::future<std::vector<ServeResult>>> readers;
  for (int t = 0; t < 16; ++t) {
    readers.push_back(std::async(std::launch::async, [&, t] {
      std::vector<ServeResult> seen;
      std::size_t i = static_cast<std::size_t>(t);
      while (!stop.load()) seen.push_back(env.engine.complete(keys[i++ % keys.size()]));
      return seen;
    }));
  }
  std::vector<std::pair<std::uint64_t, int>> swaps;
  for (int tag = 1; tag <= 100; ++tag) {
    swaps.emplace_back(env.engine.swap_snapshot(make(tag)), tag);
    std::this_thread::yield();
  }
  stop = true;
  for (const auto& [v, tag] : swaps) version_tag[v] = tag;
  std::size_t total = 0;
  for (auto& f : readers) {
    for (const ServeResult& r : f.get()) {
      ++total;
      ASSERT_TRUE(r.cache_hit);
      ASSERT_EQ(r.suggestions.size(), 2u);
      const std::string tag = std::to_string(version_tag.at(r.snapshot_version));
      // both queries carry the tag of the version that served them
      const auto& a = r.suggestions.queries[0].text;
      const auto& b = r.suggestions.queries[1].text;
      ASSERT_EQ(a.substr(a.find(' ') + 2), b.substr(b.find(' ') + 2));
      ASSERT_EQ(a.substr(a.find(' ') + 2), tag);
    }
  }
  EXPECT_GT(total, 0u);
  EXPECT_EQ(env.engine.snapshot()->version(), 101u);
}

}  // namespace
}  // namespace qac

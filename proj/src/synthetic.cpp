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

#include "qac/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "jsonl.hpp"
#include "qac/seed.hpp"
#include "qac/text.hpp"

namespace qac {

using internal::json;

namespace {

struct CategoryWords {
  const char* category;
  const char* plural;  // used in generic queries ("puzzle games")
  std::vector<const char*> nouns;
  std::vector<const char*> blurbs;
};

const std::vector<CategoryWords>& categories() {
  static const std::vector<CategoryWords> kCategories = {
      {"Games", "games", {"runner", "quest", "puzzle", "racer", "kingdom", "blocks"},
       {"arcade levels with daily challenges", "casual puzzle play for short breaks",
        "racing and jumping across endless tracks"}},
      {"Music", "music", {"beats", "radio", "tunes", "piano"},
       {"stream songs and playlists offline", "learn chords and play along"}},
      {"Travel", "travel", {"maps", "trips", "transit", "guide"},
       {"offline maps and route planning", "book trips and track flights"}},
      {"Finance", "finance", {"wallet", "budget", "ledger"},
       {"track spending and savings goals", "split bills with friends"}},
      {"Photo", "photo", {"camera", "editor", "filters"},
       {"edit photos with filters and collage", "retouch portraits quickly"}},
      {"Fitness", "fitness", {"workout", "steps", "yoga"},
       {"home workout plans and timers", "count steps and sleep"}},
      {"Education", "learning", {"math", "words", "lessons"},
       {"practice math with short lessons", "learn new words every day"}},
      {"Weather", "weather", {"forecast", "radar"},
       {"hourly forecast and rain radar", "storm alerts for your area"}},
      {"Food", "recipes", {"recipes", "kitchen", "delivery"},
       {"easy recipes and meal plans", "order food from nearby places"}},
  };
  return kCategories;
}

const std::vector<const char*> kAdjectives = {
    "moon", "star", "pixel", "river", "cloud", "swift", "happy", "lucky",
    "tiny", "golden", "rapid", "quiet", "bright", "wild", "ocean", "sunny"};

const std::vector<std::string> kBlocklist = {"hack", "cracked", "cheats", "casino bonus",
                                             "nsfw"};

std::string title_case(std::string_view s) {
  std::string out(s);
  bool start = true;
  for (char& c : out) {
    if (start && c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    start = c == ' ';
  }
  return out;
}

}  // namespace

Fixture make_fixture(const FixtureSpec& spec) {
  Fixture fx;
  fx.spec = spec;
  fx.blocklist = kBlocklist;
  std::mt19937_64 rng(derive_seed(spec.seed, 1));
  const auto& cats = categories();

  // Catalog. The first item comes from the moon-trip scenario so demos have
  // a recognizable long prefix.
  std::set<std::string> titles;
  fx.catalog.push_back({"app-0000", "Take Me To The Moon", "Travel",
                        "space travel guide and moon trip planner", 4.6, 900.0});
  titles.insert("take me to the moon");
  std::size_t guard = 0;
  while (fx.catalog.size() < std::max<std::size_t>(spec.items, 1) && guard++ < 100000) {
    const CategoryWords& cat = cats[uniform_index(rng, cats.size())];
    const std::string adj = kAdjectives[uniform_index(rng, kAdjectives.size())];
    const std::string noun = cat.nouns[uniform_index(rng, cat.nouns.size())];
    const std::string title = adj + " " + noun;
    if (!titles.insert(title).second) continue;
    char id[32];
    std::snprintf(id, sizeof id, "app-%04zu", fx.catalog.size());
    CatalogItem item;
    item.item_id = id;
    item.title = title_case(title);
    item.category = cat.category;
    item.description = std::string(cat.blurbs[uniform_index(rng, cat.blurbs.size())]) + " " +
                       noun + " app";
    item.rating = std::round((3.0 + 2.0 * unit_uniform(rng)) * 10.0) / 10.0;
    item.popularity = std::round(1000.0 * unit_uniform(rng));
    fx.catalog.push_back(std::move(item));
  }

  // Query vocabulary, in a fixed construction order.
  std::vector<std::string> queries;
  std::set<std::string> seen;
  const auto add = [&](std::string q) {
    if (seen.insert(q).second) queries.push_back(std::move(q));
  };
  add("apps take me to the moon");
  add("moon trip planner");
  for (const CatalogItem& item : fx.catalog) {
    const std::string t = normalize_text(item.title);
    add(t);
    const std::string noun = t.substr(t.find(' ') + 1);
    add(noun + " app");
    add("free " + noun);
  }
  for (const CategoryWords& cat : cats) {
    add(std::string("best ") + cat.plural + " apps");
    add(std::string(cat.plural) + " app");
    for (const char* noun : cat.nouns) add(std::string(noun) + " " + cat.plural);
  }
  // A slice of unsafe traffic built from the blocklist.
  std::vector<std::string> unsafe;
  for (std::size_t i = 0; i < fx.catalog.size(); i += 6) {
    const std::string t = normalize_text(fx.catalog[i].title);
    const std::string& term = kBlocklist[(i / 6) % kBlocklist.size()];
    std::string q = (i / 6) % 2 == 0 ? t + " " + term : term + " " + t;
    if (seen.insert(q).second) {
      queries.push_back(q);
      unsafe.push_back(q);
    }
  }
  fx.unsafe_queries = unsafe;

  // Zipf frequencies over a seeded permutation of the vocabulary.
  std::vector<std::size_t> order(queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(rng, i)]);
  }
  std::vector<double> freq(queries.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    freq[order[rank]] = std::round(20000.0 / std::pow(static_cast<double>(rank + 1), spec.zipf_s));
  }
  for (std::size_t i = 0; i < queries.size(); ++i) {
    LogRecord r;
    r.raw_query = queries[i];
    r.stats.frequency = std::max(1.0, freq[i]);
    r.stats.conversion_rate = std::round(unit_uniform(rng) * 3000.0) / 10000.0;
    r.stats.click_through_rate = std::round((0.05 + unit_uniform(rng) * 0.45) * 10000.0) / 10000.0;
    r.line = i + 1;
    fx.logs.push_back(std::move(r));
  }

  // Candidate prefixes: every proper, non-space-terminated prefix of two or
  // more characters, weighted by the traffic of the queries it leads to.
  std::map<std::string, double> weights;
  for (const LogRecord& r : fx.logs) {
    const std::string& q = r.raw_query;
    for (std::size_t len = 2; len < q.size(); ++len) {
      if (q[len - 1] == ' ') continue;
      weights[q.substr(0, len)] += r.stats.frequency;
    }
  }
  std::vector<std::pair<std::string, double>> ranked(weights.begin(), weights.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  // Bands over the ranked list: head is the top 5%, torso the next 25%.
  const std::size_t n = ranked.size();
  const std::size_t head_end = std::max<std::size_t>(1, n / 20);
  const std::size_t torso_end = std::max(head_end + 1, n * 3 / 10);
  const std::size_t want = std::min(spec.prefixes, n);
  const std::size_t want_head = std::min(head_end, static_cast<std::size_t>(
                                                       std::llround(want * spec.head_share)));
  const std::size_t want_torso =
      std::min(torso_end - head_end,
               static_cast<std::size_t>(std::llround(want * spec.torso_share)));
  const auto take = [&](std::size_t lo, std::size_t hi, std::size_t count, const char* stratum) {
    std::vector<std::size_t> idx;
    for (std::size_t i = lo; i < hi && i < n; ++i) idx.push_back(i);
    if (lo > 0) {
      for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    }
    idx.resize(std::min(count, idx.size()));
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) fx.prefixes.push_back({ranked[i].first, ranked[i].second, stratum});
  };
  take(0, head_end, want_head, "head");
  take(head_end, torso_end, want_torso, "torso");
  take(torso_end, n, want - fx.prefixes.size(), "tail");
  // The scenario prefix is always part of the set.
  const std::string scenario = "apps take me to the moo";
  if (std::none_of(fx.prefixes.begin(), fx.prefixes.end(),
                   [&](const Prefix& p) { return p.text == scenario; }) &&
      !fx.prefixes.empty()) {
    fx.prefixes.back() = {scenario, weights[scenario], "tail"};
  }
  return fx;
}

void write_fixture(const Fixture& fx, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = internal::open_output(dir / "catalog.jsonl");
    for (const CatalogItem& item : fx.catalog) {
      json j{{"item_id", item.item_id},   {"title", item.title},
             {"category", item.category}, {"description", item.description},
             {"rating", item.rating},     {"popularity", item.popularity}};
      out << internal::dump_line(j) << '\n';
    }
    internal::check_written(out, dir / "catalog.jsonl");
  }
  {
    auto out = internal::open_output(dir / "logs.jsonl");
    for (const LogRecord& r : fx.logs) {
      json j{{"query", r.raw_query},
             {"frequency", r.stats.frequency},
             {"conversion_rate", r.stats.conversion_rate},
             {"click_through_rate", r.stats.click_through_rate}};
      out << internal::dump_line(j) << '\n';
    }
    internal::check_written(out, dir / "logs.jsonl");
  }
  std::map<std::string, std::size_t> strata;
  {
    auto out = internal::open_output(dir / "prefixes.jsonl");
    for (const Prefix& p : fx.prefixes) {
      ++strata[p.stratum];
      json j{{"prefix", p.text}, {"weight", p.traffic_weight}, {"stratum", p.stratum}};
      out << internal::dump_line(j) << '\n';
    }
    internal::check_written(out, dir / "prefixes.jsonl");
  }
  {
    auto out = internal::open_output(dir / "blocklist.txt");
    out << "# synthetic blocklist\n";
    for (const std::string& term : fx.blocklist) out << term << '\n';
    internal::check_written(out, dir / "blocklist.txt");
  }
  {
    auto out = internal::open_output(dir / "manifest.json");
    json j{{"seed", fx.spec.seed},
           {"items", fx.catalog.size()},
           {"queries", fx.logs.size()},
           {"unsafe_queries", fx.unsafe_queries.size()},
           {"frequency_distribution", {{"kind", "zipf"}, {"s", fx.spec.zipf_s}}},
           {"strata", strata},
           {"bands", {{"head", "top 5% of prefixes by traffic"},
                      {"torso", "next 25%"},
                      {"tail", "remaining 70%"}}}};
    out << j.dump(2) << '\n';
    internal::check_written(out, dir / "manifest.json");
  }
  {
    auto out = internal::open_output(dir / "config.toml");
    out << "seed = " << fx.spec.seed << "\n\n"
        << "[paths]\n"
           "logs = \"logs.jsonl\"\n"
           "catalog = \"catalog.jsonl\"\n"
           "blocklist = \"blocklist.txt\"\n"
           "prefixes = \"prefixes.jsonl\"\n"
           "index = \"out/index.jsonl\"\n"
           "snapshot = \"out/snapshot.jsonl\"\n\n"
           "[generator.large]\n"
           "kind = \"template-mock\"\n"
           "role = \"large\"\n"
           "temperature = 0.8\n\n"
           "[generator.compact]\n"
           "kind = \"template-mock\"\n"
           "role = \"compact\"\n"
           "temperature = 0.0\n"
           "budget_ms = 150\n";
    internal::check_written(out, dir / "config.toml");
  }
}

}  // namespace qac

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

#ifndef QAC_SYNTHETIC_HPP_
#define QAC_SYNTHETIC_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qac/context.hpp"
#include "qac/retrieval.hpp"

namespace qac {

// Knobs for the synthetic app-store world used by tests and demos.
struct FixtureSpec {
  std::uint64_t seed = 7;
  std::size_t items = 60;
  std::size_t prefixes = 100;
  // Zipf exponent for query frequencies.
  double zipf_s = 1.1;
  // Share of prefixes taken from the head and torso bands (rest is tail).
  double head_share = 0.2;
  double torso_share = 0.3;
};

struct Fixture {
  FixtureSpec spec;
  std::vector<CatalogItem> catalog;
  std::vector<LogRecord> logs;
  std::vector<Prefix> prefixes;
  std::vector<std::string> blocklist;
  // Logged queries that the blocklist flags.
  std::vector<std::string> unsafe_queries;
};

// Deterministic in spec.seed.
Fixture make_fixture(const FixtureSpec& spec = {});

// Writes catalog.jsonl, logs.jsonl, prefixes.jsonl, blocklist.txt,
// manifest.json and config.toml into `dir`.
void write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

}  // namespace qac

#endif  // QAC_SYNTHETIC_HPP_

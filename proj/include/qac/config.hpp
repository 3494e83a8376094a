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

#ifndef QAC_CONFIG_HPP_
#define QAC_CONFIG_HPP_

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "qac/context.hpp"
#include "qac/generator.hpp"
#include "qac/reward.hpp"
#include "qac/serving.hpp"
#include "qac/verifiers.hpp"

namespace qac {

struct GeneratorConfig {
  std::string name;
  // "template-mock" or "external".
  std::string kind = "template-mock";
  std::vector<std::string> command;
  std::chrono::milliseconds io_timeout{5000};
  GeneratorProfile profile;
  bool explicit_seed = false;
};

struct PathsConfig {
  std::filesystem::path logs;
  std::filesystem::path catalog;
  std::filesystem::path template_file;
  std::filesystem::path blocklist;
  std::filesystem::path prefixes;
  std::filesystem::path index;
  std::filesystem::path snapshot;
};

struct AlignConfig {
  double beta = 0.1;
  double step_size = 0.5;
  std::size_t steps = 50;
  std::uint64_t seed = 0;
  std::size_t window = 8;
  double init_scale = 0.0;
};

struct RefineConfig {
  std::size_t max_rounds = 3;
  // "rule" or a generator name.
  std::string critic = "rule";
  std::string reviser = "rule";
  std::string generator = "large";
};

struct EngineConfig {
  std::uint64_t seed = 0;
  PathsConfig paths;
  ContextConfig context;
  VerifierParams verifiers;
  RewardWeights weights;
  MiningParams mining;
  double reward_floor = 0.3;
  std::size_t samples = 8;
  AlignConfig align;
  ServingConfig serving;
  std::string large = "large";
  std::string compact = "compact";
  std::string host = "127.0.0.1";
  int port = 8080;
  RefineConfig refine;
  std::map<std::string, GeneratorConfig> generators;
};

// Built-in settings: mock "large" and "compact" generators, no paths.
EngineConfig default_config();

// Parses the sectioned key = value format. Relative paths resolve against
// `base_dir`. Unknown sections or keys, bad values and missing input files
// throw Error(kConfigError).
EngineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir);
EngineConfig load_config(const std::filesystem::path& path);

// Gives every generator (and the toy trainer) a sub-seed derived from
// `seed`, replacing explicit per-profile seeds.
void apply_global_seed(EngineConfig& config, std::uint64_t seed);

std::shared_ptr<Generator> make_generator(const GeneratorConfig& config);
// One BoundedGenerator per configured profile.
GeneratorRegistry make_registry(const EngineConfig& config, Clock& clock = SteadyClock::instance());

}  // namespace qac

#endif  // QAC_CONFIG_HPP_

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

// In-memory synthetic world shared by the unit and acceptance tests.
#ifndef QAC_TESTS_SUPPORT_WORLD_HPP_
#define QAC_TESTS_SUPPORT_WORLD_HPP_

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "qac/context.hpp"
#include "qac/generator.hpp"
#include "qac/retrieval.hpp"
#include "qac/synthetic.hpp"
#include "qac/verifiers.hpp"

namespace qac::testing {

struct World {
  Fixture fx;
  QueryIndex index;
  Catalog catalog;
  LexiconClassifier classifier;
  CatalogBackend backend;
  IndexStatsSource stats;
  VerifierSuite suite;
  ContextConfig context;

  explicit World(FixtureSpec spec = {})
      : fx(make_fixture(spec)),
        index(build_query_index(fx.logs)),
        catalog(fx.catalog),
        classifier(fx.blocklist, &catalog),
        backend(catalog),
        stats(index),
        suite(backend, stats, classifier) {}

  std::shared_ptr<const RetrievedContext> context_for(const Prefix& p) const {
    return std::make_shared<const RetrievedContext>(build_context(p, index, catalog, context));
  }
};

// Records what it is asked; returns canned text or delegates to a function.
class ScriptedGenerator final : public Generator {
 public:
  using Fn = std::function<std::string(const GenerationRequest&)>;
  explicit ScriptedGenerator(Fn fn) : fn_(std::move(fn)) {}
  std::string generate(const GenerationRequest& request) override {
    ++calls;
    return fn_(request);
  }
  std::atomic<int> calls{0};

 private:
  Fn fn_;
};

}  // namespace qac::testing

#endif  // QAC_TESTS_SUPPORT_WORLD_HPP_

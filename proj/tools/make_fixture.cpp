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

// Writes the synthetic app-store world (catalog, logs, prefixes, blocklist,
// config) used by the demo and the pipeline tests.
#include <iostream>

#include "CLI11.hpp"
#include "qac/synthetic.hpp"

int main(int argc, char** argv) {
  qac::FixtureSpec spec;
  std::string dir = "data";
  CLI::App app{"Generate the synthetic QAC fixture"};
  app.add_option("--out", dir, "Output directory");
  app.add_option("--seed", spec.seed, "Fixture seed");
  app.add_option("--items", spec.items, "Catalog size");
  app.add_option("--prefixes", spec.prefixes, "Prefix count");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  try {
    const qac::Fixture fx = qac::make_fixture(spec);
    qac::write_fixture(fx, dir);
    std::cout << "wrote " << fx.catalog.size() << " items, " << fx.logs.size() << " queries, "
              << fx.prefixes.size() << " prefixes to " << dir << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

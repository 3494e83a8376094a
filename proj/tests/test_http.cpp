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
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "qac/error.hpp"
#include "qac/http.hpp"
#include "support/world.hpp"

using namespace std::chrono_literals;
using json = nlohmann::json;

namespace qac {
namespace {

struct Env {
  testing::World w;
  BoundedGenerator compact{std::make_shared<TemplateMockGenerator>(),
                           GeneratorProfile{"compact", GeneratorRole::kCompact, {}, 1000ms, 2}};
  ServingEngine engine{ServingDeps{w.index, w.catalog, w.context,
                                   std::string(default_generation_template()), w.backend, w.classifier},
                       compact};
  HttpApi api{engine};

  Env() {
    CacheSnapshot::Map m;
    CacheEntry e;
    e.queries = {Query{"take me to the moon"}, Query{"moon maps"}};
    e.grounded = {true, false};
    e.profile = "large";
    m["apps take me to the moo"] = e;
    engine.swap_snapshot(CacheSnapshot(m));
  }
};

TEST(HttpApi, Complete) {
  Env env;
  auto r = env.api.complete("Apps take me to the moo", std::nullopt);
  ASSERT_EQ(r.status, 200);
  json j = json::parse(r.body);
  EXPECT_TRUE(j["cache_hit"].get<bool>());
  EXPECT_FALSE(j["degraded"].get<bool>());
  EXPECT_EQ(j["snapshot_version"], 1);
  ASSERT_EQ(j["suggestions"].size(), 2u);
  EXPECT_EQ(j["suggestions"][0]["query"], "take me to the moon");
  EXPECT_EQ(j["suggestions"][0]["grounded"], true);
  EXPECT_EQ(j["suggestions"][1]["grounded"], false);
  EXPECT_EQ(j["suggestions"][1]["cached_rank"], 2);
  EXPECT_TRUE(j.contains("latency_us"));

  j = json::parse(env.api.complete("apps take me to the moo", "1").body);
  EXPECT_EQ(j["suggestions"].size(), 1u);

  j = json::parse(env.api.complete("sta", std::nullopt).body);
  EXPECT_FALSE(j["cache_hit"].get<bool>());
  for (const auto& s : j["suggestions"]) EXPECT_TRUE(s["cached_rank"].is_null());

  EXPECT_EQ(env.api.complete(std::nullopt, std::nullopt).status, 400);
  EXPECT_EQ(env.api.complete("moo", "0").status, 400);
  EXPECT_EQ(env.api.complete("moo", "11").status, 400);
  EXPECT_EQ(env.api.complete("moo", "abc").status, 400);
}

TEST(HttpApi, HealthAndReload) {
  Env env;
  json h = json::parse(env.api.health().body);
  EXPECT_EQ(h["status"], "ok");
  EXPECT_EQ(h["snapshot_version"], 1);
  EXPECT_EQ(h["cache_entries"], 1);

  const auto path = std::filesystem::temp_directory_path() / "qac_test_http_snap.jsonl";
  save_snapshot(*env.engine.snapshot(), path);
  auto r = env.api.reload(json{{"path", path.string()}}.dump());
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(json::parse(r.body)["snapshot_version"], 2);

  std::ofstream(path) << "garbage\n";
  r = env.api.reload(json{{"path", path.string()}}.dump());
  EXPECT_EQ(r.status, 422);
  const json err = json::parse(r.body);
  EXPECT_EQ(err["snapshot_version"], 2);
  EXPECT_TRUE(err.contains("error"));
  EXPECT_EQ(env.engine.snapshot()->version(), 2u);

  EXPECT_EQ(env.api.reload("not json").status, 400);
  EXPECT_EQ(env.api.reload("{}").status, 400);
  std::filesystem::remove(path);
}

TEST(HttpServer, RealSocket) {
  Env env;
  HttpServer server(env.api);
  const int port = server.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread t([&] { server.run(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(5);
  auto res = cli.Get("/v1/complete?prefix=apps%20take%20me%20to%20the%20moo&limit=5",
                     httplib::Headers{{"Origin", "http://localhost:5173"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_EQ(res->get_header_value("Content-Type").rfind("application/json", 0), 0u);
  EXPECT_TRUE(json::parse(res->body)["cache_hit"].get<bool>());

  res = cli.Get("/v1/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["cache_entries"], 1);

  res = cli.Get("/v1/complete");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  res = cli.Post("/v1/admin/reload", "{\"path\":\"/nonexistent\"}", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);

  res = cli.Options("/v1/complete");
  ASSERT_TRUE(res);
  EXPECT_LT(res->status, 300);

  server.stop();
  t.join();
}

}  // namespace
}  // namespace qac

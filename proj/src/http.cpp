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

#include "qac/http.hpp"

#include <charconv>

#include "httplib.h"
#include "json.hpp"
#include "qac/error.hpp"

namespace qac {

using json = nlohmann::json;

namespace {

HttpResponse error_response(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

}  // namespace

HttpResponse HttpApi::complete(std::optional<std::string_view> prefix,
                               std::optional<std::string_view> limit) const {
  if (!prefix) return error_response(400, "missing 'prefix' parameter");
  std::optional<std::size_t> n;
  if (limit) {
    std::size_t v = 0;
    const auto [end, ec] = std::from_chars(limit->data(), limit->data() + limit->size(), v);
    if (ec != std::errc() || end != limit->data() + limit->size() || v == 0 ||
        v > kMaxSuggestions) {
      return error_response(400, "limit must be an integer in [1, " +
                                     std::to_string(kMaxSuggestions) + "]");
    }
    n = v;
  }
  const ServeResult r = engine_.complete(*prefix, std::nullopt, n);
  json suggestions = json::array();
  for (std::size_t i = 0; i < r.suggestions.size(); ++i) {
    suggestions.push_back({{"query", r.suggestions.queries[i].text},
                           {"grounded", static_cast<bool>(r.grounded[i])},
                           {"cached_rank", r.cached_rank[i] ? json(*r.cached_rank[i])
                                                            : json(nullptr)}});
  }
  json body{{"suggestions", std::move(suggestions)},
            {"cache_hit", r.cache_hit},
            {"degraded", r.degraded},
            {"latency_us", r.latency_us},
            {"filtered_count", r.filtered_count},
            {"snapshot_version", r.snapshot_version}};
  return {200, body.dump()};
}

HttpResponse HttpApi::health() const {
  const auto snap = engine_.snapshot();
  return {200, json{{"status", "ok"},
                    {"snapshot_version", snap->version()},
                    {"cache_entries", snap->size()}}
                   .dump()};
}

HttpResponse HttpApi::reload(std::string_view body) const {
  const json req = json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object() || !req.contains("path") ||
      !req["path"].is_string()) {
    return error_response(400, "body must be {\"path\": \"...\"}");
  }
  try {
    const std::uint64_t version = engine_.load_snapshot(req["path"].get<std::string>());
    return {200, json{{"status", "ok"},
                      {"snapshot_version", version},
                      {"cache_entries", engine_.snapshot()->size()}}
                     .dump()};
  } catch (const Error& e) {
    json out{{"error", e.what()},
             {"code", std::string(error_code_name(e.code()))},
             {"snapshot_version", engine_.snapshot()->version()}};
    return {422, out.dump()};
  }
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(const HttpApi& api) : impl_(std::make_unique<Impl>()) {
  const auto send = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, "application/json");
  };
  const auto param = [](const httplib::Request& req,
                        const char* name) -> std::optional<std::string> {
    if (!req.has_param(name)) return std::nullopt;
    return req.get_param_value(name);
  };
  impl_->server.Get("/v1/complete", [&api, send, param](const httplib::Request& req,
                                                         httplib::Response& res) {
    const auto prefix = param(req, "prefix");
    const auto limit = param(req, "limit");
    send(res, api.complete(prefix ? std::optional<std::string_view>(*prefix) : std::nullopt,
                           limit ? std::optional<std::string_view>(*limit) : std::nullopt));
  });
  impl_->server.Get("/v1/health", [&api, send](const httplib::Request&, httplib::Response& res) {
    send(res, api.health());
  });
  impl_->server.Post("/v1/admin/reload",
                     [&api, send](const httplib::Request& req, httplib::Response& res) {
                       send(res, api.reload(req.body));
                     });
  // CORS preflight for browser clients on another origin.
  impl_->server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host.c_str());
  return impl_->server.bind_to_port(host.c_str(), port) ? port : -1;
}

bool HttpServer::run() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace qac

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

#ifndef QAC_HTTP_HPP_
#define QAC_HTTP_HPP_

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "qac/serving.hpp"

namespace qac {

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON
};

// Transport-free request handlers for the completion API.
class HttpApi {
 public:
  explicit HttpApi(ServingEngine& engine) : engine_(engine) {}

  // GET /v1/complete?prefix=...&limit=...
  HttpResponse complete(std::optional<std::string_view> prefix,
                        std::optional<std::string_view> limit) const;
  // GET /v1/health
  HttpResponse health() const;
  // POST /v1/admin/reload with {"path": "..."}; a bad file leaves the live
  // snapshot untouched.
  HttpResponse reload(std::string_view body) const;

 private:
  ServingEngine& engine_;
};

// cpp-httplib server exposing HttpApi.
class HttpServer {
 public:
  explicit HttpServer(const HttpApi& api);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  // Serves until stop(). Call after bind().
  bool run();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qac

#endif  // QAC_HTTP_HPP_

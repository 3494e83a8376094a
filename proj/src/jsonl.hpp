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

// Internal helpers shared by the JSONL readers and writers.
#ifndef QAC_SRC_JSONL_HPP_
#define QAC_SRC_JSONL_HPP_

#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <string>

#include "json.hpp"
#include "qac/error.hpp"
#include "qac/text.hpp"

namespace qac::internal {

using json = nlohmann::json;

// Calls `fn(record, line_number)` for every non-blank line. Parse failures
// become Error(kMalformedRecord) carrying the line number.
inline void for_each_jsonl(std::istream& in,
                           const std::function<void(const json&, std::size_t)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kMalformedRecord,
                  "line " + std::to_string(line_no) + ": " + e.what(),
                  std::to_string(line_no));
    }
    if (!record.is_object()) {
      throw Error(ErrorCode::kMalformedRecord,
                  "line " + std::to_string(line_no) + ": expected an object",
                  std::to_string(line_no));
    }
    try {
      fn(record, line_no);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedRecord,
                  "line " + std::to_string(line_no) + ": " + e.what(),
                  std::to_string(line_no));
    }
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  return out;
}

inline void check_written(std::ostream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

// Compact single-line dump; nlohmann prints doubles in shortest round-trip
// form, which keeps artifacts byte-stable.
inline std::string dump_line(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace qac::internal

#endif  // QAC_SRC_JSONL_HPP_

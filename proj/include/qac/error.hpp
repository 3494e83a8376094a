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

#ifndef QAC_ERROR_HPP_
#define QAC_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace qac {

enum class ErrorCode {
  kEmptyAfterNormalization,
  kMalformedRecord,
  kMissingPlaceholder,
  kGeneratorUnavailable,
  kTimeout,
  kBackendUnavailable,
  kEmptyDataset,
  kUnknownToken,
  kIoError,
  kCorruptSnapshot,
  kZeroTotalWeight,
  kMalformedResponse,
  kConfigError,
};

std::string_view error_code_name(ErrorCode code);

// Domain error carried by every fallible operation in the library. `detail`
// holds the structured payload named by the error (a line number, a
// placeholder name, a snapshot version), rendered as text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace qac

#endif  // QAC_ERROR_HPP_

// Copyright 2026 The odgate Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace odgate {

enum class ErrorCode {
  kInvalidArgument,
  kDecodeError,
  kEmptyImage,
  kTooFewSamples,
  kDegenerateFit,
  kNonFinite,
  kNormZero,
  kEmbedderUnavailable,
  kDimensionMismatch,
  kMalformedResponse,
  kInsufficientReference,
  kSchemaVersionMismatch,
  kInvariantViolation,
  kIoError,
  kProjectNotFound,
  kDuplicateName,
  kFitAlreadyRunning,
  kNoActivePack,
  kRecordNotFound,
  kJobNotFound,
  kInvalidLabel,
  kInvalidTau,
  kAddressInUse,
  kInternal,
};

// Stable identifier ("DecodeError", "NoActivePack", ...) used in logs, the
// HTTP error body and the C API.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace odgate

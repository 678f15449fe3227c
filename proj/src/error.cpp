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

#include "odgate/error.hpp"

namespace odgate {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDecodeError: return "DecodeError";
    case ErrorCode::kEmptyImage: return "EmptyImage";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kDegenerateFit: return "DegenerateFit";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kNormZero: return "NormZero";
    case ErrorCode::kEmbedderUnavailable: return "EmbedderUnavailable";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kMalformedResponse: return "MalformedResponse";
    case ErrorCode::kInsufficientReference: return "InsufficientReference";
    case ErrorCode::kSchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::kInvariantViolation: return "InvariantViolation";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kProjectNotFound: return "ProjectNotFound";
    case ErrorCode::kDuplicateName: return "DuplicateName";
    case ErrorCode::kFitAlreadyRunning: return "FitAlreadyRunning";
    case ErrorCode::kNoActivePack: return "NoActivePack";
    case ErrorCode::kRecordNotFound: return "RecordNotFound";
    case ErrorCode::kJobNotFound: return "JobNotFound";
    case ErrorCode::kInvalidLabel: return "InvalidLabel";
    case ErrorCode::kInvalidTau: return "InvalidTau";
    case ErrorCode::kAddressInUse: return "AddressInUse";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Internal";
}

}  // namespace odgate

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

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "odgate/gate.hpp"

namespace odgate {

/// Canonical text form (".odpack"): JSON with a fixed key order, two-space
/// indentation, scalar arrays on one line, and doubles in their shortest
/// round-trip decimal form. save_pack(load_pack(b)) == b.
std::string save_pack(const DetectorPack& pack);

/// Parses and validates. SchemaVersionMismatch for a foreign format or
/// version, InvariantViolation for anything malformed or inconsistent.
DetectorPack load_pack(std::string_view text);

DetectorPack load_pack_file(const std::filesystem::path& path);
void save_pack_file(const DetectorPack& pack, const std::filesystem::path& path);

/// Canonical emitter shared with other machine-readable outputs.
std::string canonical_json(const nlohmann::ordered_json& doc);

/// Shortest round-trip decimal; always contains '.' or an exponent.
std::string format_double(double value);

}  // namespace odgate

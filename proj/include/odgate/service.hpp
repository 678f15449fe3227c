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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

namespace odgate {

inline constexpr const char* kVersion = "1.0.0";

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir = "odgate-data";
  std::string embedder_url;  // empty: built-in test embedder
  int embedder_dimension = 64;
  std::uint64_t embedder_seed = 0;
  int max_in_flight = 4;
  std::chrono::milliseconds embed_timeout{10'000};
  std::string api_token;  // non-empty: Bearer auth on everything but /v1/health
  std::filesystem::path static_dir;  // optional dashboard bundle served at /
  int max_records = 0;  // per project, 0 = unbounded
  int threads = 32;
};

/// HTTP monitor service over a file-backed store in `data_dir`.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and starts serving on a background thread. Throws AddressInUse
  /// when the port cannot be bound.
  void start();
  int port() const;
  /// Stops accepting requests and waits for handlers and fit jobs.
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Current UTC time in RFC 3339 form with millisecond precision.
std::string rfc3339_now();

}  // namespace odgate

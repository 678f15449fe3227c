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
#include <memory>
#include <semaphore>
#include <span>
#include <string>

#include "odgate/gmm.hpp"
#include "odgate/image.hpp"

namespace odgate {

enum class EmbedderKind { kTest, kRemote };

struct EmbedderSpec {
  EmbedderKind kind = EmbedderKind::kTest;
  int dimension = 64;
  std::string identifier = "odgate-test-projection-16x16";  // model name or endpoint URL
  std::uint64_t seed = 0;  // test kind only
};

void validate(const EmbedderSpec& spec);

struct EmbeddingVector {
  Vector values;
  bool unit_norm = false;
};

/// Scales to unit L2 norm; NormZero when the norm is below 1e-12.
EmbeddingVector l2_normalize(Vector values);

class Embedder {
 public:
  virtual ~Embedder() = default;

  /// `encoded` optionally carries the original file bytes so that remote
  /// backends can forward them untouched.
  virtual EmbeddingVector embed(const ImageTensor& img,
                                std::span<const std::uint8_t> encoded = {}) const = 0;

  virtual const EmbedderSpec& spec() const = 0;

  /// Useful number of concurrent embed() callers.
  virtual int parallelism() const { return 1; }
};

/// Deterministic reference embedder: grayscale, area-average to 16x16,
/// multiply the 256 pixels by a D x 256 standard-normal matrix drawn row-major
/// from Rng(seed), then L2-normalize.
class TestEmbedder final : public Embedder {
 public:
  static constexpr int kGrid = 16;

  explicit TestEmbedder(EmbedderSpec spec);

  EmbeddingVector embed(const ImageTensor& img,
                        std::span<const std::uint8_t> encoded = {}) const override;
  const EmbedderSpec& spec() const override { return spec_; }
  int parallelism() const override;

  const Matrix& projection() const { return projection_; }

 private:
  EmbedderSpec spec_;
  Matrix projection_;
};

struct RemoteOptions {
  std::chrono::milliseconds timeout{10'000};
  int max_in_flight = 4;
};

/// Client for an HTTP embedding service. POSTs the image bytes and expects
/// {"dimension": D, "values": [...]}. Transport failures are retried once.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(EmbedderSpec spec, RemoteOptions options = {});

  EmbeddingVector embed(const ImageTensor& img,
                        std::span<const std::uint8_t> encoded = {}) const override;
  const EmbedderSpec& spec() const override { return spec_; }
  int parallelism() const override { return options_.max_in_flight; }

 private:
  EmbedderSpec spec_;
  RemoteOptions options_;
  mutable std::counting_semaphore<1024> in_flight_;
};

/// Single request against `endpoint`; `expected_dimension` <= 0 skips the
/// length check against a known D.
EmbeddingVector remote_embed(const std::string& endpoint, std::span<const std::uint8_t> bytes,
                             int expected_dimension, const RemoteOptions& options = {});

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec, const RemoteOptions& options = {});

}  // namespace odgate

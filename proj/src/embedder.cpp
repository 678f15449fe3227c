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

#include "odgate/embedder.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "odgate/error.hpp"
#include "odgate/parallel.hpp"
#include "odgate/prng.hpp"

namespace odgate {

void validate(const EmbedderSpec& spec) {
  if (spec.dimension < 2) fail(ErrorCode::kInvalidArgument, "embedder dimension must be at least 2");
  if (spec.kind == EmbedderKind::kRemote && spec.identifier.empty()) {
    fail(ErrorCode::kInvalidArgument, "remote embedder needs an endpoint URL");
  }
}

EmbeddingVector l2_normalize(Vector values) {
  if (!values.allFinite()) fail(ErrorCode::kNonFinite, "embedding contains non-finite values");
  const double norm = values.norm();
  if (norm < 1e-12) fail(ErrorCode::kNormZero, "embedding has (near) zero norm");
  return EmbeddingVector{values / norm, true};
}

TestEmbedder::TestEmbedder(EmbedderSpec spec) : spec_(std::move(spec)) {
  validate(spec_);
  if (spec_.kind != EmbedderKind::kTest) fail(ErrorCode::kInvalidArgument, "not a test embedder spec");
  constexpr int kInputs = kGrid * kGrid;
  projection_.resize(spec_.dimension, kInputs);
  Rng rng(spec_.seed);
  for (int i = 0; i < spec_.dimension; ++i) {
    for (int j = 0; j < kInputs; ++j) projection_(i, j) = rng.normal();
  }
}

int TestEmbedder::parallelism() const { return default_workers(); }

EmbeddingVector TestEmbedder::embed(const ImageTensor& img, std::span<const std::uint8_t>) const {
  validate(img);
  const GrayImage small = area_resize(to_grayscale(img), kGrid, kGrid);
  const Eigen::Map<const Vector> pixels(small.values.data(), static_cast<Eigen::Index>(small.values.size()));
  return l2_normalize(projection_ * pixels);
}

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.compare(0, scheme_end, "http") != 0) {
    fail(ErrorCode::kInvalidArgument, "embedder endpoint must be an http:// URL: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool is_transport_failure(httplib::Error err) {
  return err != httplib::Error::Success;
}

}  // namespace

EmbeddingVector remote_embed(const std::string& endpoint, std::span<const std::uint8_t> bytes,
                             int expected_dimension, const RemoteOptions& options) {
  const Endpoint ep = split_url(endpoint);
  const std::string body(bytes.begin(), bytes.end());
  const char* content_type = mime_type(sniff_format(bytes));

  httplib::Result res;
  for (int attempt = 0; attempt < 2; ++attempt) {
    httplib::Client client(ep.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    res = client.Post(ep.path, body, content_type);
    if (!is_transport_failure(res.error())) break;
  }
  if (!res) {
    fail(ErrorCode::kEmbedderUnavailable,
         "embedder request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    fail(ErrorCode::kEmbedderUnavailable, "embedder returned HTTP " + std::to_string(res->status));
  }

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMalformedResponse, std::string("embedder response is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("dimension") || !doc.contains("values") ||
      !doc["dimension"].is_number_integer() || !doc["values"].is_array()) {
    fail(ErrorCode::kMalformedResponse, "embedder response lacks dimension/values");
  }
  const auto dimension = doc["dimension"].get<long long>();
  const auto& values = doc["values"];
  if (dimension < 2 || static_cast<long long>(values.size()) != dimension) {
    fail(ErrorCode::kDimensionMismatch, "embedder declared dimension " + std::to_string(dimension) +
                                            " but sent " + std::to_string(values.size()) + " values");
  }
  if (expected_dimension > 0 && dimension != expected_dimension) {
    fail(ErrorCode::kDimensionMismatch, "expected dimension " + std::to_string(expected_dimension) +
                                            ", embedder sent " + std::to_string(dimension));
  }
  Vector v(dimension);
  for (long long i = 0; i < dimension; ++i) {
    if (!values[i].is_number()) fail(ErrorCode::kMalformedResponse, "non-numeric embedding value");
    v[i] = values[i].get<double>();
  }
  if (!v.allFinite()) fail(ErrorCode::kMalformedResponse, "embedding contains non-finite values");
  return l2_normalize(std::move(v));
}

RemoteEmbedder::RemoteEmbedder(EmbedderSpec spec, RemoteOptions options)
    : spec_(std::move(spec)),
      options_(options),
      in_flight_(std::clamp(options.max_in_flight, 1, 1024)) {
  validate(spec_);
  split_url(spec_.identifier);
}

EmbeddingVector RemoteEmbedder::embed(const ImageTensor& img,
                                      std::span<const std::uint8_t> encoded) const {
  std::vector<std::uint8_t> owned;
  if (encoded.empty()) {
    owned = encode_png(img, PngDepth::k16);
    encoded = owned;
  }
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024>& sem;
    ~Release() { sem.release(); }
  } release{in_flight_};
  return remote_embed(spec_.identifier, encoded, spec_.dimension, options_);
}

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec, const RemoteOptions& options) {
  if (spec.kind == EmbedderKind::kTest) return std::make_unique<TestEmbedder>(spec);
  return std::make_unique<RemoteEmbedder>(spec, options);
}

}  // namespace odgate

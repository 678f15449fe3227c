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

#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "odgate/embedder.hpp"
#include "odgate/error.hpp"
#include "odgate/parallel.hpp"
#include "odgate/prng.hpp"
#include "test_util.hpp"

#include <httplib.h>
#include <json.hpp>

using namespace odgate;
using testing_util::expect_code;

namespace {

ImageTensor gradient_image(int size, double phase) {
  ImageTensor img{size, size, 3, {}};
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      img.values.push_back(0.5 + 0.4 * std::sin(phase + x * 0.1));
      img.values.push_back(0.5 + 0.4 * std::cos(phase + y * 0.07));
      img.values.push_back(static_cast<double>(x + y) / (2 * size));
    }
  return img;
}

// Embedding server stub on an ephemeral port.
class StubServer {
 public:
  StubServer() {
    server_.Post("/fixed", [this](const httplib::Request& req, httplib::Response& res) {
      last_content_type = req.get_header_value("Content-Type");
      last_body_size = req.body.size();
      res.set_content(R"({"dimension": 8, "values": [1, 2, 3, 4, 0, 0, 0, 2]})", "application/json");
    });
    server_.Post("/short", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"dimension": 8, "values": [1, 2, 3]})", "application/json");
    });
    server_.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("not json", "text/plain");
    });
    server_.Post("/strings", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"dimension": 2, "values": ["a", "b"]})", "application/json");
    });
    server_.Post("/error", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    server_.Post("/slow", [this](const httplib::Request&, httplib::Response& res) {
      ++slow_hits;
      std::this_thread::sleep_for(std::chrono::milliseconds(600));
      res.set_content(R"({"dimension": 2, "values": [1, 0]})", "application/json");
    });
    server_.Post("/busy", [this](const httplib::Request&, httplib::Response& res) {
      const int now = ++active;
      int seen = peak.load();
      while (now > seen && !peak.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      --active;
      res.set_content(R"({"dimension": 4, "values": [0, 1, 0, 0]})", "application/json");
    });
    server_.new_task_queue = [] { return new httplib::ThreadPool(16); };
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

  std::string last_content_type;
  std::size_t last_body_size = 0;
  std::atomic<int> slow_hits{0};
  std::atomic<int> active{0};
  std::atomic<int> peak{0};

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST(TestEmbedder, UnitNormAndDeterministic) {
  const TestEmbedder e(EmbedderSpec{});
  for (int i = 0; i < 10; ++i) {
    const ImageTensor img = gradient_image(20 + i * 7, i);
    const EmbeddingVector a = e.embed(img);
    const EmbeddingVector b = e.embed(img);
    EXPECT_EQ(a.values.size(), 64);
    EXPECT_TRUE(a.unit_norm);
    EXPECT_NEAR(a.values.norm(), 1.0, 1e-6);
    EXPECT_EQ(a.values, b.values);
  }
  EmbedderSpec other;
  other.seed = 1;
  const TestEmbedder f(other);
  EXPECT_GT((e.embed(gradient_image(32, 0)).values - f.embed(gradient_image(32, 0)).values).norm(), 1e-3);
}

TEST(TestEmbedder, ProjectionDrawnRowMajor) {
  EmbedderSpec spec;
  spec.dimension = 5;
  spec.seed = 99;
  const TestEmbedder e(spec);
  Rng rng(99);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 256; ++j) ASSERT_EQ(e.projection()(i, j), rng.normal());
}

TEST(TestEmbedder, MatchesBlockAverageOracle) {
  // 64x64 input: every 16x16 cell is an exact 4x4 block mean.
  const ImageTensor img = gradient_image(64, 0.3);
  EmbedderSpec spec;
  spec.dimension = 16;
  spec.seed = 5;
  const EmbeddingVector got = TestEmbedder(spec).embed(img);
  std::vector<double> cells(256, 0.0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double* p = &img.values[(y * 64 + x) * 3];
      cells[(y / 4) * 16 + x / 4] += (0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]) / 16.0;
    }
  Rng rng(5);
  std::vector<double> out(16, 0.0);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 256; ++j) out[i] += rng.normal() * cells[j];
  double norm = 0;
  for (double v : out) norm += v * v;
  norm = std::sqrt(norm);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(got.values(i), out[i] / norm, 1e-12);
}

TEST(TestEmbedder, ZeroImageIsNormZero) {
  const TestEmbedder e(EmbedderSpec{});
  expect_code(ErrorCode::kNormZero, [&] { e.embed(ImageTensor{8, 8, 1, std::vector<double>(64, 0.0)}); });
  expect_code(ErrorCode::kNormZero, [] { l2_normalize(Vector::Zero(3)); });
}

TEST(EmbedderSpec, Validation) {
  EmbedderSpec s;
  s.dimension = 1;
  expect_code(ErrorCode::kInvalidArgument, [&] { validate(s); });
  EmbedderSpec r;
  r.kind = EmbedderKind::kRemote;
  r.identifier = "";
  expect_code(ErrorCode::kInvalidArgument, [&] { validate(r); });
  r.identifier = "ftp://example/embed";
  expect_code(ErrorCode::kInvalidArgument, [&] { make_embedder(r); });
}

TEST(RemoteEmbed, FixedVectorIsNormalized) {
  StubServer stub;
  const auto png = encode_png(ImageTensor{2, 2, 1, {0, 0.5, 1, 0.25}});
  const EmbeddingVector v = remote_embed(stub.url("/fixed"), png, 8);
  EXPECT_TRUE(v.unit_norm);
  EXPECT_NEAR(v.values.norm(), 1.0, 1e-12);
  EXPECT_NEAR(v.values(0), 1.0 / std::sqrt(34.0), 1e-12);
  EXPECT_EQ(stub.last_content_type, "image/png");
  EXPECT_EQ(stub.last_body_size, png.size());
}

TEST(RemoteEmbed, ProtocolErrors) {
  StubServer stub;
  const auto png = encode_png(ImageTensor{1, 1, 1, {0.5}});
  expect_code(ErrorCode::kDimensionMismatch, [&] { remote_embed(stub.url("/short"), png, 8); });
  expect_code(ErrorCode::kDimensionMismatch, [&] { remote_embed(stub.url("/fixed"), png, 16); });
  expect_code(ErrorCode::kMalformedResponse, [&] { remote_embed(stub.url("/garbage"), png, 0); });
  expect_code(ErrorCode::kMalformedResponse, [&] { remote_embed(stub.url("/strings"), png, 0); });
  expect_code(ErrorCode::kEmbedderUnavailable, [&] { remote_embed(stub.url("/error"), png, 0); });
}

TEST(RemoteEmbed, TimeoutTwiceIsUnavailable) {
  StubServer stub;
  const auto png = encode_png(ImageTensor{1, 1, 1, {0.5}});
  RemoteOptions opts;
  opts.timeout = std::chrono::milliseconds(150);
  expect_code(ErrorCode::kEmbedderUnavailable, [&] { remote_embed(stub.url("/slow"), png, 0, opts); });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  EXPECT_EQ(stub.slow_hits.load(), 2);
}

TEST(RemoteEmbed, UnreachableIsUnavailable) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  const auto png = encode_png(ImageTensor{1, 1, 1, {0.5}});
  RemoteOptions opts;
  opts.timeout = std::chrono::milliseconds(300);
  expect_code(ErrorCode::kEmbedderUnavailable,
              [&] { remote_embed("http://127.0.0.1:" + std::to_string(port) + "/e", png, 0, opts); });
}

TEST(RemoteEmbedder, BoundsInFlightRequests) {
  StubServer stub;
  EmbedderSpec spec;
  spec.kind = EmbedderKind::kRemote;
  spec.dimension = 4;
  spec.identifier = stub.url("/busy");
  RemoteOptions opts;
  opts.max_in_flight = 3;
  const auto e = make_embedder(spec, opts);
  EXPECT_EQ(e->parallelism(), 3);
  const ImageTensor img{4, 4, 1, std::vector<double>(16, 0.5)};
  std::vector<std::jthread> callers;
  for (int i = 0; i < 12; ++i) callers.emplace_back([&] { EXPECT_NEAR(e->embed(img).values(1), 1.0, 1e-12); });
  callers.clear();
  EXPECT_LE(stub.peak.load(), 3);
  EXPECT_GE(stub.peak.load(), 1);
}

TEST(Parallel, CoversEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(100, 3, [](std::size_t i) {
                 if (i == 57) fail(ErrorCode::kInternal, "boom");
               }),
               Error);
}

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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <thread>

#include <unistd.h>

#include "odgate/error.hpp"
#include "odgate/gate.hpp"
#include "odgate/pack_io.hpp"
#include "odgate/synthbench.hpp"
#include "test_util.hpp"

#include <httplib.h>
#include <json.hpp>

using namespace odgate;
using testing_util::expect_code;

namespace {

synth::CorpusSpec small_spec() {
  synth::CorpusSpec spec;
  spec.n_inliers = 120;
  spec.outlier_counts = {6, 6, 6, 6, 6};
  spec.size = 64;
  spec.seed = 31;
  return spec;
}

const std::vector<synth::CorpusItem>& corpus() {
  static const auto items = synth::generate_corpus(small_spec());
  return items;
}

std::vector<ImageTensor> inliers(int n) {
  std::vector<ImageTensor> out;
  for (const auto& item : corpus()) {
    if (!item.outlier && static_cast<int>(out.size()) < n) out.push_back(item.image);
  }
  return out;
}

GateConfig quick_config(std::uint64_t seed = 0) {
  GateConfig c;
  c.seed = seed;
  c.em_n_init = 2;
  c.k_max = 3;
  return c;
}

EmbedderSpec small_embedder() {
  EmbedderSpec e;
  e.dimension = 24;
  return e;
}

const DetectorPack& shared_pack() {
  static const DetectorPack pack = fit_gate(inliers(100), 5.0, quick_config(), small_embedder());
  return pack;
}

}  // namespace

TEST(FitGate, SplitSizes) {
  const DetectorPack& p = shared_pack();
  EXPECT_EQ(p.n_reference, 100);
  EXPECT_EQ(p.n_fit, 80);
  EXPECT_EQ(p.n_holdout, 20);
  EXPECT_EQ(p.train_gmm_logliks.size(), 80u);
  EXPECT_EQ(p.train_recon_losses.size(), 80u);
  EXPECT_NO_THROW(validate(p));

  // 20% of 60 is 12, raised to the holdout floor.
  const DetectorPack q = fit_gate(inliers(60), 5.0, quick_config(), small_embedder());
  EXPECT_EQ(q.n_fit, 40);
  EXPECT_EQ(q.n_holdout, 20);
}

TEST(FitGate, Errors) {
  expect_code(ErrorCode::kInsufficientReference,
              [] { fit_gate(inliers(49), 5.0, quick_config(), small_embedder()); });
  expect_code(ErrorCode::kInvalidTau, [] { fit_gate(inliers(60), 0.0, quick_config(), small_embedder()); });
  expect_code(ErrorCode::kInvalidTau, [] { fit_gate(inliers(60), 50.5, quick_config(), small_embedder()); });
  GateConfig bad = quick_config();
  bad.split_fraction = 1.0;
  expect_code(ErrorCode::kInvalidArgument, [&] { fit_gate(inliers(60), 5.0, bad, small_embedder()); });
}

TEST(FitGate, DeterministicBytes) {
  const DetectorPack a = fit_gate(inliers(100), 5.0, quick_config(), small_embedder());
  EXPECT_EQ(save_pack(a), save_pack(shared_pack()));
  const DetectorPack b = fit_gate(inliers(100), 5.0, quick_config(9), small_embedder());
  EXPECT_NE(save_pack(b), save_pack(shared_pack()));
}

TEST(FitGate, TrainFlagRatesNearTau) {
  for (double tau : {1.0, 5.0, 10.0, 25.0}) {
    const DetectorPack p = tau == 5.0 ? shared_pack() : rethreshold(shared_pack(), tau);
    const double n = p.n_fit;
    const auto g = std::count_if(p.train_gmm_logliks.begin(), p.train_gmm_logliks.end(),
                                 [&](double l) { return l < p.gmm.loglik_threshold; });
    const auto e = std::count_if(p.train_recon_losses.begin(), p.train_recon_losses.end(),
                                 [&](double l) { return l > p.subspace.loss_threshold; });
    EXPECT_NEAR(g / n, tau / 100.0, 1.0 / n) << tau;
    EXPECT_NEAR(e / n, tau / 100.0, 1.0 / n) << tau;
  }
}

TEST(Gate, VerdictCombination) {
  auto pack = std::make_shared<DetectorPack>(shared_pack());
  const Gate or_gate(pack);
  pack = std::make_shared<DetectorPack>(shared_pack());
  pack->combine = CombineRule::kAnd;
  const Gate and_gate(pack);
  int outliers = 0;
  for (const auto& item : corpus()) {
    const Verdict v = or_gate.score(item.image);
    const Verdict w = and_gate.score(item.image);
    ASSERT_TRUE(v.recon_loss && v.embed_flag && v.embed_margin);
    EXPECT_FALSE(v.degraded);
    EXPECT_EQ(v.outlier, v.gmm_flag || *v.embed_flag);
    EXPECT_EQ(w.outlier, w.gmm_flag && *w.embed_flag);
    EXPECT_EQ(v.gmm_flag, v.gmm_margin < 0.0);
    EXPECT_EQ(*v.embed_flag, *v.embed_margin > 0.0);
    EXPECT_EQ(v.gmm_loglik, w.gmm_loglik);
    outliers += item.outlier && v.outlier;
  }
  EXPECT_GT(outliers, 20);
}

TEST(Gate, CombineTruthTable) {
  EXPECT_FALSE(combine(CombineRule::kOr, false, false));
  EXPECT_TRUE(combine(CombineRule::kOr, true, false));
  EXPECT_TRUE(combine(CombineRule::kOr, false, true));
  EXPECT_FALSE(combine(CombineRule::kAnd, true, false));
  EXPECT_FALSE(combine(CombineRule::kAnd, false, true));
  EXPECT_TRUE(combine(CombineRule::kAnd, true, true));
  EXPECT_EQ(parse_combine_rule("AND"), CombineRule::kAnd);
  expect_code(ErrorCode::kInvalidArgument, [] { parse_combine_rule("xor"); });
}

TEST(Gate, DegradedWhenEmbedderUnreachable) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto pack = std::make_shared<DetectorPack>(shared_pack());
  pack->embedder.kind = EmbedderKind::kRemote;
  pack->embedder.identifier = "http://127.0.0.1:" + std::to_string(port) + "/embed";
  RemoteOptions opts;
  opts.timeout = std::chrono::milliseconds(200);
  const Gate gate(pack, opts);
  const Gate local(std::make_shared<DetectorPack>(shared_pack()));
  for (int i = 0; i < 4; ++i) {
    const ImageTensor& img = corpus()[static_cast<std::size_t>(i * 30)].image;
    const Verdict v = gate.score(img);
    EXPECT_TRUE(v.degraded);
    EXPECT_FALSE(v.recon_loss.has_value());
    EXPECT_FALSE(v.embed_flag.has_value());
    EXPECT_FALSE(v.embed_margin.has_value());
    EXPECT_EQ(v.outlier, v.gmm_flag);
    EXPECT_EQ(v.gmm_loglik, local.score(img).gmm_loglik);
  }
}

TEST(Gate, EmbedderDimensionMustMatch) {
  auto pack = std::make_shared<DetectorPack>(shared_pack());
  EmbedderSpec other = small_embedder();
  other.dimension = 8;
  expect_code(ErrorCode::kDimensionMismatch,
              [&] { Gate(pack, std::make_shared<TestEmbedder>(other)); });
  expect_code(ErrorCode::kEmptyImage, [&] { Gate(pack).score(ImageTensor{0, 0, 1, {}}); });
}

TEST(Gate, ConcurrentScoringMatchesSequential) {
  const Gate gate(std::make_shared<DetectorPack>(shared_pack()));
  const auto& items = corpus();
  std::vector<Verdict> expected;
  for (const auto& item : items) expected.push_back(gate.score(item.image));
  std::vector<Verdict> got(items.size());
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        for (std::size_t i = static_cast<std::size_t>(t); i < items.size(); i += 8) got[i] = gate.score(items[i].image);
      });
    }
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_EQ(got[i].gmm_loglik, expected[i].gmm_loglik);
    EXPECT_EQ(got[i].recon_loss, expected[i].recon_loss);
    EXPECT_EQ(got[i].outlier, expected[i].outlier);
  }
}

TEST(Rethreshold, SameTauIsIdentity) {
  EXPECT_EQ(save_pack(rethreshold(shared_pack(), 5.0)), save_pack(shared_pack()));
}

TEST(Rethreshold, OnlyThresholdsChange) {
  const DetectorPack r = rethreshold(shared_pack(), 12.5);
  DetectorPack restored = r;
  restored.tau = 5.0;
  restored.gmm.tau = 5.0;
  restored.subspace.tau = 5.0;
  restored.gmm.loglik_threshold = shared_pack().gmm.loglik_threshold;
  restored.subspace.loss_threshold = shared_pack().subspace.loss_threshold;
  EXPECT_EQ(save_pack(restored), save_pack(shared_pack()));
  EXPECT_NO_THROW(validate(r));
}

TEST(Rethreshold, FlagsMonotoneInTau) {
  const auto& items = corpus();
  int previous = -1;
  double previous_gmm = -INFINITY;
  double previous_loss = INFINITY;
  for (double tau : {0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 35.0, 50.0}) {
    const DetectorPack p = rethreshold(shared_pack(), tau);
    EXPECT_GE(p.gmm.loglik_threshold, previous_gmm);
    EXPECT_LE(p.subspace.loss_threshold, previous_loss);
    previous_gmm = p.gmm.loglik_threshold;
    previous_loss = p.subspace.loss_threshold;
    const Gate gate(std::make_shared<DetectorPack>(p));
    int flagged = 0;
    for (std::size_t i = 0; i < items.size(); i += 3) flagged += gate.score(items[i].image).outlier;
    EXPECT_GE(flagged, previous) << tau;
    previous = flagged;
  }
}

TEST(Rethreshold, RejectsBadTau) {
  for (double tau : {0.0, -1.0, 50.01, 90.1, std::nan("")}) {
    expect_code(ErrorCode::kInvalidTau, [&] { rethreshold(shared_pack(), tau); });
  }
}

TEST(PackIo, RoundTripIsByteIdentical) {
  const std::string text = save_pack(shared_pack());
  const DetectorPack loaded = load_pack(text);
  EXPECT_EQ(save_pack(loaded), text);
  const Gate a(std::make_shared<DetectorPack>(shared_pack()));
  const Gate b(std::make_shared<DetectorPack>(loaded));
  for (std::size_t i = 0; i < corpus().size(); i += 7) {
    const Verdict va = a.score(corpus()[i].image);
    const Verdict vb = b.score(corpus()[i].image);
    EXPECT_EQ(va.gmm_loglik, vb.gmm_loglik);
    EXPECT_EQ(va.recon_loss, vb.recon_loss);
    EXPECT_EQ(va.outlier, vb.outlier);
  }
}

TEST(PackIo, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / ("odgate_pack_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto file = dir / "a.odpack";
  save_pack_file(shared_pack(), file);
  EXPECT_FALSE(std::filesystem::exists(file.string() + ".tmp"));
  EXPECT_EQ(save_pack(load_pack_file(file)), save_pack(shared_pack()));
  expect_code(ErrorCode::kIoError, [&] { load_pack_file(dir / "missing.odpack"); });
  std::filesystem::remove_all(dir);
}

TEST(PackIo, RejectsTamperedOrForeignDocuments) {
  const std::string text = save_pack(shared_pack());
  auto doc = nlohmann::ordered_json::parse(text);

  auto weights = doc;
  weights["gmm"]["weights"][0] = weights["gmm"]["weights"][0].get<double>() + 0.25;
  expect_code(ErrorCode::kInvariantViolation, [&] { load_pack(weights.dump()); });

  auto version = doc;
  version["pack_version"] = 2;
  expect_code(ErrorCode::kSchemaVersionMismatch, [&] { load_pack(version.dump()); });

  auto format = doc;
  format["format"] = "other";
  expect_code(ErrorCode::kSchemaVersionMismatch, [&] { load_pack(format.dump()); });

  auto missing = doc;
  missing.erase("subspace");
  expect_code(ErrorCode::kInvariantViolation, [&] { load_pack(missing.dump()); });

  auto threshold = doc;
  threshold["tau"] = 7.0;
  expect_code(ErrorCode::kInvariantViolation, [&] { load_pack(threshold.dump()); });

  auto counts = doc;
  counts["reference"]["n_holdout"] = 21;
  expect_code(ErrorCode::kInvariantViolation, [&] { load_pack(counts.dump()); });

  expect_code(ErrorCode::kInvariantViolation, [] { load_pack("{not json"); });
  expect_code(ErrorCode::kInvariantViolation, [&] { load_pack(text.substr(0, text.size() / 2)); });
}

TEST(PackIo, CanonicalNumbers) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1.0");
  EXPECT_EQ(format_double(-2.5e-300), "-2.5e-300");
  expect_code(ErrorCode::kNonFinite, [] { format_double(INFINITY); });
  nlohmann::ordered_json doc;
  doc["b"] = 1;
  doc["a"] = {1.5, "x"};
  const std::string text = canonical_json(doc);
  EXPECT_EQ(text.back(), '\n');
  EXPECT_LT(text.find("\"b\""), text.find("\"a\""));
  EXPECT_EQ(nlohmann::ordered_json::parse(text), doc);
}

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

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odgate/embedder.hpp"
#include "odgate/fof.hpp"
#include "odgate/gmm.hpp"
#include "odgate/image.hpp"
#include "odgate/subspace.hpp"

namespace odgate {

inline constexpr int kPackVersion = 1;
inline constexpr int kMinReferenceImages = 50;
inline constexpr int kMinHoldout = 20;

enum class CombineRule { kOr, kAnd };

struct GateConfig {
  double split_fraction = 0.8;
  std::uint64_t seed = 0;
  std::vector<int> r_candidates;  // empty: default_r_candidates(n_fit, D)
  int k_max = 5;
  int em_max_iter = 200;
  double em_rel_tol = 1e-6;
  int em_n_init = 4;
  CovarianceType covariance = CovarianceType::kDiagonal;
  CombineRule combine = CombineRule::kOr;
  std::string created_at = "1970-01-01T00:00:00Z";
};

/// Fitted detectors plus everything needed to audit or re-threshold them.
struct DetectorPack {
  int pack_version = kPackVersion;
  std::string created_at;
  double tau = 5.0;
  CombineRule combine = CombineRule::kOr;
  GateConfig config;  // echo of the fit configuration
  EmbedderSpec embedder;

  int n_reference = 0;
  int n_fit = 0;
  int n_holdout = 0;

  GmmDetector gmm;
  std::vector<double> gmm_bic;
  SubspaceModel subspace;
  SweepResult sweep;

  // Scores and features of the fit split, in fit order.
  std::vector<double> train_gmm_logliks;
  std::vector<double> train_recon_losses;
  std::vector<FeatureVector> train_features;
};

/// Throws InvariantViolation / SchemaVersionMismatch.
void validate(const DetectorPack& pack);

struct Verdict {
  double gmm_loglik = 0.0;
  std::optional<double> recon_loss;  // absent when degraded
  bool gmm_flag = false;
  std::optional<bool> embed_flag;  // absent when degraded
  bool outlier = false;
  double gmm_margin = 0.0;  // loglik - threshold
  std::optional<double> embed_margin;  // loss - threshold
  bool degraded = false;
  FeatureVector features;
};

bool combine(CombineRule rule, bool gmm_flag, bool embed_flag);

const char* to_string(CombineRule rule);
CombineRule parse_combine_rule(const std::string& text);

/// Seeded shuffle, fit/holdout split, GMM on first-order features, r-sweep
/// on embeddings (fit split as train, holdout as test) and a final PCA at
/// r_star on the fit split. `encoded`, when non-empty, holds the original
/// file bytes per image for remote embedders.
DetectorPack fit_gate(std::span<const ImageTensor> images, double tau, const GateConfig& config,
                      const Embedder& embedder,
                      std::span<const std::vector<std::uint8_t>> encoded = {});

/// Builds the embedder from `embedder_spec` itself.
DetectorPack fit_gate(std::span<const ImageTensor> images, double tau, const GateConfig& config,
                      const EmbedderSpec& embedder_spec);

/// Recomputes both thresholds from the stored training scores.
DetectorPack rethreshold(const DetectorPack& pack, double new_tau);

/// Immutable pack plus a ready embedder; score() is safe to call concurrently.
class Gate {
 public:
  explicit Gate(std::shared_ptr<const DetectorPack> pack, const RemoteOptions& remote = {});
  Gate(std::shared_ptr<const DetectorPack> pack, std::shared_ptr<const Embedder> embedder);

  /// An EmbedderUnavailable failure yields a degraded verdict decided by the
  /// GMM flag alone.
  Verdict score(const ImageTensor& img, std::span<const std::uint8_t> encoded = {}) const;

  const DetectorPack& pack() const { return *pack_; }
  std::shared_ptr<const DetectorPack> pack_ptr() const { return pack_; }
  const Embedder& embedder() const { return *embedder_; }

 private:
  std::shared_ptr<const DetectorPack> pack_;
  std::shared_ptr<const Embedder> embedder_;
};

Verdict score(const DetectorPack& pack, const ImageTensor& img);

Vector to_vector(const FeatureVector& f);

}  // namespace odgate

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

#include "odgate/gate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "odgate/error.hpp"
#include "odgate/parallel.hpp"
#include "odgate/percentile.hpp"
#include "odgate/prng.hpp"

namespace odgate {
namespace {

// Sub-seed streams derived from GateConfig::seed.
constexpr std::uint64_t kShuffleStream = 0x5348554646ull;  // "SHUFF"
constexpr std::uint64_t kEmStream = 0x454Dull;             // "EM"

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, kShuffleStream));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

void check_config(const GateConfig& config) {
  if (!(config.split_fraction > 0.0 && config.split_fraction < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "split_fraction must lie in (0, 1)");
  }
  if (config.k_max < 1) fail(ErrorCode::kInvalidArgument, "k_max must be at least 1");
}

}  // namespace

Vector to_vector(const FeatureVector& f) {
  Vector v(kFofDim);
  for (int i = 0; i < kFofDim; ++i) v[i] = f[i];
  return v;
}

bool combine(CombineRule rule, bool gmm_flag, bool embed_flag) {
  return rule == CombineRule::kOr ? (gmm_flag || embed_flag) : (gmm_flag && embed_flag);
}

const char* to_string(CombineRule rule) { return rule == CombineRule::kOr ? "or" : "and"; }

CombineRule parse_combine_rule(const std::string& text) {
  if (text == "or" || text == "OR") return CombineRule::kOr;
  if (text == "and" || text == "AND") return CombineRule::kAnd;
  fail(ErrorCode::kInvalidArgument, "combination rule must be 'or' or 'and', got '" + text + "'");
}

void validate(const DetectorPack& pack) {
  if (pack.pack_version != kPackVersion) {
    fail(ErrorCode::kSchemaVersionMismatch,
         "pack_version " + std::to_string(pack.pack_version) + " is not supported (expected " +
             std::to_string(kPackVersion) + ")");
  }
  auto invariant = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::kInvariantViolation, what);
  };
  invariant(pack.tau > 0.0 && pack.tau <= 50.0, "tau outside (0, 50]");
  invariant(pack.gmm.tau == pack.tau && pack.subspace.tau == pack.tau,
            "detectors were not fitted with the pack tau");
  validate(pack.embedder);
  validate(pack.gmm.params);
  invariant(pack.gmm.params.dimension() == kFofDim, "GMM dimension must equal the feature count");
  invariant(pack.gmm.standardizer.mean.size() == kFofDim && pack.gmm.standardizer.std.size() == kFofDim,
            "standardizer dimension must equal the feature count");
  invariant(pack.gmm.standardizer.mean.allFinite() && pack.gmm.standardizer.std.allFinite() &&
                (pack.gmm.standardizer.std.array() > 0.0).all(),
            "standardizer must be finite with positive spread");
  invariant(std::isfinite(pack.gmm.loglik_threshold), "GMM threshold must be finite");
  validate(pack.subspace);
  invariant(pack.subspace.dimension() == pack.embedder.dimension,
            "subspace dimension disagrees with the embedder");

  const std::size_t n = pack.train_gmm_logliks.size();
  invariant(n >= 20, "fewer than 20 training scores");
  invariant(pack.train_recon_losses.size() == n && pack.train_features.size() == n,
            "training score vectors differ in length");
  invariant(static_cast<std::size_t>(pack.n_fit) == n, "n_fit disagrees with the training scores");
  invariant(pack.n_fit + pack.n_holdout == pack.n_reference, "fit and holdout do not add up");
  invariant(pack.subspace.rank() <= std::min(pack.n_fit - 1, pack.embedder.dimension),
            "subspace rank exceeds min(n_fit-1, D)");
  for (double v : pack.train_gmm_logliks) invariant(std::isfinite(v), "non-finite training log-likelihood");
  for (double v : pack.train_recon_losses) {
    invariant(std::isfinite(v) && v >= 0.0, "invalid training reconstruction loss");
  }
  auto same = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  invariant(same(pack.gmm.loglik_threshold, percentile(pack.train_gmm_logliks, pack.tau)),
            "GMM threshold disagrees with the training scores at tau");
  invariant(same(pack.subspace.loss_threshold, percentile(pack.train_recon_losses, 100.0 - pack.tau)),
            "loss threshold disagrees with the training losses at tau");
}

DetectorPack fit_gate(std::span<const ImageTensor> images, double tau, const GateConfig& config,
                      const Embedder& embedder,
                      std::span<const std::vector<std::uint8_t>> encoded) {
  check_tau(tau);
  check_config(config);
  const std::size_t n = images.size();
  if (n < static_cast<std::size_t>(kMinReferenceImages)) {
    fail(ErrorCode::kInsufficientReference, "need at least " + std::to_string(kMinReferenceImages) +
                                                " reference images, got " + std::to_string(n));
  }
  if (!encoded.empty() && encoded.size() != n) {
    fail(ErrorCode::kInvalidArgument, "encoded payload count disagrees with image count");
  }

  const auto order = shuffled_indices(n, config.seed);
  const auto split = static_cast<std::size_t>(std::floor(config.split_fraction * static_cast<double>(n)));
  const std::size_t n_holdout = std::max(n - std::min(split, n), static_cast<std::size_t>(kMinHoldout));
  const std::size_t n_fit = n - n_holdout;

  std::vector<FeatureVector> features(n);
  std::vector<Vector> embeddings(n);
  parallel_for(n, default_workers(), [&](std::size_t i) {
    features[i] = extract_fof(to_grayscale(images[order[i]]));
  });
  parallel_for(n, embedder.parallelism(), [&](std::size_t i) {
    const std::size_t src = order[i];
    embeddings[i] = encoded.empty() ? embedder.embed(images[src]).values
                                    : embedder.embed(images[src], encoded[src]).values;
  });

  const int dim = embedder.spec().dimension;
  Matrix fof_fit(static_cast<Eigen::Index>(n_fit), kFofDim);
  Matrix emb_fit(static_cast<Eigen::Index>(n_fit), dim);
  Matrix emb_hold(static_cast<Eigen::Index>(n_holdout), dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (embeddings[i].size() != dim) fail(ErrorCode::kDimensionMismatch, "embedding dimension changed");
    if (i < n_fit) {
      fof_fit.row(static_cast<Eigen::Index>(i)) = to_vector(features[i]).transpose();
      emb_fit.row(static_cast<Eigen::Index>(i)) = embeddings[i].transpose();
    } else {
      emb_hold.row(static_cast<Eigen::Index>(i - n_fit)) = embeddings[i].transpose();
    }
  }

  DetectorPack pack;
  pack.created_at = config.created_at;
  pack.tau = tau;
  pack.combine = config.combine;
  pack.config = config;
  pack.embedder = embedder.spec();
  pack.n_reference = static_cast<int>(n);
  pack.n_fit = static_cast<int>(n_fit);
  pack.n_holdout = static_cast<int>(n_holdout);

  GmmFitConfig gmm_config;
  gmm_config.k_max = config.k_max;
  gmm_config.em.max_iter = config.em_max_iter;
  gmm_config.em.rel_tol = config.em_rel_tol;
  gmm_config.em.n_init = config.em_n_init;
  gmm_config.em.covariance = config.covariance;
  gmm_config.em.seed = derive_seed(config.seed, kEmStream);
  GmmFitResult gmm = fit_gmm_detector(fof_fit, tau, gmm_config);
  pack.gmm = std::move(gmm.detector);
  pack.gmm_bic = std::move(gmm.bic);
  pack.train_gmm_logliks = std::move(gmm.train_logliks);
  pack.train_features.assign(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(n_fit));

  const std::vector<int> candidates = config.r_candidates.empty()
                                          ? default_r_candidates(static_cast<int>(n_fit), dim)
                                          : config.r_candidates;
  pack.sweep = sweep_r(emb_fit, emb_hold, candidates, tau);
  pack.config.r_candidates = candidates;
  pack.subspace = pca_fit(emb_fit, pack.sweep.r_star);
  pack.subspace.tau = tau;
  pack.train_recon_losses = recon_losses(pack.subspace, emb_fit);
  pack.subspace.loss_threshold = fit_loss_threshold(pack.train_recon_losses, tau);
  return pack;
}

DetectorPack fit_gate(std::span<const ImageTensor> images, double tau, const GateConfig& config,
                      const EmbedderSpec& embedder_spec) {
  const auto embedder = make_embedder(embedder_spec);
  return fit_gate(images, tau, config, *embedder);
}

DetectorPack rethreshold(const DetectorPack& pack, double new_tau) {
  check_tau(new_tau);
  DetectorPack out = pack;
  out.tau = new_tau;
  out.gmm.tau = new_tau;
  out.gmm.loglik_threshold = percentile(out.train_gmm_logliks, new_tau);
  out.subspace.tau = new_tau;
  out.subspace.loss_threshold = fit_loss_threshold(out.train_recon_losses, new_tau);
  return out;
}

Gate::Gate(std::shared_ptr<const DetectorPack> pack, const RemoteOptions& remote)
    : pack_(std::move(pack)) {
  if (!pack_) fail(ErrorCode::kInvalidArgument, "null pack");
  embedder_ = make_embedder(pack_->embedder, remote);
}

Gate::Gate(std::shared_ptr<const DetectorPack> pack, std::shared_ptr<const Embedder> embedder)
    : pack_(std::move(pack)), embedder_(std::move(embedder)) {
  if (!pack_ || !embedder_) fail(ErrorCode::kInvalidArgument, "null pack or embedder");
  if (embedder_->spec().dimension != pack_->embedder.dimension) {
    fail(ErrorCode::kDimensionMismatch, "embedder dimension disagrees with the pack");
  }
}

Verdict Gate::score(const ImageTensor& img, std::span<const std::uint8_t> encoded) const {
  validate(img);
  const DetectorPack& pack = *pack_;
  Verdict v;
  v.features = extract_fof(to_grayscale(img));
  const GmmScore g = score_gmm(pack.gmm, to_vector(v.features));
  v.gmm_loglik = g.loglik;
  v.gmm_flag = g.flag;
  v.gmm_margin = g.loglik - pack.gmm.loglik_threshold;
  try {
    const EmbeddingVector e = embedder_->embed(img, encoded);
    const double loss = recon_loss(pack.subspace, e.values);
    v.recon_loss = loss;
    v.embed_flag = loss > pack.subspace.loss_threshold;
    v.embed_margin = loss - pack.subspace.loss_threshold;
    v.outlier = combine(pack.combine, v.gmm_flag, *v.embed_flag);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kEmbedderUnavailable) throw;
    v.degraded = true;
    v.outlier = v.gmm_flag;
  }
  return v;
}

Verdict score(const DetectorPack& pack, const ImageTensor& img) {
  return Gate(std::make_shared<const DetectorPack>(pack)).score(img);
}

}  // namespace odgate

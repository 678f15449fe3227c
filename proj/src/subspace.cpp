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

#include "odgate/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "odgate/error.hpp"
#include "odgate/percentile.hpp"

namespace odgate {

void validate(const SubspaceModel& model) {
  const int d = model.dimension();
  const int r = model.rank();
  if (d < 1 || r < 1) fail(ErrorCode::kInvariantViolation, "subspace needs r >= 1 and D >= 1");
  if (model.components.cols() != d) {
    fail(ErrorCode::kInvariantViolation, "component width disagrees with the mean");
  }
  if (r > d) fail(ErrorCode::kInvariantViolation, "more components than dimensions");
  if (!model.mean.allFinite() || !model.components.allFinite()) {
    fail(ErrorCode::kInvariantViolation, "subspace parameters must be finite");
  }
  const Matrix gram = model.components * model.components.transpose();
  if ((gram - Matrix::Identity(r, r)).cwiseAbs().maxCoeff() > 1e-8) {
    fail(ErrorCode::kInvariantViolation, "subspace components are not orthonormal");
  }
  if (!(std::isfinite(model.loss_threshold) && model.loss_threshold >= 0.0)) {
    fail(ErrorCode::kInvariantViolation, "loss threshold must be finite and non-negative");
  }
}

PcaFit pca_fit_detailed(const Matrix& embeddings, int r) {
  const auto n = embeddings.rows();
  const auto d = embeddings.cols();
  if (n < 2) fail(ErrorCode::kTooFewSamples, "PCA needs at least 2 samples");
  if (r < 1 || r > std::min<Eigen::Index>(n - 1, d)) {
    fail(ErrorCode::kInvalidArgument,
         "r=" + std::to_string(r) + " outside [1, min(n-1, D)]");
  }
  if (!embeddings.allFinite()) fail(ErrorCode::kNonFinite, "embeddings contain non-finite values");

  PcaFit out;
  out.requested_r = r;
  out.model.mean = embeddings.colwise().mean().transpose();
  const Matrix centered = embeddings.rowwise() - out.model.mean.transpose();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  out.singular_values = svd.singularValues();

  int rank = 0;
  const double sigma_max = out.singular_values.size() > 0 ? out.singular_values[0] : 0.0;
  for (Eigen::Index j = 0; j < out.singular_values.size(); ++j) {
    if (out.singular_values[j] >= 1e-10 * sigma_max && sigma_max > 0.0) ++rank;
  }
  int kept = r;
  if (kept > rank) {
    kept = std::max(rank, 1);
    out.clamped = true;
  }

  out.model.components = svd.matrixV().leftCols(kept).transpose();
  for (int i = 0; i < kept; ++i) {
    Eigen::Index arg = 0;
    out.model.components.row(i).cwiseAbs().maxCoeff(&arg);
    if (out.model.components(i, arg) < 0.0) out.model.components.row(i) *= -1.0;
  }
  return out;
}

SubspaceModel pca_fit(const Matrix& embeddings, int r) {
  return pca_fit_detailed(embeddings, r).model;
}

double recon_loss(const SubspaceModel& model, const Vector& x) {
  if (x.size() != model.dimension()) {
    fail(ErrorCode::kDimensionMismatch, "embedding length disagrees with the subspace model");
  }
  const Vector c = x - model.mean;
  const Vector proj = model.components * c;
  return std::max(c.squaredNorm() - proj.squaredNorm(), 0.0);
}

std::vector<double> recon_losses(const SubspaceModel& model, const Matrix& data) {
  if (data.cols() != model.dimension()) {
    fail(ErrorCode::kDimensionMismatch, "embedding width disagrees with the subspace model");
  }
  const Matrix centered = data.rowwise() - model.mean.transpose();
  const Matrix proj = centered * model.components.transpose();
  std::vector<double> out(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    out[i] = std::max(centered.row(i).squaredNorm() - proj.row(i).squaredNorm(), 0.0);
  }
  return out;
}

double fit_loss_threshold(std::span<const double> train_losses, double tau) {
  if (train_losses.size() < 20) {
    fail(ErrorCode::kTooFewSamples, "loss threshold needs at least 20 samples");
  }
  check_tau(tau);
  return percentile(train_losses, 100.0 - tau);
}

namespace {

double flagged_fraction(const std::vector<double>& losses, double threshold) {
  const auto flagged = std::count_if(losses.begin(), losses.end(),
                                     [threshold](double l) { return l > threshold; });
  return static_cast<double>(flagged) / static_cast<double>(losses.size());
}

}  // namespace

SweepResult sweep_r(const Matrix& train, const Matrix& test, std::span<const int> candidates,
                    double tau) {
  if (candidates.empty()) fail(ErrorCode::kInvalidArgument, "no r candidates");
  if (test.rows() < 20) fail(ErrorCode::kTooFewSamples, "sweep needs at least 20 test samples");
  if (test.cols() != train.cols()) {
    fail(ErrorCode::kDimensionMismatch, "train and test embeddings differ in width");
  }
  const auto limit = std::min<Eigen::Index>(train.rows() - 1, train.cols());
  std::vector<int> rs(candidates.begin(), candidates.end());
  for (int r : rs) {
    if (r < 1 || r > limit) {
      fail(ErrorCode::kInvalidArgument, "candidate r=" + std::to_string(r) + " outside [1, " +
                                            std::to_string(limit) + "]");
    }
  }
  std::sort(rs.begin(), rs.end());
  rs.erase(std::unique(rs.begin(), rs.end()), rs.end());

  SweepResult out;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int r : rs) {
    const PcaFit fit = pca_fit_detailed(train, r);
    const std::vector<double> train_losses = recon_losses(fit.model, train);
    const double threshold = fit_loss_threshold(train_losses, tau);
    SweepRow row;
    row.r = r;
    row.r_effective = fit.model.rank();
    row.p_train = flagged_fraction(train_losses, threshold);
    row.p_test = flagged_fraction(recon_losses(fit.model, test), threshold);
    const double gap = std::abs(row.p_test - row.p_train);
    if (gap < best_gap) {
      best_gap = gap;
      out.r_star = r;
    }
    out.table.push_back(row);
  }
  return out;
}

std::vector<int> default_r_candidates(int n, int dimension) {
  const int limit = std::min(n - 1, dimension);
  std::vector<int> out;
  for (int r : {2, 4, 8, 16, 32, 64, limit}) {
    if (r >= 1 && r <= limit) out.push_back(r);
  }
  if (out.empty() && limit >= 1) out.push_back(1);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace odgate

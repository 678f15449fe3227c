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
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace odgate {

using Matrix = Eigen::MatrixXd;  // rows are samples
using Vector = Eigen::VectorXd;

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kWeightUnderflow = 1e-9;

/// Per-feature centering and scaling fitted on the reference set.
struct Standardizer {
  Vector mean;
  Vector std;  // strictly positive; zero-spread columns are stored as 1

  Vector apply(const Vector& x) const;
  Matrix apply(const Matrix& data) const;
};

/// Sample mean and sample standard deviation (divisor n-1) per column.
/// Columns whose deviation is below 1e-12 get std = 1.
Standardizer standardize_fit(const Matrix& data);

enum class CovarianceType { kDiagonal, kFull };

struct EmConfig {
  int max_iter = 200;
  double rel_tol = 1e-6;
  int n_init = 4;
  std::uint64_t seed = 0;
  CovarianceType covariance = CovarianceType::kDiagonal;
};

struct GmmParams {
  CovarianceType covariance_type = CovarianceType::kDiagonal;
  Vector weights;               // K
  Matrix means;                 // K x d
  Matrix variances;             // K x d; the diagonal in kFull mode
  std::vector<Matrix> full;     // K matrices d x d, kFull mode only

  int components() const { return static_cast<int>(weights.size()); }
  int dimension() const { return static_cast<int>(means.cols()); }
};

/// Throws InvariantViolation when weights, shapes or variance floors are off.
void validate(const GmmParams& params);

/// One EM run from one seed.
struct EmTrace {
  std::vector<double> total_loglik;  // after each E-step, starting with the initial parameters
  std::vector<std::size_t> reseed_at;  // trace positions directly after a component re-seed
  bool converged = false;
  bool failed = false;
};

struct EmResult {
  GmmParams params;
  double total_loglik = 0.0;
  int best_restart = 0;
  std::vector<EmTrace> restarts;
};

/// EM for a K-component mixture with k-means++ seeded means. Runs
/// config.n_init restarts and keeps the highest final likelihood (ties go to
/// the earliest restart).
EmResult em_fit_detailed(const Matrix& data, int k, const EmConfig& config);

GmmParams em_fit(const Matrix& data, int k, const EmConfig& config);

/// log sum_k w_k N(x; mu_k, Sigma_k), via log-sum-exp.
double log_likelihood(const GmmParams& params, const Vector& x);

/// Row-wise log_likelihood, sharing per-component precomputation.
std::vector<double> log_likelihoods(const GmmParams& params, const Matrix& data);

/// Free parameter count used by the BIC.
int parameter_count(int k, int d, CovarianceType covariance);

struct BicResult {
  int best_k = 1;
  std::vector<double> bic;  // index K-1; +inf when that K failed to fit
  std::vector<std::optional<GmmParams>> fits;
};

/// Fits K = 1..k_max, BIC = -2 L + p ln n, smallest K wins ties.
/// Requires n > 2 (2d + 1).
BicResult select_k_bic_detailed(const Matrix& data, int k_max, const EmConfig& config);

int select_k_bic(const Matrix& data, int k_max, const EmConfig& config);

struct GmmDetector {
  Standardizer standardizer;
  GmmParams params;
  double loglik_threshold = 0.0;
  double tau = 5.0;
};

struct GmmFitConfig {
  EmConfig em;
  int k_max = 5;
};

struct GmmFitResult {
  GmmDetector detector;
  std::vector<double> train_logliks;
  std::vector<double> bic;  // empty when K was not selected by BIC
};

/// Standardize, choose K by BIC, fit, and set the threshold at the tau-th
/// percentile of the training log-likelihoods.
GmmFitResult fit_gmm_detector(const Matrix& train, double tau, const GmmFitConfig& config);

struct GmmScore {
  double loglik = 0.0;
  bool flag = false;
};

GmmScore score_gmm(const GmmDetector& detector, const Vector& raw_features);

}  // namespace odgate

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

#include "odgate/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "odgate/error.hpp"
#include "odgate/percentile.hpp"
#include "odgate/prng.hpp"

namespace odgate {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2 pi)
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(const Matrix& data, const char* what) {
  if (!data.allFinite()) fail(ErrorCode::kNonFinite, std::string(what) + " contains non-finite values");
}

// Per-component constants for evaluating log N(x; mu_k, Sigma_k).
class Densities {
 public:
  explicit Densities(const GmmParams& p) : p_(p) {
    const int k = p.components();
    const int d = p.dimension();
    log_weight_.resize(k);
    log_norm_.resize(k);
    for (int c = 0; c < k; ++c) {
      log_weight_[c] = p.weights[c] > 0.0 ? std::log(p.weights[c]) : -kInf;
      if (p.covariance_type == CovarianceType::kDiagonal) {
        log_norm_[c] = -0.5 * (d * kLog2Pi + p.variances.row(c).array().log().sum());
      } else {
        chol_.emplace_back(p.full[c]);
        if (chol_.back().info() != Eigen::Success) {
          fail(ErrorCode::kInvariantViolation, "covariance is not positive definite");
        }
        const Matrix& l = chol_.back().matrixL();
        log_norm_[c] = -0.5 * (d * kLog2Pi) - l.diagonal().array().log().sum();
      }
    }
  }

  // log w_c + log N(x; component c)
  double weighted(int c, const Eigen::Ref<const Vector>& x) const {
    if (p_.covariance_type == CovarianceType::kDiagonal) {
      const auto diff = x.transpose() - p_.means.row(c);
      const double maha = (diff.array().square() / p_.variances.row(c).array()).sum();
      return log_weight_[c] + log_norm_[c] - 0.5 * maha;
    }
    const Vector diff = x - p_.means.row(c).transpose();
    const Vector z = chol_[static_cast<std::size_t>(c)].matrixL().solve(diff);
    return log_weight_[c] + log_norm_[c] - 0.5 * z.squaredNorm();
  }

  // Fills `out` with the weighted log densities and returns their log-sum-exp.
  double evaluate(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> out) const {
    double hi = -kInf;
    for (int c = 0; c < p_.components(); ++c) {
      out[c] = weighted(c, x);
      hi = std::max(hi, out[c]);
    }
    if (!std::isfinite(hi)) return hi;
    double acc = 0.0;
    for (int c = 0; c < p_.components(); ++c) acc += std::exp(out[c] - hi);
    return hi + std::log(acc);
  }

 private:
  const GmmParams& p_;
  std::vector<double> log_weight_;
  std::vector<double> log_norm_;
  std::vector<Eigen::LLT<Matrix>> chol_;
};

Vector column_population_variance(const Matrix& data) {
  const Vector mean = data.colwise().mean();
  return ((data.rowwise() - mean.transpose()).array().square().colwise().sum() /
          static_cast<double>(data.rows()))
      .matrix()
      .transpose();
}

Matrix floored_full(Matrix cov) {
  const auto d = cov.rows();
  for (Eigen::Index j = 0; j < d; ++j) cov(j, j) = std::max(cov(j, j), kVarianceFloor);
  double jitter = kVarianceFloor;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() == Eigen::Success) return cov;
    cov.diagonal().array() += jitter;
    jitter *= 10.0;
  }
  fail(ErrorCode::kDegenerateFit, "covariance could not be regularized to positive definite");
}

Matrix kmeanspp_means(const Matrix& data, int k, Rng& rng) {
  const auto n = data.rows();
  Matrix means(k, data.cols());
  std::vector<double> dist2(static_cast<std::size_t>(n), kInf);
  auto first = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
  means.row(0) = data.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d2 = (data.row(i) - means.row(c - 1)).squaredNorm();
      dist2[i] = std::min(dist2[i], d2);
      total += dist2[i];
    }
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc > target && dist2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    means.row(c) = data.row(pick);
  }
  return means;
}

struct RunOutcome {
  GmmParams params;
  double total = -kInf;
  EmTrace trace;
};

// E-step: responsibilities into `resp` (n x K), per-sample log-likelihood into
// `sample_ll`; returns the total.
double e_step(const GmmParams& params, const Matrix& data, Matrix& resp, Vector& sample_ll) {
  const Densities dens(params);
  const auto n = data.rows();
  const int k = params.components();
  Vector scratch(k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ll = dens.evaluate(data.row(i).transpose(), scratch);
    if (!std::isfinite(ll)) fail(ErrorCode::kNonFinite, "non-finite log-likelihood during EM");
    sample_ll[i] = ll;
    for (int c = 0; c < k; ++c) resp(i, c) = std::exp(scratch[c] - ll);
    total += ll;
  }
  return total;
}

void reseed_component(GmmParams& params, int c, const Matrix& data, const Vector& sample_ll,
                      const Vector& data_var) {
  Eigen::Index worst = 0;
  sample_ll.minCoeff(&worst);
  const int k = params.components();
  params.means.row(c) = data.row(worst);
  params.variances.row(c) = data_var.transpose();
  if (params.covariance_type == CovarianceType::kFull) {
    params.full[static_cast<std::size_t>(c)] = data_var.asDiagonal();
  }
  params.weights[c] = 1.0 / k;
  params.weights /= params.weights.sum();
}

// M-step. Returns the index of a component whose weight underflowed, or -1.
int m_step(GmmParams& params, const Matrix& data, const Matrix& resp) {
  const auto n = data.rows();
  const auto d = data.cols();
  const int k = params.components();
  const Vector nk = resp.colwise().sum().transpose();
  for (int c = 0; c < k; ++c) {
    if (!(nk[c] / static_cast<double>(n) >= kWeightUnderflow)) return c;
  }
  for (int c = 0; c < k; ++c) {
    params.weights[c] = nk[c] / static_cast<double>(n);
    const Vector mean = (data.transpose() * resp.col(c)) / nk[c];
    params.means.row(c) = mean.transpose();
    const Matrix centered = data.rowwise() - mean.transpose();
    if (params.covariance_type == CovarianceType::kDiagonal) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double var = (centered.col(j).array().square() * resp.col(c).array()).sum() / nk[c];
        params.variances(c, j) = std::max(var, kVarianceFloor);
      }
    } else {
      const Matrix cov =
          (centered.transpose() * resp.col(c).asDiagonal() * centered) / nk[c];
      params.full[static_cast<std::size_t>(c)] = floored_full(cov);
      params.variances.row(c) = params.full[static_cast<std::size_t>(c)].diagonal().transpose();
    }
  }
  params.weights /= params.weights.sum();
  return -1;
}

RunOutcome run_em(const Matrix& data, int k, const EmConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  const auto n = data.rows();
  const Vector data_var = column_population_variance(data).cwiseMax(kVarianceFloor);

  RunOutcome out;
  GmmParams& p = out.params;
  p.covariance_type = config.covariance;
  p.weights = Vector::Constant(k, 1.0 / k);
  p.means = kmeanspp_means(data, k, rng);
  p.variances = data_var.transpose().replicate(k, 1);
  if (config.covariance == CovarianceType::kFull) {
    p.full.assign(static_cast<std::size_t>(k), Matrix(data_var.asDiagonal()));
  }

  Matrix resp(n, k);
  Vector sample_ll(n);
  double prev = e_step(p, data, resp, sample_ll);
  out.trace.total_loglik.push_back(prev);
  bool reseeded = false;
  for (int it = 0; it < config.max_iter; ++it) {
    const int degenerate = m_step(p, data, resp);
    if (degenerate >= 0) {
      if (reseeded) {
        fail(ErrorCode::kDegenerateFit,
             "component " + std::to_string(degenerate) + " collapsed again after re-seeding");
      }
      reseeded = true;
      reseed_component(p, degenerate, data, sample_ll, data_var);
      prev = e_step(p, data, resp, sample_ll);
      out.trace.reseed_at.push_back(out.trace.total_loglik.size());
      out.trace.total_loglik.push_back(prev);
      continue;
    }
    const double cur = e_step(p, data, resp, sample_ll);
    out.trace.total_loglik.push_back(cur);
    if (std::abs(cur - prev) < config.rel_tol * std::abs(prev)) {
      out.trace.converged = true;
      prev = cur;
      break;
    }
    prev = cur;
  }
  out.total = prev;
  return out;
}

}  // namespace

Vector Standardizer::apply(const Vector& x) const {
  return (x - mean).cwiseQuotient(std);
}

Matrix Standardizer::apply(const Matrix& data) const {
  return (data.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

Standardizer standardize_fit(const Matrix& data) {
  if (data.rows() < 2) fail(ErrorCode::kTooFewSamples, "standardizer needs at least 2 samples");
  require_finite(data, "standardizer input");
  Standardizer s;
  s.mean = data.colwise().mean().transpose();
  const double denom = static_cast<double>(data.rows() - 1);
  s.std = ((data.rowwise() - s.mean.transpose()).array().square().colwise().sum() / denom)
              .sqrt()
              .matrix()
              .transpose();
  for (Eigen::Index j = 0; j < s.std.size(); ++j) {
    if (!(s.std[j] > 1e-12)) s.std[j] = 1.0;
  }
  return s;
}

void validate(const GmmParams& p) {
  const int k = p.components();
  const int d = p.dimension();
  if (k < 1 || d < 1) fail(ErrorCode::kInvariantViolation, "GMM needs K >= 1 and d >= 1");
  if (p.means.rows() != k || p.variances.rows() != k || p.variances.cols() != d) {
    fail(ErrorCode::kInvariantViolation, "GMM parameter shapes disagree");
  }
  if (!p.weights.allFinite() || !p.means.allFinite() || !p.variances.allFinite()) {
    fail(ErrorCode::kInvariantViolation, "GMM parameters must be finite");
  }
  if ((p.weights.array() < 0.0).any() || std::abs(p.weights.sum() - 1.0) > 1e-9) {
    fail(ErrorCode::kInvariantViolation, "GMM weights must be non-negative and sum to 1");
  }
  if ((p.variances.array() < kVarianceFloor).any()) {
    fail(ErrorCode::kInvariantViolation, "GMM variance below floor");
  }
  if (p.covariance_type == CovarianceType::kFull) {
    if (p.full.size() != static_cast<std::size_t>(k)) {
      fail(ErrorCode::kInvariantViolation, "full covariance count disagrees with K");
    }
    for (const Matrix& cov : p.full) {
      if (cov.rows() != d || cov.cols() != d || !cov.allFinite()) {
        fail(ErrorCode::kInvariantViolation, "full covariance has wrong shape");
      }
      if (!cov.isApprox(cov.transpose(), 1e-12)) {
        fail(ErrorCode::kInvariantViolation, "full covariance is not symmetric");
      }
      if (Eigen::LLT<Matrix>(cov).info() != Eigen::Success) {
        fail(ErrorCode::kInvariantViolation, "full covariance is not positive definite");
      }
    }
  }
}

EmResult em_fit_detailed(const Matrix& data, int k, const EmConfig& config) {
  if (k < 1) fail(ErrorCode::kInvalidArgument, "K must be at least 1");
  if (data.rows() < k) {
    fail(ErrorCode::kTooFewSamples, "EM needs at least K samples");
  }
  if (data.cols() < 1) fail(ErrorCode::kInvalidArgument, "EM needs at least one feature");
  require_finite(data, "EM input");
  if (config.n_init < 1 || config.max_iter < 1) {
    fail(ErrorCode::kInvalidArgument, "n_init and max_iter must be positive");
  }

  EmResult result;
  result.total_loglik = -kInf;
  result.best_restart = -1;
  std::string last_error;
  for (int r = 0; r < config.n_init; ++r) {
    try {
      RunOutcome run = run_em(data, k, config, derive_seed(config.seed, static_cast<std::uint64_t>(r)));
      if (run.total > result.total_loglik) {
        result.total_loglik = run.total;
        result.params = std::move(run.params);
        result.best_restart = r;
      }
      result.restarts.push_back(std::move(run.trace));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateFit && e.code() != ErrorCode::kNonFinite) throw;
      last_error = e.what();
      EmTrace failed;
      failed.failed = true;
      result.restarts.push_back(std::move(failed));
    }
  }
  if (result.best_restart < 0) {
    fail(ErrorCode::kDegenerateFit, "every EM restart failed: " + last_error);
  }
  return result;
}

GmmParams em_fit(const Matrix& data, int k, const EmConfig& config) {
  return em_fit_detailed(data, k, config).params;
}

double log_likelihood(const GmmParams& params, const Vector& x) {
  if (x.size() != params.dimension()) {
    fail(ErrorCode::kDimensionMismatch, "feature vector length disagrees with the GMM");
  }
  if (!x.allFinite()) fail(ErrorCode::kNonFinite, "non-finite feature vector");
  const Densities dens(params);
  Vector scratch(params.components());
  return dens.evaluate(x, scratch);
}

std::vector<double> log_likelihoods(const GmmParams& params, const Matrix& data) {
  if (data.cols() != params.dimension()) {
    fail(ErrorCode::kDimensionMismatch, "feature matrix width disagrees with the GMM");
  }
  require_finite(data, "scored features");
  const Densities dens(params);
  Vector scratch(params.components());
  std::vector<double> out(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index i = 0; i < data.rows(); ++i) out[i] = dens.evaluate(data.row(i).transpose(), scratch);
  return out;
}

int parameter_count(int k, int d, CovarianceType covariance) {
  const int per_component = covariance == CovarianceType::kDiagonal ? 2 * d + 1 : d + d * (d + 1) / 2 + 1;
  return k * per_component - 1;
}

BicResult select_k_bic_detailed(const Matrix& data, int k_max, const EmConfig& config) {
  const auto n = data.rows();
  const auto d = data.cols();
  if (k_max < 1) fail(ErrorCode::kInvalidArgument, "k_max must be at least 1");
  if (!(n > 2 * (2 * d + 1))) {
    fail(ErrorCode::kTooFewSamples,
         "BIC selection needs more than " + std::to_string(2 * (2 * d + 1)) + " samples");
  }
  BicResult out;
  out.bic.assign(static_cast<std::size_t>(k_max), kInf);
  out.fits.resize(static_cast<std::size_t>(k_max));
  double best = kInf;
  for (int k = 1; k <= k_max && k <= n; ++k) {
    try {
      EmResult fit = em_fit_detailed(data, k, config);
      const double bic = -2.0 * fit.total_loglik +
                         parameter_count(k, static_cast<int>(d), config.covariance) *
                             std::log(static_cast<double>(n));
      out.bic[k - 1] = bic;
      out.fits[k - 1] = std::move(fit.params);
      if (bic < best) {
        best = bic;
        out.best_k = k;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateFit || k == 1) throw;
    }
  }
  return out;
}

int select_k_bic(const Matrix& data, int k_max, const EmConfig& config) {
  return select_k_bic_detailed(data, k_max, config).best_k;
}

GmmFitResult fit_gmm_detector(const Matrix& train, double tau, const GmmFitConfig& config) {
  if (train.rows() < 20) fail(ErrorCode::kTooFewSamples, "GMM detector needs at least 20 samples");
  check_tau(tau);
  GmmFitResult out;
  GmmDetector& det = out.detector;
  det.tau = tau;
  det.standardizer = standardize_fit(train);
  const Matrix z = det.standardizer.apply(train);

  const auto d = z.cols();
  if (z.rows() > 2 * (2 * d + 1)) {
    BicResult sel = select_k_bic_detailed(z, config.k_max, config.em);
    det.params = std::move(*sel.fits[static_cast<std::size_t>(sel.best_k - 1)]);
    out.bic = std::move(sel.bic);
  } else {
    // Too few samples to compare mixtures; a single Gaussian is the only
    // model the data can support.
    det.params = em_fit(z, 1, config.em);
  }
  out.train_logliks = log_likelihoods(det.params, z);
  det.loglik_threshold = percentile(out.train_logliks, tau);
  if (!std::isfinite(det.loglik_threshold)) {
    fail(ErrorCode::kNonFinite, "log-likelihood threshold is not finite");
  }
  return out;
}

GmmScore score_gmm(const GmmDetector& detector, const Vector& raw_features) {
  if (!raw_features.allFinite()) fail(ErrorCode::kNonFinite, "non-finite feature vector");
  GmmScore s;
  s.loglik = log_likelihood(detector.params, detector.standardizer.apply(raw_features));
  s.flag = s.loglik < detector.loglik_threshold;
  return s;
}

}  // namespace odgate

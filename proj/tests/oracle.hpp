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

// Independent reference implementations used to cross-check the library.
// Plain loops over std::vector, long double accumulation, no Eigen.

#pragma once

#include <cstdint>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

struct Fof {
  double mean, variance, median, min, max, entropy, uniformity, skewness, kurtosis_excess;
};

// Moments, histogram and median computed directly from the pixel list.
Fof fof(std::vector<double> pixels, int bins = 64);

// Sort, then interpolate linearly at position (n-1) q / 100.
double percentile(std::vector<double> values, double q);

struct Eigen {
  std::vector<double> values;  // descending
  Rows vectors;                // vectors[j] pairs with values[j]
};

// Cyclic Jacobi rotations on a symmetric matrix.
Eigen jacobi(Rows a);

std::vector<double> column_mean(const Rows& x);
// Covariance with the given divisor.
Rows covariance(const Rows& x, double divisor);

struct Pca {
  std::vector<double> mean;
  Rows components;  // r rows, largest-magnitude entry positive
  std::vector<double> eigenvalues;  // all, descending, divisor n-1
};

Pca pca(const Rows& x, int r);

// ||x - mean - P^T P (x - mean)||^2 by explicit reconstruction.
double recon_loss(const Pca& model, const std::vector<double>& x);

struct SweepRow {
  int r;
  double p_train;
  double p_test;
};

struct Sweep {
  int r_star;
  std::vector<SweepRow> table;
};

Sweep sweep(const Rows& train, const Rows& test, const std::vector<int>& candidates, double tau);

// log sum_k w_k N(x; mu_k, diag(var_k)) summed directly in long double.
double mixture_loglik(const std::vector<double>& weights, const Rows& means, const Rows& variances,
                      const std::vector<double>& x);

struct Em1d {
  std::vector<double> weights, means, variances;
  double loglik;
};

// Plain 1-D EM started from the given means, unit variances, equal weights.
Em1d em_1d(const std::vector<double>& x, std::vector<double> init_means, int iterations);

// Random orthogonal D x D matrix (Gram-Schmidt on seeded normals).
Rows random_orthogonal(int d, std::uint64_t seed);

}  // namespace oracle

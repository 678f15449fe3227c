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

#include <span>
#include <vector>

#include "odgate/gmm.hpp"

namespace odgate {

/// Principal subspace of reference embeddings plus its loss threshold.
struct SubspaceModel {
  Vector mean;        // D
  Matrix components;  // r x D, orthonormal rows, descending variance
  double loss_threshold = 0.0;
  double tau = 5.0;

  int rank() const { return static_cast<int>(components.rows()); }
  int dimension() const { return static_cast<int>(mean.size()); }
};

/// Throws InvariantViolation on shape, orthonormality (1e-8) or threshold
/// problems.
void validate(const SubspaceModel& model);

struct PcaFit {
  SubspaceModel model;  // loss_threshold unset
  int requested_r = 0;
  bool clamped = false;  // r exceeded the numerical rank and was reduced
  Vector singular_values;
};

/// Centers the rows and keeps the top-r right singular vectors. Every axis
/// is signed so that its largest-magnitude entry is positive. Singular values
/// below 1e-10 * sigma_max do not count toward the numerical rank.
PcaFit pca_fit_detailed(const Matrix& embeddings, int r);

SubspaceModel pca_fit(const Matrix& embeddings, int r);

/// ||c||^2 - ||P c||^2 with c = x - mean, clamped at 0.
double recon_loss(const SubspaceModel& model, const Vector& x);

std::vector<double> recon_losses(const SubspaceModel& model, const Matrix& data);

/// (100 - tau)-th percentile of the training losses. Samples above it are
/// flagged.
double fit_loss_threshold(std::span<const double> train_losses, double tau);

struct SweepRow {
  int r = 0;            // requested
  int r_effective = 0;  // after numerical-rank clamping
  double p_train = 0.0;
  double p_test = 0.0;
};

struct SweepResult {
  int r_star = 0;
  std::vector<SweepRow> table;
};

/// Picks r whose test flag rate is closest to its train flag rate; ties go
/// to the smallest r. Candidates are evaluated in ascending order.
SweepResult sweep_r(const Matrix& train, const Matrix& test, std::span<const int> candidates,
                    double tau);

/// {2, 4, 8, 16, 32, 64, min(n-1, D)} restricted to [1, min(n-1, D)].
std::vector<int> default_r_candidates(int n, int dimension);

}  // namespace odgate

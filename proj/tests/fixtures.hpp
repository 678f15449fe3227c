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

// Shared data builders for unit and acceptance tests.

#pragma once

#include <cstdint>
#include <vector>

#include "odgate/gmm.hpp"
#include "odgate/prng.hpp"
#include "oracle.hpp"

namespace testing_util {

inline odgate::Matrix to_matrix(const oracle::Rows& rows) {
  odgate::Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

inline oracle::Rows to_rows(const odgate::Matrix& m) {
  oracle::Rows rows(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) rows[i][j] = m(i, j);
  return rows;
}

inline std::vector<double> to_std(const odgate::Vector& v) { return {v.data(), v.data() + v.size()}; }

// n x d matrix of N(0,1) entries from the library PRNG.
inline odgate::Matrix normal_matrix(int n, int d, std::uint64_t seed) {
  odgate::Rng rng(seed);
  odgate::Matrix m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
  return m;
}

struct Rank2Corpus {
  odgate::Matrix train;  // 200 x 8, near a 2-D plane
  odgate::Matrix test;   // 95 in-plane points, then 5 far off-plane
};

// Train: 3a u1 + 2b u2 plus 0.01-scale noise off the plane. Test: exact
// in-plane points and five points 10 units off the plane.
inline Rank2Corpus rank2_corpus(std::uint64_t seed = 2024) {
  const int d = 8;
  const oracle::Rows basis = oracle::random_orthogonal(d, seed);
  odgate::Rng rng(odgate::derive_seed(seed, 1));
  auto in_plane = [&](odgate::Vector& x) {
    const double a = 3.0 * rng.normal();
    const double b = 2.0 * rng.normal();
    for (int k = 0; k < d; ++k) x(k) = a * basis[0][k] + b * basis[1][k];
  };
  Rank2Corpus c{odgate::Matrix(200, d), odgate::Matrix(100, d)};
  for (int i = 0; i < 200; ++i) {
    odgate::Vector x(d);
    in_plane(x);
    for (int j = 2; j < d; ++j) {
      const double e = 0.01 * rng.normal();
      for (int k = 0; k < d; ++k) x(k) += e * basis[j][k];
    }
    c.train.row(i) = x.transpose();
  }
  for (int i = 0; i < 100; ++i) {
    odgate::Vector x(d);
    in_plane(x);
    if (i >= 95) {
      for (int k = 0; k < d; ++k) x(k) += 10.0 * basis[2 + (i - 95)][k];
    }
    c.test.row(i) = x.transpose();
  }
  return c;
}

}  // namespace testing_util

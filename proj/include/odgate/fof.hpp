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

#include <array>
#include <string_view>
#include <vector>

#include "odgate/image.hpp"

namespace odgate {

inline constexpr int kFofBins = 64;
inline constexpr int kFofDim = 9;

struct Histogram {
  int bin_count = 0;
  std::vector<double> probs;
};

/// Bin i covers [i/bin_count, (i+1)/bin_count); the last bin also holds 1.0.
Histogram histogram(const GrayImage& img, int bin_count);

/// First-order intensity statistics of one image, in a fixed order.
struct FeatureVector {
  enum Index {
    kMean,
    kVariance,
    kMedian,
    kMin,
    kMax,
    kEntropy,
    kUniformity,
    kSkewness,
    kKurtosisExcess,
  };

  std::array<double, kFofDim> values{};

  double operator[](int i) const { return values[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return values[static_cast<std::size_t>(i)]; }
};

/// Feature names in declared order.
const std::array<std::string_view, kFofDim>& fof_names();

/// Population moments, interpolated median, and entropy (bits) / uniformity
/// over the 64-bin histogram. Skewness and excess kurtosis are 0 when the
/// second central moment is below 1e-12.
FeatureVector extract_fof(const GrayImage& img);

}  // namespace odgate

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

#include "odgate/fof.hpp"

#include <algorithm>
#include <cmath>

#include "odgate/error.hpp"

namespace odgate {

const std::array<std::string_view, kFofDim>& fof_names() {
  static constexpr std::array<std::string_view, kFofDim> kNames = {
      "mean", "variance", "median", "min", "max",
      "entropy", "uniformity", "skewness", "kurtosis_excess"};
  return kNames;
}

Histogram histogram(const GrayImage& img, int bin_count) {
  if (img.values.empty()) fail(ErrorCode::kEmptyImage, "histogram of an empty image");
  if (bin_count < 2) fail(ErrorCode::kInvalidArgument, "bin_count must be at least 2");
  Histogram h;
  h.bin_count = bin_count;
  std::vector<std::size_t> counts(static_cast<std::size_t>(bin_count), 0);
  for (double v : img.values) {
    auto bin = static_cast<long>(std::floor(v * bin_count));
    bin = std::clamp<long>(bin, 0, bin_count - 1);
    ++counts[static_cast<std::size_t>(bin)];
  }
  const double n = static_cast<double>(img.values.size());
  h.probs.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) h.probs[i] = static_cast<double>(counts[i]) / n;
  return h;
}

FeatureVector extract_fof(const GrayImage& img) {
  if (img.values.empty()) fail(ErrorCode::kEmptyImage, "feature extraction on an empty image");
  const auto& v = img.values;
  const double n = static_cast<double>(v.size());

  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / n;

  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = x - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;

  std::vector<double> sorted(v);
  std::sort(sorted.begin(), sorted.end());
  const double rank = (n - 1.0) / 2.0;
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double median = sorted[lo] + (rank - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);

  const Histogram h = histogram(img, kFofBins);
  double entropy = 0.0, uniformity = 0.0;
  for (double p : h.probs) {
    if (p > 0.0) entropy -= p * std::log2(p);
    uniformity += p * p;
  }

  FeatureVector f;
  f[FeatureVector::kMean] = mean;
  f[FeatureVector::kVariance] = m2;
  f[FeatureVector::kMedian] = median;
  f[FeatureVector::kMin] = sorted.front();
  f[FeatureVector::kMax] = sorted.back();
  f[FeatureVector::kEntropy] = std::max(entropy, 0.0);
  f[FeatureVector::kUniformity] = uniformity;
  if (m2 >= 1e-12) {
    f[FeatureVector::kSkewness] = m3 / std::pow(m2, 1.5);
    f[FeatureVector::kKurtosisExcess] = m4 / (m2 * m2) - 3.0;
  }
  return f;
}

}  // namespace odgate

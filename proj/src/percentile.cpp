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

#include "odgate/percentile.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "odgate/error.hpp"

namespace odgate {

double percentile(std::span<const double> values, double q) {
  if (values.empty()) fail(ErrorCode::kTooFewSamples, "percentile of an empty sample");
  if (!(q >= 0.0 && q <= 100.0)) fail(ErrorCode::kInvalidArgument, "percentile outside [0,100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = static_cast<double>(sorted.size() - 1) * q / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

void check_tau(double tau) {
  if (!(tau > 0.0 && tau <= 50.0)) {
    fail(ErrorCode::kInvalidTau, "tau must lie in (0, 50], got " + std::to_string(tau));
  }
}

}  // namespace odgate

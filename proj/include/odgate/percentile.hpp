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

namespace odgate {

/// Empirical percentile q in [0, 100] by linear interpolation between the
/// closest ranks: position (n-1)*q/100 into the ascending sort.
double percentile(std::span<const double> values, double q);

/// Throws InvalidTau unless 0 < tau <= 50.
void check_tau(double tau);

}  // namespace odgate

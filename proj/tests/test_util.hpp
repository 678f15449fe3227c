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
#include <vector>

#include <gtest/gtest.h>

#include "odgate/error.hpp"
#include "odgate/fof.hpp"
#include "odgate/gmm.hpp"
#include "odgate/image.hpp"
#include "odgate/prng.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

namespace testing_util {

template <typename F>
void expect_code(odgate::ErrorCode code, F&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << odgate::error_code_name(code);
  } catch (const odgate::Error& e) {
    EXPECT_EQ(e.code(), code) << odgate::error_code_name(e.code()) << ": " << e.what();
  }
}

inline odgate::GrayImage gray(int w, int h, std::vector<double> values) {
  return odgate::GrayImage{w, h, std::move(values)};
}

inline odgate::ImageTensor tensor(int w, int h, int channels, std::vector<double> values) {
  return odgate::ImageTensor{w, h, channels, std::move(values)};
}

}  // namespace testing_util

// Copyright 2026 The mbrec Authors.
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

#include "mbrec/parameter.hpp"

namespace mbrec {

struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update over every parameter in the store.
/// step_index is 1-based. All gradients are checked for finiteness before any
/// value is touched; a non-finite gradient throws NumericError naming the
/// parameter and leaves the store unchanged.
void adam_step(ParameterStore& params, const AdamSettings& settings, std::int64_t step_index);

}  // namespace mbrec

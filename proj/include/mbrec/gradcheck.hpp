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

#include <functional>
#include <string>
#include <vector>

#include "mbrec/autograd.hpp"
#include "mbrec/parameter.hpp"

namespace mbrec {

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error: entries whose analytic and
  // numeric values are both below it are effectively judged absolutely.
  double denominator_floor = 1e-6;
  // Applied to the analytic gradients before comparison (fault injection).
  std::function<void(ParameterStore&)> corrupt_analytic;
};

struct ParameterCheck {
  std::string name;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  Index worst_entry = -1;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParameterCheck> parameters;
  double max_relative_error = 0.0;
  bool passed = true;

  const ParameterCheck* worst() const;
};

using LossBuilder = std::function<Var(Tape&)>;

/// Compares tape gradients of the loss built by `build` against central
/// differences (f(x+h) - f(x-h)) / 2h for every entry of every parameter.
/// Stop-gradient nodes are held at their base-point values while differencing,
/// so the numeric side measures the same derivative the tape computes.
/// Leaves analytic gradients in params[i].grad.
GradCheckReport finite_diff_check(const LossBuilder& build, ParameterStore& params,
                                  const GradCheckOptions& options = {});

/// Relative error used throughout: |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

}  // namespace mbrec

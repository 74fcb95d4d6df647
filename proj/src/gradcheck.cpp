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

#include "mbrec/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mbrec {

const ParameterCheck* GradCheckReport::worst() const {
  const ParameterCheck* best = nullptr;
  for (const auto& p : parameters) {
    if (best == nullptr || p.max_relative_error > best->max_relative_error) best = &p;
  }
  return best;
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

double evaluate(const LossBuilder& build, const std::vector<Matrix>& frozen) {
  Tape tape;
  tape.freeze_stop_gradients(frozen);
  Var loss = build(tape);
  if (loss.rows() != 1 || loss.cols() != 1) throw UsageError("finite_diff_check: loss is not scalar");
  return loss.scalar();
}

}  // namespace

GradCheckReport finite_diff_check(const LossBuilder& build, ParameterStore& params,
                                  const GradCheckOptions& options) {
  if (!(options.h > 0.0)) throw ConfigError("finite_diff_check: step h must be positive");

  params.zero_grad();
  std::vector<Matrix> frozen;
  double base = 0.0;
  {
    Tape tape;
    Var loss = build(tape);
    base = loss.scalar();
    frozen = tape.stop_gradient_values();
    tape.backward(loss);
  }
  if (options.corrupt_analytic) options.corrupt_analytic(params);

  const double again = evaluate(build, frozen);
  if (again != base) {
    throw VerificationError("loss function is not deterministic: " + std::to_string(base) + " vs " +
                            std::to_string(again));
  }

  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    ParameterCheck check;
    check.name = p.name;
    for (Index e = 0; e < p.value.size(); ++e) {
      double& slot = p.value.data()[e];
      const double saved = slot;
      slot = saved + options.h;
      const double up = evaluate(build, frozen);
      slot = saved - options.h;
      const double down = evaluate(build, frozen);
      slot = saved;
      const double numeric = (up - down) / (2.0 * options.h);
      const double analytic = p.grad.data()[e];
      const double rel = relative_error(analytic, numeric, options.denominator_floor);
      check.max_absolute_error = std::max(check.max_absolute_error, std::abs(analytic - numeric));
      if (rel > check.max_relative_error || check.worst_entry < 0) {
        if (rel >= check.max_relative_error) check.worst_entry = e;
        check.max_relative_error = std::max(check.max_relative_error, rel);
      }
    }
    check.passed = check.max_relative_error < options.tolerance;
    report.passed = report.passed && check.passed;
    report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
    report.parameters.push_back(std::move(check));
  }
  return report;
}

}  // namespace mbrec

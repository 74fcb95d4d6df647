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

#include "mbrec/optim.hpp"

#include <cmath>

namespace mbrec {

void adam_step(ParameterStore& params, const AdamSettings& settings, std::int64_t step_index) {
  if (step_index < 1) throw UsageError("adam_step: step_index is 1-based, got " + std::to_string(step_index));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].grad.allFinite()) {
      throw NumericError("non-finite gradient in parameter '" + params[i].name + "'");
    }
  }
  const double t = static_cast<double>(step_index);
  const double correction1 = 1.0 - std::pow(settings.beta1, t);
  const double correction2 = 1.0 - std::pow(settings.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    p.adam_m = settings.beta1 * p.adam_m + (1.0 - settings.beta1) * p.grad;
    p.adam_v = settings.beta2 * p.adam_v + (1.0 - settings.beta2) * p.grad.cwiseProduct(p.grad);
    if (settings.lr == 0.0) continue;
    const auto m_hat = p.adam_m.array() / correction1;
    const auto v_hat = p.adam_v.array() / correction2;
    p.value.array() -= settings.lr * m_hat / (v_hat.sqrt() + settings.eps);
  }
}

}  // namespace mbrec

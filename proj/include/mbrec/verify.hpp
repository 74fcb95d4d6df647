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

// Numerical self-checks shared by `mbrec gradcheck` and the acceptance runner.

#include <string>
#include <vector>

#include "mbrec/config.hpp"
#include "mbrec/gradcheck.hpp"
#include "mbrec/oracle.hpp"

namespace mbrec::verify {

struct GradientResult {
  GradCheckReport engine;  // tape vs central differences of the engine loss
  // Tape vs central differences of the dense reference loss.
  double oracle_max_relative_error = 0.0;
  std::string oracle_worst;  // "name[row,col]"
  double tolerance = 0.0;
  double seconds = 0.0;
  bool passed = false;
};

/// Gradient check of the full objective (BPR + contrastive + regularizer) on
/// the fixture's triples. `fault`, when non-empty, names a parameter whose
/// analytic gradient is perturbed before comparison; unknown names throw
/// UsageError.
GradientResult check_gradients(const oracle::DenseFixture& fixture, const EngineConfig& config,
                               const std::string& fault = "", double tolerance = 1e-4, double h = 1e-5);

/// Gradient magnitudes for one auxiliary task's BPR loss, measured on the
/// nodes of its last aggregation term and on the target representation.
struct PathCheck {
  Index task = 0;
  bool stopped = false;
  double term_analytic = 0.0;    // max |dL_k / node| over the term's nodes
  double target_analytic = 0.0;  // max |dL_k / e^{K,*}|, tape
  double target_numeric = 0.0;   // same, dense reference differences
  // Target task's own loss on the target representation.
  double live_analytic = 0.0;
  double live_numeric = 0.0;
  bool passed = false;
};

struct StopGradientResult {
  std::vector<PathCheck> tasks;
  bool expect_zero = true;      // false when the mode leaves the paths open
  bool representation = true;   // false when behaviors share one fused output
  double zero_tolerance = 0.0;
  double live_tolerance = 0.0;
  bool passed = false;
};

StopGradientResult check_stop_gradient(const oracle::DenseFixture& fixture, const EngineConfig& config,
                                       double zero_tolerance = 1e-8, double live_tolerance = 1e-6);

/// Largest absolute difference between engine and dense reference over every
/// forward intermediate: propagation layers, fused outputs, fitting outputs,
/// experts, gates, gated terms, predictions, contrastive and loss values.
struct ForwardComparison {
  double max_abs_diff = 0.0;
  std::string worst;  // which intermediate
};

ForwardComparison compare_forward(const oracle::DenseFixture& fixture, const EngineConfig& config);

}  // namespace mbrec::verify

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

#include <memory>
#include <string>
#include <vector>

#include "mbrec/autograd.hpp"
#include "mbrec/cogcn.hpp"
#include "mbrec/config.hpp"
#include "mbrec/data.hpp"
#include "mbrec/dfme.hpp"
#include "mbrec/parameter.hpp"

namespace mbrec {

struct ModelShape {
  Index users = 0;
  Index items = 0;
  Index behaviors = 0;
  Index dim = 0;
  Index layers = 0;

  static ModelShape of(const InteractionSet& set, const CogcnConfig& config);
};

/// Whether the configured head uses gates / fitting experts at all.
bool uses_gates(const EngineConfig& config);
bool uses_fitting(const EngineConfig& config, Index behaviors);

/// Registers every trainable array, in a fixed order:
///   user_embedding (M x d), item_embedding (N x d),
///   gate_weight (K x 2d) and gate_bias (1 x K)   [or gate_weight/k, gate_bias/k],
///   fit_relation (K x d), fit_transform/1..L (d x d).
/// Heads that do not need gates or fitting experts skip those entries.
ParameterStore make_parameters(const ModelShape& shape, const EngineConfig& config);

/// One forward pass on a tape: COGCN representations plus a head ready to
/// predict. `leaves[i]` is the tape node of params[i].
struct Forward {
  std::vector<Var> leaves;
  BehaviorRepresentations reps;
  std::unique_ptr<DfmeHead> head;
};

/// With `differentiable` false every parameter enters the tape as a constant.
Forward run_forward(Tape& tape, ParameterStore& params, const ModelShape& shape, const EngineConfig& config,
                    const BehaviorGraphs& graphs, bool differentiable = true);

/// Name -> tape handle lookup, for tests.
Var leaf_of(const Forward& forward, const ParameterStore& params, const std::string& name);

}  // namespace mbrec

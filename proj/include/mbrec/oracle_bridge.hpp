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

// Converts dense fixtures into engine inputs and compares results.

#include <filesystem>
#include <string>
#include <utility>

#include "mbrec/data.hpp"
#include "mbrec/model.hpp"
#include "mbrec/oracle.hpp"
#include "mbrec/training.hpp"

namespace mbrec::oracle {

InteractionSet interaction_set_of(const DenseFixture& fixture);
TripleBatch triple_batch_of(const DenseFixture& fixture);

/// A registered store for `config` holding the fixture's values. Throws when
/// the fixture's parameter set and the model's differ.
ParameterStore parameters_of(const DenseFixture& fixture, const ModelShape& shape,
                             const EngineConfig& config);

Matrix to_matrix(const Mat& m);
Mat to_mat(const Matrix& m);

double max_abs_diff(const Matrix& a, const Mat& b);

/// Everything needed to run the engine on a fixture.
struct EngineFixture {
  DenseFixture dense;
  EngineConfig config;
  InteractionSet set;
  BehaviorGraphs graphs;
  ModelShape shape;
  ParameterStore params;
  TripleBatch batch;

  explicit EngineFixture(DenseFixture fixture);
  EngineFixture(DenseFixture fixture, EngineConfig config);
};

}  // namespace mbrec::oracle

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

#include "mbrec/model.hpp"

namespace mbrec {

ModelShape ModelShape::of(const InteractionSet& set, const CogcnConfig& config) {
  return {set.num_users(), set.num_items(), set.num_behaviors(), config.dim, config.layers};
}

bool uses_gates(const EngineConfig& config) { return config.dfme.head == HeadKind::kDfme; }

bool uses_fitting(const EngineConfig& config, Index behaviors) {
  return uses_gates(config) && config.dfme.fitting_on && behaviors > 1;
}

ParameterStore make_parameters(const ModelShape& shape, const EngineConfig& config) {
  ParameterStore store;
  const Index d = shape.dim;
  const Index k = shape.behaviors;
  store.add("user_embedding", shape.users, d, InitScheme::kXavierUniform);
  store.add("item_embedding", shape.items, d, InitScheme::kXavierUniform);
  if (uses_gates(config)) {
    if (config.dfme.gate_sharing == GateSharing::kShared) {
      store.add("gate_weight", k, 2 * d, InitScheme::kZeros);
      store.add("gate_bias", 1, k, InitScheme::kZeros);
    } else {
      for (Index t = 0; t < k; ++t) {
        store.add("gate_weight/" + std::to_string(t), k, 2 * d, InitScheme::kZeros);
        store.add("gate_bias/" + std::to_string(t), 1, k, InitScheme::kZeros);
      }
    }
  }
  if (uses_fitting(config, k)) {
    store.add("fit_relation", k, d, InitScheme::kXavierUniform);
    for (Index l = 1; l <= shape.layers; ++l) {
      store.add("fit_transform/" + std::to_string(l), d, d, InitScheme::kXavierUniform);
    }
  }
  return store;
}

Forward run_forward(Tape& tape, ParameterStore& params, const ModelShape& shape, const EngineConfig& config,
                    const BehaviorGraphs& graphs, bool differentiable) {
  if (static_cast<Index>(graphs.size()) != shape.behaviors) {
    throw ConfigError("model expects " + std::to_string(shape.behaviors) + " behavior graphs, got " +
                      std::to_string(graphs.size()));
  }
  Forward f;
  for (std::size_t i = 0; i < params.size(); ++i) {
    f.leaves.push_back(differentiable ? tape.parameter(params[i]) : tape.constant(params[i].value));
  }
  auto leaf = [&](const std::string& name) { return leaf_of(f, params, name); };

  f.reps = forward_all(leaf("user_embedding"), leaf("item_embedding"), graphs, config.cogcn);

  HeadParams head;
  if (uses_gates(config)) {
    if (config.dfme.gate_sharing == GateSharing::kShared) {
      head.gate_weight.push_back(leaf("gate_weight"));
      head.gate_bias.push_back(leaf("gate_bias"));
    } else {
      for (Index t = 0; t < shape.behaviors; ++t) {
        head.gate_weight.push_back(leaf("gate_weight/" + std::to_string(t)));
        head.gate_bias.push_back(leaf("gate_bias/" + std::to_string(t)));
      }
    }
  }
  DfmeConfig dfme = config.dfme;
  if (uses_fitting(config, shape.behaviors)) {
    head.fit_relation = leaf("fit_relation");
    for (Index l = 1; l <= shape.layers; ++l) head.fit_transform.push_back(leaf("fit_transform/" + std::to_string(l)));
  } else {
    dfme.fitting_on = false;
  }
  f.head = std::make_unique<DfmeHead>(f.reps, graphs, std::move(head), dfme, shape.layers);
  return f;
}

Var leaf_of(const Forward& forward, const ParameterStore& params, const std::string& name) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name == name) return forward.leaves.at(i);
  }
  throw ConfigError("unknown parameter '" + name + "'");
}

}  // namespace mbrec

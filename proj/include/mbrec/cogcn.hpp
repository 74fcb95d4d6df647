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

#include <vector>

#include "mbrec/autograd.hpp"
#include "mbrec/config.hpp"
#include "mbrec/data.hpp"

namespace mbrec {

/// Fused per-behavior outputs of the cascade. Index k is 0-based; the
/// last entry belongs to the target behavior. With PostMode::kFused all
/// entries alias the same mean representation.
struct BehaviorRepresentations {
  Index num_users = 0;
  Index num_items = 0;
  std::vector<Var> joint;  // (M+N) x d, users first
  std::vector<Var> users;  // M x d
  std::vector<Var> items;  // N x d
  // layers[k][l] is E^{k,l}, l = 0..L.
  std::vector<std::vector<Var>> layers;
  bool fused = false;

  Index num_behaviors() const { return static_cast<Index>(joint.size()); }
};

/// Relations that feed behavior k under `mode`.
std::vector<Index> relation_set(InMode mode, Index k, Index num_behaviors);

/// One propagation step inside behavior k. Sums run over relation_set in
/// ascending order; the self term is added once per relation or once overall
/// depending on the self-loop mode.
Var propagate_layer(Var e, Index k, const BehaviorGraphs& graphs, const CogcnConfig& config);

/// Seed E^{k+1,0} from the final layers of behaviors 0..k (layer_outputs[k']
/// is E^{k',L}) and the initial embeddings.
Var transfer_between_behaviors(const std::vector<Var>& layer_outputs, Var initial, const CogcnConfig& config);

struct FusedPair {
  Var joint;
  Var users;
  Var items;
};

/// Elementwise sum of E^{k,0..L} in layer order, split into user and item rows.
FusedPair fuse_layers(const std::vector<Var>& intermediates, Index num_users);

/// Full cascade from the two embedding tables.
BehaviorRepresentations forward_all(Var user_table, Var item_table, const BehaviorGraphs& graphs,
                                    const CogcnConfig& config);

}  // namespace mbrec

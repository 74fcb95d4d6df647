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

#include "mbrec/cogcn.hpp"

#include <string>

namespace mbrec {

std::vector<Index> relation_set(InMode mode, Index k, Index num_behaviors) {
  if (k < 0 || k >= num_behaviors) {
    throw ConfigError("behavior index " + std::to_string(k) + " outside [0, " + std::to_string(num_behaviors) + ")");
  }
  std::vector<Index> out;
  switch (mode) {
    case InMode::kFull:
      for (Index i = 0; i <= k; ++i) out.push_back(i);
      break;
    case InMode::kStrict:
      out.push_back(k);
      break;
    case InMode::kNone:
      for (Index i = 0; i < num_behaviors; ++i) out.push_back(i);
      break;
  }
  return out;
}

Var propagate_layer(Var e, Index k, const BehaviorGraphs& graphs, const CogcnConfig& config) {
  const auto relations = relation_set(config.in_mode, k, static_cast<Index>(graphs.size()));
  Var acc;
  for (Index r : relations) {
    Var term = spmm(graphs[r].propagation, e);
    if (config.self_loop_mode == SelfLoopMode::kPerRelation) term = term + e;
    acc = acc.valid() ? acc + term : term;
  }
  if (config.self_loop_mode == SelfLoopMode::kOnce) acc = acc + e;
  return acc;
}

Var transfer_between_behaviors(const std::vector<Var>& layer_outputs, Var initial, const CogcnConfig& config) {
  if (layer_outputs.empty()) throw ConfigError("transfer_between_behaviors needs at least one upstream output");
  switch (config.pre_mode) {
    case PreMode::kFull: {
      Var acc = layer_outputs[0];
      for (std::size_t i = 1; i < layer_outputs.size(); ++i) acc = acc + layer_outputs[i];
      return acc + initial;
    }
    case PreMode::kStrict:
      return layer_outputs.back() + initial;
    case PreMode::kNone:
      break;
  }
  return initial;
}

FusedPair fuse_layers(const std::vector<Var>& intermediates, Index num_users) {
  if (intermediates.empty()) throw ConfigError("fuse_layers needs at least one layer");
  Var acc = intermediates[0];
  for (std::size_t l = 1; l < intermediates.size(); ++l) acc = acc + intermediates[l];
  const Index rows = acc.rows();
  if (num_users < 0 || num_users > rows) {
    throw ConfigError("fuse_layers: " + std::to_string(num_users) + " users but " + std::to_string(rows) + " rows");
  }
  return {acc, slice_rows(acc, 0, num_users), slice_rows(acc, num_users, rows - num_users)};
}

BehaviorRepresentations forward_all(Var user_table, Var item_table, const BehaviorGraphs& graphs,
                                    const CogcnConfig& config) {
  if (user_table.cols() != item_table.cols()) {
    throw ConfigError("user and item tables differ in width: " + shape_string(user_table.value()) + " vs " +
                      shape_string(item_table.value()));
  }
  const Index behaviors = static_cast<Index>(graphs.size());
  if (behaviors == 0) throw ConfigError("forward_all needs at least one behavior graph");
  BehaviorRepresentations reps;
  reps.num_users = user_table.rows();
  reps.num_items = item_table.rows();

  const Var initial = concat_rows(user_table, item_table);
  std::vector<Var> last_layers;
  for (Index k = 0; k < behaviors; ++k) {
    Var e = k == 0 ? initial : transfer_between_behaviors(last_layers, initial, config);
    std::vector<Var> layers{e};
    for (Index l = 0; l < config.layers; ++l) {
      e = propagate_layer(e, k, graphs, config);
      layers.push_back(e);
    }
    last_layers.push_back(e);
    FusedPair fused = fuse_layers(layers, reps.num_users);
    reps.joint.push_back(fused.joint);
    reps.users.push_back(fused.users);
    reps.items.push_back(fused.items);
    reps.layers.push_back(std::move(layers));
  }

  if (config.post_mode == PostMode::kFused) {
    Var acc = reps.joint[0];
    for (Index k = 1; k < behaviors; ++k) acc = acc + reps.joint[k];
    acc = scale(acc, 1.0 / static_cast<double>(behaviors));
    const Var users = slice_rows(acc, 0, reps.num_users);
    const Var items = slice_rows(acc, reps.num_users, reps.num_items);
    for (Index k = 0; k < behaviors; ++k) {
      reps.joint[k] = acc;
      reps.users[k] = users;
      reps.items[k] = items;
    }
    reps.fused = true;
  }
  return reps;
}

}  // namespace mbrec

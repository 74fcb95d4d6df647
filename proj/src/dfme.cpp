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

#include "mbrec/dfme.hpp"

#include <algorithm>
#include <string>

namespace mbrec {

Var HeadParams::gate_weight_for(Index task) const {
  if (gate_weight.empty()) throw ConfigError("gate weights are not bound");
  return gate_weight.size() == 1 ? gate_weight[0] : gate_weight.at(static_cast<std::size_t>(task));
}

Var HeadParams::gate_bias_for(Index task) const {
  if (gate_bias.empty()) throw ConfigError("gate biases are not bound");
  return gate_bias.size() == 1 ? gate_bias[0] : gate_bias.at(static_cast<std::size_t>(task));
}

Var info_nce(Var anchors, Var positives, double tau, Similarity similarity) {
  if (!(tau > 0.0)) throw ConfigError("contrastive temperature must be > 0, got " + std::to_string(tau));
  if (similarity == Similarity::kCosine) {
    anchors = l2_normalize_rows(anchors);
    positives = l2_normalize_rows(positives);
  }
  const double inv = 1.0 / tau;
  Var logits = scale(matmul_nt(anchors, positives), inv);
  Var positive = scale(row_sum(hadamard(anchors, positives)), inv);
  return mean(logsumexp_rows(logits) - positive);
}

Var contrastive_loss(const BehaviorRepresentations& reps, Index k, const DfmeConfig& config,
                     const std::vector<Index>& batch_users, const std::vector<Index>& batch_items) {
  if (!(config.tau > 0.0)) throw ConfigError("contrastive temperature must be > 0, got " + std::to_string(config.tau));
  const Index target = reps.num_behaviors() - 1;
  if (k < 0 || k >= target) {
    throw ConfigError("contrastive_loss needs an auxiliary behavior index in [0, " + std::to_string(target) +
                      "), got " + std::to_string(k));
  }
  Var au = reps.users[target], pu = reps.users[k];
  Var av = reps.items[target], pv = reps.items[k];
  if (config.neg_mode == NegativeSet::kBatch) {
    auto unique = [](std::vector<Index> ids) {
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      return ids;
    };
    const auto users = unique(batch_users);
    const auto items = unique(batch_items);
    if (users.empty() || items.empty()) throw ConfigError("batch contrastive loss needs batch users and items");
    au = gather_rows(au, users);
    pu = gather_rows(pu, users);
    av = gather_rows(av, items);
    pv = gather_rows(pv, items);
  }
  return info_nce(au, pu, config.tau, config.similarity) + info_nce(av, pv, config.tau, config.similarity);
}

Var specific_expert(const BehaviorRepresentations& reps, Index k, const std::vector<Index>& users,
                    const std::vector<Index>& items) {
  return hadamard(gather_rows(reps.users.at(k), users), gather_rows(reps.items.at(k), items));
}

Var fitting_input(const BehaviorRepresentations& reps, Index current, Index other, const DfmeConfig& config) {
  Var mix = scale(reps.joint.at(current), config.alpha) + scale(reps.joint.at(other), config.beta);
  return scale(mix, 0.5);
}

Var fitting_propagate(Var input, Index other, const BehaviorGraphs& graphs, const HeadParams& params, Index depth,
                      std::vector<Var>* trace) {
  if (!params.fit_relation.valid()) throw ConfigError("fitting parameters are not bound");
  if (depth > static_cast<Index>(params.fit_transform.size())) {
    throw ConfigError("fitting depth " + std::to_string(depth) + " exceeds the " +
                      std::to_string(params.fit_transform.size()) + " available layer transforms");
  }
  if (other < 0 || other >= static_cast<Index>(graphs.size())) {
    throw ConfigError("fitting behavior index " + std::to_string(other) + " out of range");
  }
  auto record = [trace](Var v) {
    if (trace) trace->push_back(v);
    return v;
  };
  Var relation = slice_rows(params.fit_relation, other, 1);
  Var e = record(input);
  for (Index l = 0; l < depth; ++l) {
    relation = matmul_nt(relation, params.fit_transform[l]);
    Var scaled = record(mul_row_broadcast(e, relation));
    e = record(record(spmm(graphs[other].propagation, scaled)) + scaled);
  }
  return e;
}

Var pair_expert(Var joint, Index num_users, const std::vector<Index>& users, const std::vector<Index>& items) {
  std::vector<Index> item_rows(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) item_rows[i] = num_users + items[i];
  return hadamard(gather_rows(joint, users), gather_rows(joint, std::move(item_rows)));
}

Var gate(const BehaviorRepresentations& reps, Index k, const std::vector<Index>& users,
         const std::vector<Index>& items, const HeadParams& params) {
  Var x = concat_cols(gather_rows(reps.users.at(k), users), gather_rows(reps.items.at(k), items));
  Var logits = add_row_broadcast(matmul_nt(x, params.gate_weight_for(k)), params.gate_bias_for(k));
  return softmax_rows(logits);
}

bool stop_gradient_applies(StopGradMode mode, Index task, Index expert, Index num_behaviors) {
  switch (mode) {
    case StopGradMode::kTargetOnly:
      return task != num_behaviors - 1 && expert == num_behaviors - 1;
    case StopGradMode::kAll:
      return expert != task;
    case StopGradMode::kNone:
      break;
  }
  return false;
}

Var aggregate_and_predict(const std::vector<Var>& experts, Var gates, Index k, StopGradMode mode,
                          AggregationProbe* probe) {
  const Index count = static_cast<Index>(experts.size());
  if (count == 0 || gates.cols() != count) {
    throw ConfigError("aggregate_and_predict: " + std::to_string(count) + " experts for gates " +
                      shape_string(gates.value()));
  }
  Var total;
  for (Index j = 0; j < count; ++j) {
    Var weight = slice_cols(gates, j, 1);
    Var term = mul_col_broadcast(experts[j], weight);
    const bool stopped = stop_gradient_applies(mode, k, j, count);
    Var out = stopped ? stop_gradient(term) : term;
    if (probe) {
      auto& t = probe->terms.emplace_back();
      t.expert = j;
      t.stopped = stopped;
      t.nodes = {experts[j].id(), weight.id(), term.id()};
    }
    total = total.valid() ? total + out : out;
  }
  return row_mean(total);
}

DfmeHead::DfmeHead(BehaviorRepresentations reps, const BehaviorGraphs& graphs, HeadParams params, DfmeConfig config,
                   Index fitting_depth)
    : reps_(std::move(reps)), graphs_(graphs), params_(std::move(params)), config_(config), depth_(fitting_depth) {}

Var DfmeHead::fitting_output(Index current, Index other, std::vector<Var>* trace) {
  auto key = std::make_pair(current, other);
  auto it = fitting_.find(key);
  if (it == fitting_.end()) {
    FittingEntry entry;
    Var input = fitting_input(reps_, current, other, config_);
    entry.output = fitting_propagate(input, other, graphs_, params_, depth_, &entry.trace);
    it = fitting_.emplace(key, std::move(entry)).first;
  }
  if (trace) trace->insert(trace->end(), it->second.trace.begin(), it->second.trace.end());
  return it->second.output;
}

void DfmeHead::set_fitting_output(Index current, Index other, Var output) {
  fitting_[{current, other}] = FittingEntry{output, {output}};
}

Var DfmeHead::predict(Index k, const std::vector<Index>& users, const std::vector<Index>& items,
                      AggregationProbe* probe) {
  if (users.size() != items.size()) throw ConfigError("predict: user and item lists differ in length");
  const Index behaviors = reps_.num_behaviors();
  if (k < 0 || k >= behaviors) throw ConfigError("task index " + std::to_string(k) + " out of range");
  if (config_.head == HeadKind::kBilinear) return row_mean(specific_expert(reps_, k, users, items));

  std::vector<Var> experts;
  std::vector<std::vector<Var>> traces(behaviors);
  for (Index j = 0; j < behaviors; ++j) {
    if (j == k || !config_.fitting_on) {
      experts.push_back(specific_expert(reps_, j, users, items));
    } else {
      Var out = fitting_output(j, k, probe ? &traces[j] : nullptr);
      experts.push_back(pair_expert(out, reps_.num_users, users, items));
    }
  }
  Var gates = gate(reps_, k, users, items, params_);
  const std::size_t first = probe ? probe->terms.size() : 0;
  Var prediction = aggregate_and_predict(experts, gates, k, config_.stop_grad_mode, probe);
  if (probe) {
    for (Index j = 0; j < behaviors; ++j) {
      auto& nodes = probe->terms[first + j].nodes;
      for (Var v : traces[j]) nodes.push_back(v.id());
    }
  }
  return prediction;
}

}  // namespace mbrec

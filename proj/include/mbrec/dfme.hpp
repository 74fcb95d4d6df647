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

#include <map>
#include <utility>
#include <vector>

#include "mbrec/autograd.hpp"
#include "mbrec/cogcn.hpp"
#include "mbrec/config.hpp"

namespace mbrec {

/// Tape handles for the head parameters. gate_weight / gate_bias hold one
/// entry when gates are shared and K entries otherwise. The fitting members
/// are unset when fitting experts are disabled.
struct HeadParams {
  std::vector<Var> gate_weight;  // K x 2d
  std::vector<Var> gate_bias;    // 1 x K
  Var fit_relation;              // K x d, row k' is the initial relation vector
  std::vector<Var> fit_transform;  // d x d, one per fitting layer

  Var gate_weight_for(Index task) const;
  Var gate_bias_for(Index task) const;
};

/// InfoNCE over row-aligned anchors and positives: the mean over rows of
/// logsumexp_j(phi(a_i, p_j) / tau) - phi(a_i, p_i) / tau. The denominator
/// runs over every row, the positive included.
Var info_nce(Var anchors, Var positives, double tau, Similarity similarity = Similarity::kInnerProduct);

/// User-side plus item-side alignment of the target behavior (anchors) with
/// auxiliary behavior k. With NegativeSet::kBatch the negatives are restricted
/// to `batch_users` / `batch_items` (deduplicated, ascending).
Var contrastive_loss(const BehaviorRepresentations& reps, Index k, const DfmeConfig& config,
                     const std::vector<Index>& batch_users = {}, const std::vector<Index>& batch_items = {});

/// e_u^{k,*} o e_v^{k,*} for each (users[i], items[i]).
Var specific_expert(const BehaviorRepresentations& reps, Index k, const std::vector<Index>& users,
                    const std::vector<Index>& items);

/// (alpha * e^{current,*} + beta * e^{other,*}) / 2 over the joint node set.
Var fitting_input(const BehaviorRepresentations& reps, Index current, Index other, const DfmeConfig& config);

/// `depth` steps of E <- (P_other + I)(E o R), with R <- R W_l^T before each
/// step (row-vector form of R <- W_l R), starting from row `other` of
/// fit_relation. Returns the last layer. `trace`, when given, receives every
/// intermediate node in creation order.
Var fitting_propagate(Var input, Index other, const BehaviorGraphs& graphs, const HeadParams& params, Index depth,
                      std::vector<Var>* trace = nullptr);

/// Hadamard of the user and item rows of a joint fitting output.
Var pair_expert(Var joint, Index num_users, const std::vector<Index>& users, const std::vector<Index>& items);

/// softmax(concat(e_u^{k,*}, e_v^{k,*}) W_g^T + b_g), B x K.
Var gate(const BehaviorRepresentations& reps, Index k, const std::vector<Index>& users,
         const std::vector<Index>& items, const HeadParams& params);

/// Whether term j of task k is wrapped in stop_gradient.
bool stop_gradient_applies(StopGradMode mode, Index task, Index expert, Index num_behaviors);

/// Node ids touched by one aggregation term, for gradient-path checks.
struct TermTrace {
  Index expert = 0;
  std::vector<std::size_t> nodes;
  bool stopped = false;
};

struct AggregationProbe {
  std::vector<TermTrace> terms;
};

/// Prediction for task k: row_mean(sum_j g(:, j) * expert_j), with the
/// stop-gradient wrapper applied per mode. experts[j] is B x d.
Var aggregate_and_predict(const std::vector<Var>& experts, Var gates, Index k, StopGradMode mode,
                          AggregationProbe* probe = nullptr);

/// Per-forward-pass head. Fitting outputs are computed on first use and reused
/// for the rest of the pass.
class DfmeHead {
 public:
  /// Keeps its own copy of the (cheap) representation handles; `graphs`
  /// must outlive the head.
  DfmeHead(BehaviorRepresentations reps, const BehaviorGraphs& graphs, HeadParams params, DfmeConfig config,
           Index fitting_depth);

  /// B x 1 predictions of task k for the (users[i], items[i]) pairs.
  Var predict(Index k, const std::vector<Index>& users, const std::vector<Index>& items,
              AggregationProbe* probe = nullptr);

  /// Joint fitting output e_out^{current, other}; `trace` as in fitting_propagate.
  Var fitting_output(Index current, Index other, std::vector<Var>* trace = nullptr);
  /// Installs a precomputed fitting output (used when scoring from a frozen
  /// snapshot).
  void set_fitting_output(Index current, Index other, Var output);

  const BehaviorRepresentations& reps() const { return reps_; }

 private:
  struct FittingEntry {
    Var output;
    std::vector<Var> trace;
  };

  BehaviorRepresentations reps_;
  const BehaviorGraphs& graphs_;
  HeadParams params_;
  DfmeConfig config_;
  Index depth_;
  std::map<std::pair<Index, Index>, FittingEntry> fitting_;
};

}  // namespace mbrec

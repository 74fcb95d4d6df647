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

#include <cstdint>
#include <span>
#include <vector>

#include "mbrec/config.hpp"
#include "mbrec/data.hpp"
#include "mbrec/model.hpp"

namespace mbrec {

struct RankResult {
  Index user = 0;
  Index rank = 0;        // 1-based
  Index candidates = 0;

  bool operator==(const RankResult&) const = default;
};

struct Metrics {
  double hr = 0.0;
  double ndcg = 0.0;
  Index users = 0;

  bool operator==(const Metrics&) const = default;
};

/// Rank of `held_out` among items with candidate[v] set, by descending score
/// with ties resolved toward the smaller item id. `held_out` must be a
/// candidate.
RankResult rank_from_scores(Index user, std::span<const double> scores, std::span<const char> candidate,
                            Index held_out);

/// HR@K and NDCG@K (1/log2(rank+1) within the cut-off), averaged in ascending
/// user order.
Metrics hr_ndcg(std::vector<RankResult> results, Index k = 10);

/// Target-task scores from frozen parameters. Each user is scored on its own
/// tape with identical shapes, so results do not depend on thread count.
class Scorer {
 public:
  Scorer(ParameterStore& params, const ModelShape& shape, const EngineConfig& config, const BehaviorGraphs& graphs);

  /// Target-task predictions for every item, for one user.
  std::vector<double> score_user(Index user) const;

  const ModelShape& shape() const { return shape_; }

 private:
  ModelShape shape_;
  EngineConfig config_;
  const BehaviorGraphs& graphs_;
  std::vector<Matrix> joint_;                   // per behavior
  std::vector<std::pair<Index, Matrix>> fitting_;  // (expert j, e_out^{j,K})
  std::vector<Matrix> gate_weight_;
  std::vector<Matrix> gate_bias_;
};

/// Ranks every test pair. Candidates are all items minus the user's
/// training target items (and auxiliary items when exclude_auxiliary is set);
/// sampled mode keeps the held-out item plus sampled_negatives random
/// candidates drawn under `seed`.
std::vector<RankResult> rank_test_users(const Scorer& scorer, const InteractionSet& train,
                                        std::span<const TestPair> test, const EvalConfig& config,
                                        std::uint64_t seed = 0);

Metrics evaluate(const Scorer& scorer, const InteractionSet& train, std::span<const TestPair> test,
                 const EvalConfig& config, std::uint64_t seed = 0);

}  // namespace mbrec

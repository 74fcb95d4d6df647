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
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mbrec/config.hpp"
#include "mbrec/data.hpp"
#include "mbrec/evaluation.hpp"
#include "mbrec/model.hpp"

namespace mbrec {

struct Triple {
  Index user = 0;
  Index positive = 0;
  Index negative = 0;

  bool operator==(const Triple&) const = default;
};

struct TripleBatch {
  std::vector<std::vector<Triple>> behaviors;

  bool operator==(const TripleBatch&) const = default;
};

/// Draws (u, s, t) triples: s uniform over the behavior's edges, t uniform
/// over items, resampled until (u, t) is unobserved under that behavior.
class TripleSampler {
 public:
  explicit TripleSampler(const InteractionSet& set, Index max_attempts = 100);

  /// batch_size triples per behavior. Draws whose user has no valid negative
  /// within max_attempts are dropped (reported once through the log hook).
  TripleBatch sample(Index batch_size, std::mt19937_64& rng);

  bool observed(Index behavior, Index user, Index item) const;
  Index skipped() const { return skipped_; }

  std::function<void(const std::string&)> log;

 private:
  const InteractionSet& set_;
  Index max_attempts_;
  // seen_[k][u]: ascending items of u under behavior k.
  std::vector<std::vector<std::vector<Index>>> seen_;
  Index skipped_ = 0;
  bool warned_ = false;
};

/// sum_k lambda_k * reduce(softplus(o_ut - o_us)) over each behavior's
/// triples; behaviors with no triples or lambda zero contribute nothing.
Var bpr_loss(DfmeHead& head, const TripleBatch& batch, const std::vector<double>& lambdas, BprReduction reduction);

struct LossParts {
  Var bpr;
  Var cl;   // unset when contrastive terms are off or K = 1
  Var reg;  // unset when mu = 0
  Var total;
};

/// total = bpr + gamma * sum_k cl_k + mu * sum ||theta||^2.
LossParts total_loss(Var bpr, const std::vector<Var>& cl_terms, const std::vector<Var>& parameter_leaves,
                     double gamma, double mu);

/// The full objective on one batch: forward, all task predictions,
/// contrastive terms, regularizer.
LossParts batch_objective(Forward& forward, const TripleBatch& batch, const EngineConfig& config);

struct EpochRecord {
  Index epoch = 0;
  double l_bpr = 0.0;
  double l_cl = 0.0;
  double l_reg = 0.0;
  std::optional<double> hr10;
  std::optional<double> ndcg10;
  double seconds = 0.0;
};

/// One JSON object per line; doubles printed round-trip exact.
std::string format_epoch_record(const EpochRecord& record);

struct TrainOptions {
  // When set, best.ckpt and epochs.jsonl are written here.
  std::filesystem::path out_dir;
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  Metrics best;
  Index best_epoch = 0;  // 0: initial parameters
  Index steps = 0;
};

/// The data the model is trained on: the split's training set, reduced to the
/// target behavior when single_behavior is set.
InteractionSet training_view(const Split& split, const EngineConfig& config);

/// Trains with config.train.seed. Evaluates every eval_every epochs, keeps the
/// best-by-HR parameters, stops after `patience` evaluations without
/// improvement. Throws NumericError on a non-finite loss; the best checkpoint
/// written so far stays on disk.
TrainResult train(const Split& split, const EngineConfig& config, const TrainOptions& options = {});

/// Binary checkpoint: magic, config hash, step, then every parameter with its
/// Adam moments.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params, const std::string& config_hash,
                     std::int64_t step);
/// Loads into an already-registered store; names and shapes must match.
/// Returns the stored step.
std::int64_t load_checkpoint(const std::filesystem::path& path, ParameterStore& params,
                             const std::string& expected_hash);

}  // namespace mbrec

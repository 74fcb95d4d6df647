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
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mbrec/data.hpp"
#include "mbrec/optim.hpp"

namespace mbrec {

// Which upstream outputs seed behavior k+1.
enum class PreMode { kFull, kStrict, kNone };
// Which relations propagate inside behavior k.
enum class InMode { kFull, kStrict, kNone };
enum class PostMode { kDecoupled, kFused };
enum class SelfLoopMode { kPerRelation, kOnce };

struct CogcnConfig {
  Index layers = 2;
  Index dim = 64;
  PreMode pre_mode = PreMode::kFull;
  InMode in_mode = InMode::kFull;
  PostMode post_mode = PostMode::kDecoupled;
  SelfLoopMode self_loop_mode = SelfLoopMode::kPerRelation;
  DegreeMode degree_mode = DegreeMode::kPerBehavior;

  void validate() const;
};

enum class NegativeSet { kFull, kBatch };
enum class StopGradMode { kTargetOnly, kAll, kNone };
enum class GateSharing { kShared, kPerTask };
enum class Similarity { kInnerProduct, kCosine };
// kBilinear replaces the whole expert head by mean(e_u^k o e_v^k).
enum class HeadKind { kDfme, kBilinear };

struct DfmeConfig {
  double tau = 0.2;
  double alpha = 0.1;
  double beta = 0.001;
  double gamma = 1.0;
  NegativeSet neg_mode = NegativeSet::kFull;
  bool contrastive_on = true;
  bool fitting_on = true;
  StopGradMode stop_grad_mode = StopGradMode::kTargetOnly;
  GateSharing gate_sharing = GateSharing::kShared;
  Similarity similarity = Similarity::kInnerProduct;
  HeadKind head = HeadKind::kDfme;

  void validate() const;
};

enum class BprReduction { kMean, kSum };

struct TrainConfig {
  // Empty means uniform 1/K. Must sum to 1 otherwise.
  std::vector<double> lambdas;
  double mu = 0.01;
  AdamSettings adam;
  Index batch_size = 1024;
  Index epochs = 100;
  std::uint64_t seed = 1;
  Index seeds = 5;
  Index eval_every = 1;
  Index patience = 20;
  BprReduction bpr_reduction = BprReduction::kMean;
  Index max_negative_attempts = 100;

  void validate() const;
};

enum class CandidateMode { kFull, kSampled };

struct EvalConfig {
  Index k = 10;
  CandidateMode candidates = CandidateMode::kFull;
  Index sampled_negatives = 99;
  bool exclude_auxiliary = false;
  Index threads = 1;

  void validate() const;
};

struct EngineConfig {
  std::string data;
  bool single_behavior = false;
  CogcnConfig cogcn;
  DfmeConfig dfme;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

/// Parses a flat JSON object. Unknown keys and ill-typed values throw
/// ConfigError; missing keys keep their defaults.
EngineConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const EngineConfig& config);
EngineConfig load_config(const std::filesystem::path& path);
std::string config_hash(const EngineConfig& config);

/// lambdas resolved for K behaviors, validated to sum to 1.
std::vector<double> resolved_lambdas(const TrainConfig& config, Index behaviors);

/// Ablation variants by name. `full` is the unmodified configuration.
const std::vector<std::string>& variant_names();
/// Throws UsageError listing the valid names when `name` is unknown.
void apply_variant(EngineConfig& config, std::string_view name);

}  // namespace mbrec

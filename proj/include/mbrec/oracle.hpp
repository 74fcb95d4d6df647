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

// Brute-force reference implementation used by the test suites. Everything
// here is plain nested std::vector arithmetic; nothing calls the engine's
// sparse kernels or autograd tape. Only the configuration structs are shared.
//
// Summation-order contract followed by both sides: sparse-times-dense sums a
// row's neighbors in ascending column order; relation sums run in ascending
// behavior order; layer and expert sums run in index order.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mbrec/config.hpp"

namespace mbrec::oracle {

using Mat = std::vector<std::vector<double>>;

struct DenseTriple {
  int user = 0;
  int positive = 0;
  int negative = 0;
};

/// A tiny, fully explicit model instance: bipartite interaction matrices,
/// every parameter value, and the training triples.
struct DenseFixture {
  int users = 0;
  int items = 0;
  int dim = 0;
  int layers = 0;
  std::vector<std::string> behaviors;
  std::vector<Mat> interactions;  // per behavior, users x items, 0/1
  std::map<std::string, Mat> parameters;
  std::vector<std::vector<DenseTriple>> triples;  // per behavior
  nlohmann::json config = nlohmann::json::object();

  int num_behaviors() const { return static_cast<int>(behaviors.size()); }
  /// Flat engine config (fixture overrides on top of defaults).
  EngineConfig engine_config() const;
};

DenseFixture fixture_from_json(const nlohmann::json& doc);
nlohmann::json fixture_to_json(const DenseFixture& fixture);
DenseFixture load_fixture(const std::filesystem::path& path);
void save_fixture(const std::filesystem::path& path, const DenseFixture& fixture);

/// Which parts of the objective a loss evaluation includes.
struct LossSelection {
  // Per-behavior BPR weights; empty means the configured lambdas.
  std::vector<double> bpr_weights;
  bool contrastive = true;
  bool regularizer = true;

  static LossSelection total() { return {}; }
  /// BPR of a single task with weight 1, nothing else.
  static LossSelection bpr_only(int behavior, int behaviors);
};

/// Perturbation hooks for gradient probes.
struct ForwardOptions {
  // (task, expert) -> term value used in place of the computed one wherever
  // the term is stop-gradient wrapped.
  std::map<std::pair<int, int>, Mat> frozen_terms;
  // Added to the fused joint representation of `perturb_behavior` before any
  // consumer reads it.
  int perturb_behavior = -1;
  Mat perturbation;
};

struct TaskTrace {
  // Pair order: all positives, then all negatives.
  std::vector<int> users;
  std::vector<int> items;
  std::vector<Mat> experts;                    // per j, rows x d
  Mat gates;                                   // rows x K
  std::vector<Mat> terms;                      // per j, rows x d
  std::vector<double> predictions;             // rows
  double bpr = 0.0;                            // reduced, before lambda
};

struct DenseTrace {
  std::vector<Mat> propagation;                // per behavior, (M+N) x (M+N)
  std::vector<std::vector<Mat>> layers;        // [k][l]
  std::vector<Mat> joint;                      // fused, per behavior
  std::map<std::pair<int, int>, Mat> fitting;  // (current, other) -> e_out
  std::vector<TaskTrace> tasks;                // per behavior with triples
  std::vector<double> contrastive;             // per auxiliary behavior
  double bpr = 0.0;                            // weighted sum
  double cl = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

DenseTrace dense_forward(const DenseFixture& fixture, const EngineConfig& config,
                         const LossSelection& selection = LossSelection::total(), const ForwardOptions& options = {});

/// Stop-gradient-wrapped term values of a base trace, in the form
/// ForwardOptions::frozen_terms expects.
std::map<std::pair<int, int>, Mat> frozen_terms_of(const DenseTrace& trace, const EngineConfig& config);

/// Central differences (f(x+h) - f(x-h)) / 2h of the selected loss for every
/// entry of every parameter, with stop-gradient terms held at their values at
/// the unperturbed point.
std::map<std::string, Mat> numerical_gradient(const DenseFixture& fixture, const EngineConfig& config,
                                              const LossSelection& selection, double h = 1e-5);

/// Same, with respect to the fused joint representation of one behavior.
Mat numerical_representation_gradient(const DenseFixture& fixture, const EngineConfig& config,
                                      const LossSelection& selection, int behavior, double h = 1e-5);

/// HR@K / NDCG@K by explicit full sort of each user's candidates (descending
/// score, ascending id on ties). `excluded[u]` lists items removed from u's
/// candidate set; the held-out item is always kept. Means run over users in
/// ascending id.
std::pair<double, double> reference_metrics(const Mat& scores, const std::map<int, int>& held_out, int k,
                                            const std::map<int, std::vector<int>>& excluded = {});

}  // namespace mbrec::oracle

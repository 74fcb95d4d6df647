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

#include "mbrec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

namespace mbrec {

RankResult rank_from_scores(Index user, std::span<const double> scores, std::span<const char> candidate,
                            Index held_out) {
  const Index n = static_cast<Index>(scores.size());
  if (static_cast<Index>(candidate.size()) != n) throw ConfigError("rank_from_scores: candidate mask size mismatch");
  if (held_out < 0 || held_out >= n || !candidate[held_out]) {
    throw DataError("held-out item " + std::to_string(held_out) + " of user " + std::to_string(user) +
                    " is not a candidate");
  }
  const double target = scores[held_out];
  RankResult r{user, 1, 0};
  for (Index v = 0; v < n; ++v) {
    if (!candidate[v]) continue;
    ++r.candidates;
    if (v == held_out) continue;
    if (scores[v] > target || (scores[v] == target && v < held_out)) ++r.rank;
  }
  return r;
}

Metrics hr_ndcg(std::vector<RankResult> results, Index k) {
  if (results.empty()) throw DataError("hr_ndcg needs at least one ranked user");
  if (k < 1) throw ConfigError("hr_ndcg cut-off must be >= 1");
  std::stable_sort(results.begin(), results.end(),
                   [](const RankResult& a, const RankResult& b) { return a.user < b.user; });
  double hits = 0.0;
  double gain = 0.0;
  for (const auto& r : results) {
    if (r.rank <= k) {
      hits += 1.0;
      gain += 1.0 / std::log2(static_cast<double>(r.rank + 1));
    }
  }
  const double n = static_cast<double>(results.size());
  return {hits / n, gain / n, static_cast<Index>(results.size())};
}

Scorer::Scorer(ParameterStore& params, const ModelShape& shape, const EngineConfig& config,
               const BehaviorGraphs& graphs)
    : shape_(shape), config_(config), graphs_(graphs) {
  Tape tape;
  Forward f = run_forward(tape, params, shape, config, graphs, false);
  for (Index k = 0; k < shape.behaviors; ++k) joint_.push_back(f.reps.joint[k].value());
  const Index target = shape.behaviors - 1;
  if (uses_fitting(config, shape.behaviors)) {
    for (Index j = 0; j < target; ++j) fitting_.emplace_back(j, f.head->fitting_output(j, target).value());
  }
  if (uses_gates(config)) {
    if (config.dfme.gate_sharing == GateSharing::kShared) {
      gate_weight_.push_back(params.at("gate_weight").value);
      gate_bias_.push_back(params.at("gate_bias").value);
    } else {
      for (Index t = 0; t < shape.behaviors; ++t) {
        gate_weight_.push_back(params.at("gate_weight/" + std::to_string(t)).value);
        gate_bias_.push_back(params.at("gate_bias/" + std::to_string(t)).value);
      }
    }
  }
}

std::vector<double> Scorer::score_user(Index user) const {
  if (user < 0 || user >= shape_.users) throw ConfigError("score_user: user " + std::to_string(user) + " out of range");
  Tape tape;
  BehaviorRepresentations reps;
  reps.num_users = shape_.users;
  reps.num_items = shape_.items;
  for (const auto& m : joint_) {
    Var joint = tape.constant(m);
    reps.joint.push_back(joint);
    reps.users.push_back(slice_rows(joint, 0, shape_.users));
    reps.items.push_back(slice_rows(joint, shape_.users, shape_.items));
  }
  HeadParams head;
  for (const auto& w : gate_weight_) head.gate_weight.push_back(tape.constant(w));
  for (const auto& b : gate_bias_) head.gate_bias.push_back(tape.constant(b));
  DfmeConfig dfme = config_.dfme;
  dfme.fitting_on = !fitting_.empty();
  DfmeHead predictor(std::move(reps), graphs_, std::move(head), dfme, shape_.layers);
  const Index target = shape_.behaviors - 1;
  for (const auto& [j, m] : fitting_) predictor.set_fitting_output(j, target, tape.constant(m));

  std::vector<Index> users(static_cast<std::size_t>(shape_.items), user);
  std::vector<Index> items(static_cast<std::size_t>(shape_.items));
  for (Index v = 0; v < shape_.items; ++v) items[v] = v;
  Var scores = predictor.predict(target, users, items);
  const auto& value = scores.value();
  return std::vector<double>(value.data(), value.data() + value.size());
}

namespace {

std::vector<char> candidate_mask(const InteractionSet& train, const EvalConfig& config, Index user,
                                 const std::vector<std::vector<std::vector<Index>>>& seen) {
  std::vector<char> mask(static_cast<std::size_t>(train.num_items()), 1);
  const Index target = train.num_behaviors() - 1;
  for (Index k = 0; k < train.num_behaviors(); ++k) {
    if (k != target && !config.exclude_auxiliary) continue;
    for (Index v : seen[k][user]) mask[v] = 0;
  }
  return mask;
}

}  // namespace

std::vector<RankResult> rank_test_users(const Scorer& scorer, const InteractionSet& train,
                                        std::span<const TestPair> test, const EvalConfig& config,
                                        std::uint64_t seed) {
  config.validate();
  if (scorer.shape().users != train.num_users() || scorer.shape().items != train.num_items()) {
    throw ConfigError("scorer shape does not match the training set");
  }
  std::vector<std::vector<std::vector<Index>>> seen(train.num_behaviors(),
                                                    std::vector<std::vector<Index>>(train.num_users()));
  for (Index k = 0; k < train.num_behaviors(); ++k) {
    for (const auto& e : train.edges[k]) seen[k][e.user].push_back(e.item);
  }

  std::vector<RankResult> results(test.size());
  auto work = [&](std::size_t worker, std::size_t workers) {
    for (std::size_t i = worker; i < test.size(); i += workers) {
      const TestPair& pair = test[i];
      std::vector<char> mask = candidate_mask(train, config, pair.user, seen);
      mask[pair.item] = 1;
      if (config.candidates == CandidateMode::kSampled) {
        std::vector<Index> pool;
        for (Index v = 0; v < train.num_items(); ++v) {
          if (mask[v] && v != pair.item) pool.push_back(v);
        }
        std::vector<char> sampled(mask.size(), 0);
        sampled[pair.item] = 1;
        std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(pair.user + 1)));
        const Index want = std::min<Index>(config.sampled_negatives, static_cast<Index>(pool.size()));
        for (Index taken = 0; taken < want;) {
          std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
          const Index v = pool[pick(rng)];
          if (!sampled[v]) {
            sampled[v] = 1;
            ++taken;
          }
        }
        mask = std::move(sampled);
      }
      const auto scores = scorer.score_user(pair.user);
      results[i] = rank_from_scores(pair.user, scores, mask, pair.item);
    }
  };
  const std::size_t workers = static_cast<std::size_t>(std::max<Index>(1, config.threads));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(w, workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return results;
}

Metrics evaluate(const Scorer& scorer, const InteractionSet& train, std::span<const TestPair> test,
                 const EvalConfig& config, std::uint64_t seed) {
  return hr_ndcg(rank_test_users(scorer, train, test, config, seed), config.k);
}

}  // namespace mbrec

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

#include "mbrec/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mbrec/errors.hpp"
#include "mbrec/oracle_bridge.hpp"

namespace mbrec::verify {

namespace {

struct Worst {
  double value = 0.0;
  std::string where;

  void offer(double v, const std::string& label) {
    if (!(v <= value)) {  // NaN wins
      value = v;
      where = label;
    }
  }
};

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

std::vector<Index> as_index(const std::vector<int>& v) { return {v.begin(), v.end()}; }

// BPR of one task with weight 1 on the engine side, built from a probed
// prediction so the caller can inspect term nodes.
Var probed_task_bpr(DfmeHead& head, const TripleBatch& batch, Index k, BprReduction reduction,
                    AggregationProbe* probe) {
  const auto& triples = batch.behaviors[k];
  const Index b = static_cast<Index>(triples.size());
  std::vector<Index> users, items;
  for (const auto& t : triples) users.push_back(t.user);
  for (const auto& t : triples) users.push_back(t.user);
  for (const auto& t : triples) items.push_back(t.positive);
  for (const auto& t : triples) items.push_back(t.negative);
  Var pred = head.predict(k, users, items, probe);
  Var terms = softplus(slice_rows(pred, b, b) - slice_rows(pred, 0, b));
  return reduction == BprReduction::kMean ? mean(terms) : sum(terms);
}

Index any_task_with_triples(const TripleBatch& batch) {
  for (std::size_t k = 0; k < batch.behaviors.size(); ++k) {
    if (!batch.behaviors[k].empty()) return static_cast<Index>(k);
  }
  return -1;
}

}  // namespace

GradientResult check_gradients(const oracle::DenseFixture& fixture, const EngineConfig& config,
                               const std::string& fault, double tolerance, double h) {
  const auto start = std::chrono::steady_clock::now();
  oracle::EngineFixture f(fixture, config);
  if (!fault.empty() && !f.params.contains(fault)) {
    std::string names;
    for (std::size_t i = 0; i < f.params.size(); ++i) names += (i ? ", " : "") + f.params[i].name;
    throw UsageError("--inject-fault: no parameter '" + fault + "' (have: " + names + ")");
  }

  GradCheckOptions options;
  options.h = h;
  options.tolerance = tolerance;
  if (!fault.empty()) {
    options.corrupt_analytic = [&fault](ParameterStore& params) {
      double& g = params.at(fault).grad.data()[0];
      g += 1e-3 * std::max(1.0, std::abs(g));
    };
  }
  auto build = [&f](Tape& tape) {
    auto fwd = run_forward(tape, f.params, f.shape, f.config, f.graphs);
    return batch_objective(fwd, f.batch, f.config).total;
  };

  GradientResult result;
  result.tolerance = tolerance;
  result.engine = finite_diff_check(build, f.params, options);

  const auto numeric = oracle::numerical_gradient(f.dense, f.config, oracle::LossSelection::total(), h);
  Worst worst;
  for (std::size_t i = 0; i < f.params.size(); ++i) {
    const Parameter& p = f.params[i];
    const Matrix n = oracle::to_matrix(numeric.at(p.name));
    for (Index r = 0; r < p.rows(); ++r) {
      for (Index c = 0; c < p.cols(); ++c) {
        worst.offer(relative_error(p.grad(r, c), n(r, c), options.denominator_floor),
                    p.name + "[" + std::to_string(r) + "," + std::to_string(c) + "]");
      }
    }
  }
  result.oracle_max_relative_error = worst.value;
  result.oracle_worst = worst.where;
  result.passed = result.engine.passed && worst.value < tolerance;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

StopGradientResult check_stop_gradient(const oracle::DenseFixture& fixture, const EngineConfig& config,
                                       double zero_tolerance, double live_tolerance) {
  oracle::EngineFixture f(fixture, config);
  const Index behaviors = f.shape.behaviors;
  const Index target = behaviors - 1;
  if (behaviors < 2) throw ConfigError("stop-gradient check needs at least two behaviors");
  if (config.dfme.head != HeadKind::kDfme) throw ConfigError("stop-gradient check needs the gated head");
  if (f.batch.behaviors[target].empty()) throw DataError("stop-gradient check: fixture has no target triples");

  StopGradientResult result;
  result.zero_tolerance = zero_tolerance;
  result.live_tolerance = live_tolerance;

  // Gradient of one task's loss on the target representation e^{K,*}.
  auto target_grad = [&](Index task, AggregationProbe* probe, Tape& t, Forward& fwd) {
    Var loss = probed_task_bpr(*fwd.head, f.batch, task, f.config.train.bpr_reduction, probe);
    t.backward(loss);
    double g = max_abs(t.grad(fwd.reps.joint[target]));
    g = std::max(g, max_abs(t.grad(fwd.reps.users[target])));
    return std::max(g, max_abs(t.grad(fwd.reps.items[target])));
  };

  {
    Tape t;
    auto fwd = run_forward(t, f.params, f.shape, f.config, f.graphs);
    result.representation = !fwd.reps.fused;
  }
  double live_analytic = 0.0, live_numeric = 0.0;
  {
    Tape t;
    auto fwd = run_forward(t, f.params, f.shape, f.config, f.graphs);
    live_analytic = target_grad(target, nullptr, t, fwd);
    const Matrix n = oracle::to_matrix(oracle::numerical_representation_gradient(
        f.dense, f.config, oracle::LossSelection::bpr_only(static_cast<int>(target), static_cast<int>(behaviors)),
        static_cast<int>(target)));
    live_numeric = max_abs(n);
  }

  result.expect_zero = true;
  result.passed = true;
  for (Index k = 0; k < target; ++k) {
    if (f.batch.behaviors[k].empty()) continue;
    PathCheck check;
    check.task = k;
    check.live_analytic = live_analytic;
    check.live_numeric = live_numeric;
    Tape t;
    auto fwd = run_forward(t, f.params, f.shape, f.config, f.graphs);
    AggregationProbe probe;
    check.target_analytic = target_grad(k, &probe, t, fwd);
    const auto& term = probe.terms.at(static_cast<std::size_t>(target));
    check.stopped = term.stopped;
    for (auto id : term.nodes) {
      Var v(&t, id);
      check.term_analytic = std::max(check.term_analytic, max_abs(t.grad(v)));
    }
    check.target_numeric = max_abs(oracle::to_matrix(oracle::numerical_representation_gradient(
        f.dense, f.config, oracle::LossSelection::bpr_only(static_cast<int>(k), static_cast<int>(behaviors)),
        static_cast<int>(target))));

    const bool live = live_analytic > live_tolerance && live_numeric > live_tolerance;
    if (check.stopped) {
      bool zero = check.term_analytic < zero_tolerance;
      if (result.representation) {
        zero = zero && check.target_analytic < zero_tolerance && check.target_numeric < zero_tolerance;
      }
      check.passed = zero && live;
    } else {
      result.expect_zero = false;
      check.passed = live;
    }
    result.passed = result.passed && check.passed;
    result.tasks.push_back(check);
  }
  if (result.tasks.empty()) throw DataError("stop-gradient check: fixture has no auxiliary triples");
  return result;
}

ForwardComparison compare_forward(const oracle::DenseFixture& fixture, const EngineConfig& config) {
  oracle::EngineFixture f(fixture, config);
  const auto trace = oracle::dense_forward(f.dense, f.config);
  Tape t;
  auto fwd = run_forward(t, f.params, f.shape, f.config, f.graphs);
  Worst worst;
  auto offer = [&](const Matrix& engine, const oracle::Mat& reference, const std::string& label) {
    worst.offer(oracle::max_abs_diff(engine, reference), label);
  };
  auto offer_scalar = [&](double engine, double reference, const std::string& label) {
    worst.offer(std::abs(engine - reference), label);
  };

  const Index behaviors = f.shape.behaviors;
  for (Index k = 0; k < behaviors; ++k) {
    const std::string b = std::to_string(k);
    offer(fwd.reps.joint[k].value(), trace.joint[k], "joint[" + b + "]");
    if (!fwd.reps.fused) {
      for (Index l = 0; l <= f.shape.layers; ++l) {
        offer(fwd.reps.layers[k][l].value(), trace.layers[k][l], "layer[" + b + "][" + std::to_string(l) + "]");
      }
    }
  }
  for (const auto& [key, value] : trace.fitting) {
    offer(fwd.head->fitting_output(key.first, key.second).value(), value,
          "fitting[" + std::to_string(key.first) + "," + std::to_string(key.second) + "]");
  }
  for (Index k = 0; k < behaviors; ++k) {
    const auto& task = trace.tasks[k];
    if (task.users.empty()) continue;
    const std::string b = std::to_string(k);
    AggregationProbe probe;
    Matrix p = fwd.head->predict(k, as_index(task.users), as_index(task.items), &probe).value();
    Matrix expected(static_cast<Index>(task.predictions.size()), 1);
    for (Index r = 0; r < expected.rows(); ++r) expected(r, 0) = task.predictions[r];
    worst.offer(max_abs(p - expected), "predictions[" + b + "]");
    for (std::size_t j = 0; j < probe.terms.size() && j < task.experts.size(); ++j) {
      const auto& nodes = probe.terms[j].nodes;
      const std::string e = "[" + b + "][" + std::to_string(j) + "]";
      offer(t.value_of(nodes[0]), task.experts[j], "expert" + e);
      oracle::Mat column(task.gates.size(), std::vector<double>(1));
      for (std::size_t r = 0; r < task.gates.size(); ++r) column[r][0] = task.gates[r][j];
      offer(t.value_of(nodes[1]), column, "gate" + e);
      offer(t.value_of(nodes[2]), task.terms[j], "term" + e);
    }
  }
  if (f.config.dfme.contrastive_on) {
    for (Index k = 0; k + 1 < behaviors; ++k) {
      offer_scalar(contrastive_loss(fwd.reps, k, f.config.dfme).scalar(), trace.contrastive.at(k),
                   "contrastive[" + std::to_string(k) + "]");
    }
  }
  if (any_task_with_triples(f.batch) >= 0) {
    auto parts = batch_objective(fwd, f.batch, f.config);
    offer_scalar(parts.bpr.scalar(), trace.bpr, "bpr");
    offer_scalar(parts.total.scalar(), trace.total, "total");
  }
  return {worst.value, worst.where};
}

}  // namespace mbrec::verify

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

#include <doctest.h>

#include <random>

#include "mbrec/cogcn.hpp"
#include "support/bridge.hpp"

using namespace mbrec;

namespace {

InteractionSet make_set(Index users, Index items, std::vector<std::vector<Edge>> edges) {
  InteractionSet s;
  for (Index u = 0; u < users; ++u) s.user_ids.push_back("u" + std::to_string(u));
  for (Index v = 0; v < items; ++v) s.item_ids.push_back("i" + std::to_string(v));
  for (std::size_t k = 0; k < edges.size(); ++k) s.behaviors.push_back("b" + std::to_string(k));
  s.edges = std::move(edges);
  return s;
}

Matrix rows(std::initializer_list<std::initializer_list<double>> init) {
  Matrix m(static_cast<Index>(init.size()), static_cast<Index>(init.begin()->size()));
  Index r = 0;
  for (const auto& row : init) {
    Index c = 0;
    for (double x : row) m(r, c++) = x;
    ++r;
  }
  return m;
}

InteractionSet random_set(std::mt19937_64& rng, Index users, Index items, Index behaviors, double p) {
  std::vector<std::vector<Edge>> edges(behaviors);
  std::bernoulli_distribution keep(p);
  for (auto& list : edges) {
    for (Index u = 0; u < users; ++u) {
      for (Index v = 0; v < items; ++v) {
        if (keep(rng)) list.push_back({u, v, {}});
      }
    }
  }
  return make_set(users, items, std::move(edges));
}

Matrix random_matrix(std::mt19937_64& rng, Index r, Index c) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

TEST_CASE("relation sets per in-behavior mode") {
  CHECK(relation_set(InMode::kFull, 2, 3) == std::vector<Index>{0, 1, 2});
  CHECK(relation_set(InMode::kStrict, 2, 3) == std::vector<Index>{2});
  CHECK(relation_set(InMode::kNone, 0, 3) == std::vector<Index>{0, 1, 2});
  CHECK_THROWS_AS(relation_set(InMode::kFull, 3, 3), ConfigError);
  CHECK_THROWS_AS(relation_set(InMode::kFull, -1, 3), ConfigError);
}

TEST_CASE("propagate_layer examples") {
  Tape t;
  Var e = t.constant(rows({{1, 0}, {0, 1}}));
  CogcnConfig cfg;
  cfg.dim = 2;

  SUBCASE("one edge, neighbor plus self") {
    auto graphs = build_behavior_graphs(make_set(1, 1, {{{0, 0, {}}}}));
    CHECK(propagate_layer(e, 0, graphs, cfg).value() == rows({{1, 1}, {1, 1}}));
  }
  SUBCASE("second behavior empty, self term counted per relation") {
    auto graphs = build_behavior_graphs(make_set(1, 1, {{{0, 0, {}}}, {}}));
    Matrix out = propagate_layer(e, 1, graphs, cfg).value();
    CHECK(out.row(0) == rows({{2, 1}}));
  }
  SUBCASE("same input, self term once") {
    cfg.self_loop_mode = SelfLoopMode::kOnce;
    auto graphs = build_behavior_graphs(make_set(1, 1, {{{0, 0, {}}}, {}}));
    Matrix out = propagate_layer(e, 1, graphs, cfg).value();
    CHECK(out.row(0) == rows({{1, 1}}));
  }
  SUBCASE("behavior index out of range") {
    auto graphs = build_behavior_graphs(make_set(1, 1, {{{0, 0, {}}}}));
    CHECK_THROWS_AS(propagate_layer(e, 1, graphs, cfg), ConfigError);
  }
}

TEST_CASE("transfer_between_behaviors examples") {
  Tape t;
  Var initial = t.constant(rows({{1, 1}}));
  Var first = t.constant(rows({{1, 0}}));
  Var second = t.constant(rows({{0, 1}}));
  CogcnConfig cfg;

  SUBCASE("single upstream: full and strict coincide") {
    cfg.pre_mode = PreMode::kFull;
    Matrix full = transfer_between_behaviors({first}, initial, cfg).value();
    cfg.pre_mode = PreMode::kStrict;
    CHECK(transfer_between_behaviors({first}, initial, cfg).value() == full);
    CHECK(full == rows({{2, 1}}));
  }
  SUBCASE("none ignores upstream outputs") {
    cfg.pre_mode = PreMode::kNone;
    CHECK(transfer_between_behaviors({first, second}, initial, cfg).value() == rows({{1, 1}}));
  }
  SUBCASE("two upstream behaviors under full") {
    cfg.pre_mode = PreMode::kFull;
    CHECK(transfer_between_behaviors({first, second}, initial, cfg).value() == rows({{2, 2}}));
  }
  SUBCASE("strict keeps only the most recent") {
    cfg.pre_mode = PreMode::kStrict;
    CHECK(transfer_between_behaviors({first, second}, initial, cfg).value() == rows({{1, 2}}));
  }
}

TEST_CASE("fuse_layers examples") {
  Tape t;
  SUBCASE("depth zero returns the input block") {
    Matrix e = rows({{1, 2}, {3, 4}, {5, 6}});
    auto f = fuse_layers({t.constant(e)}, 1);
    CHECK(f.joint.value() == e);
    CHECK(f.users.value() == e.topRows(1));
    CHECK(f.items.value() == e.bottomRows(2));
  }
  SUBCASE("elementwise sum over layers") {
    auto f = fuse_layers({t.constant(rows({{1, 0}})), t.constant(rows({{2, 1}})), t.constant(rows({{0, 1}}))}, 1);
    CHECK(f.users.value() == rows({{3, 2}}));
    CHECK(f.items.rows() == 0);
  }
}

TEST_CASE("single behavior reduces to a plain propagation stack") {
  std::mt19937_64 rng(5);
  auto set = random_set(rng, 4, 5, 1, 0.5);
  auto graphs = build_behavior_graphs(set);
  CogcnConfig cfg;
  cfg.layers = 3;
  cfg.dim = 3;
  Tape t;
  Matrix users = random_matrix(rng, 4, 3), items = random_matrix(rng, 5, 3);
  auto reps = forward_all(t.constant(users), t.constant(items), graphs, cfg);
  REQUIRE(reps.num_behaviors() == 1);

  Matrix e(9, 3);
  e << users, items;
  Matrix total = e;
  for (int l = 0; l < 3; ++l) {
    e = spmm(*graphs[0].propagation, e) + e;
    total += e;
  }
  CHECK((reps.joint[0].value() - total).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(reps.layers[0].size() == 4);
}

TEST_CASE("two behaviors, one layer: hand trace") {
  // u0-i0 in behavior 0; u0-i1 in behavior 1.
  auto set = make_set(1, 2, {{{0, 0, {}}}, {{0, 1, {}}}});
  auto graphs = build_behavior_graphs(set);
  CogcnConfig cfg;
  cfg.layers = 1;
  cfg.dim = 1;
  Tape t;
  auto reps = forward_all(t.constant(rows({{1}})), t.constant(rows({{2}, {3}})), graphs, cfg);
  // Behavior 0: E1 = P0 E0 + E0 with P0 swapping u0 and i0.
  Matrix e0 = rows({{1}, {2}, {3}});
  Matrix e01 = rows({{2 + 1}, {1 + 2}, {0 + 3}});
  CHECK(reps.joint[0].value() == e0 + e01);
  // Seed of behavior 1: E^{0,L} + E^{0,0}.
  Matrix seed = e01 + e0;
  // Behavior 1 propagates over relations {0, 1} with a self term per relation.
  Matrix p0 = rows({{seed(1, 0)}, {seed(0, 0)}, {0}});
  Matrix p1 = rows({{seed(2, 0)}, {0}, {seed(0, 0)}});
  Matrix e11 = p0 + seed + p1 + seed;
  CHECK(reps.joint[1].value() == seed + e11);
  CHECK(reps.users[1].value() == (seed + e11).topRows(1));
}

TEST_CASE("zero embeddings give zero outputs and the network is linear") {
  std::mt19937_64 rng(9);
  auto set = random_set(rng, 3, 4, 3, 0.5);
  auto graphs = build_behavior_graphs(set);
  CogcnConfig cfg;
  cfg.dim = 2;
  Tape t;
  auto zero = forward_all(t.constant(Matrix::Zero(3, 2)), t.constant(Matrix::Zero(4, 2)), graphs, cfg);
  for (const auto& j : zero.joint) CHECK(j.value().isZero(0.0));

  Matrix users = random_matrix(rng, 3, 2), items = random_matrix(rng, 4, 2);
  auto base = forward_all(t.constant(users), t.constant(items), graphs, cfg);
  auto scaled = forward_all(t.constant(users * 2.5), t.constant(items * 2.5), graphs, cfg);
  for (Index k = 0; k < 3; ++k) {
    CHECK((scaled.joint[k].value() - 2.5 * base.joint[k].value()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("fused post mode returns the mean output for every behavior") {
  std::mt19937_64 rng(3);
  auto set = random_set(rng, 3, 3, 3, 0.5);
  auto graphs = build_behavior_graphs(set);
  CogcnConfig cfg;
  cfg.dim = 2;
  Tape t;
  Matrix users = random_matrix(rng, 3, 2), items = random_matrix(rng, 3, 2);
  auto decoupled = forward_all(t.constant(users), t.constant(items), graphs, cfg);
  cfg.post_mode = PostMode::kFused;
  auto fused = forward_all(t.constant(users), t.constant(items), graphs, cfg);
  CHECK(fused.fused);
  Matrix mean = (decoupled.joint[0].value() + decoupled.joint[1].value() + decoupled.joint[2].value()) / 3.0;
  for (Index k = 0; k < 3; ++k) {
    CHECK((fused.joint[k].value() - mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(fused.users[k].rows() == 3);
    CHECK(fused.items[k].rows() == 3);
  }
}

TEST_CASE("downstream edits never change upstream outputs") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto set = random_set(rng, 4, 4, 3, 0.4);
    set.edges[2].push_back({0, 0, {}});
    set.edges[2].erase(std::unique(set.edges[2].begin(), set.edges[2].end()), set.edges[2].end());
    auto edited = set;
    const Index k = trial % 2;  // inspect behavior 0 or 1
    for (Index b = k + 1; b < 3; ++b) {
      edited.edges[b].clear();
      for (Index u = 0; u < 4; ++u) {
        if (rng() % 2) edited.edges[b].push_back({u, static_cast<Index>(rng() % 4), {}});
      }
    }
    CogcnConfig cfg;
    cfg.dim = 3;
    Tape t;
    Matrix users = random_matrix(rng, 4, 3), items = random_matrix(rng, 4, 3);
    auto a = forward_all(t.constant(users), t.constant(items), build_behavior_graphs(set), cfg);
    auto b = forward_all(t.constant(users), t.constant(items), build_behavior_graphs(edited), cfg);
    for (Index j = 0; j <= k; ++j) CHECK(a.joint[j].value() == b.joint[j].value());
  }
}

TEST_CASE("variant names map onto the constraint stages") {
  struct Row {
    const char* name;
    PreMode pre;
    InMode in;
    PostMode post;
  };
  const Row table[] = {
      {"copf-p", PreMode::kNone, InMode::kFull, PostMode::kDecoupled},
      {"copf-a", PreMode::kFull, InMode::kNone, PostMode::kDecoupled},
      {"copf-f", PreMode::kNone, InMode::kNone, PostMode::kDecoupled},
      {"copf-c", PreMode::kStrict, InMode::kStrict, PostMode::kDecoupled},
      {"copf-b", PreMode::kStrict, InMode::kFull, PostMode::kDecoupled},
      {"copf-h", PreMode::kFull, InMode::kStrict, PostMode::kDecoupled},
      {"copf-d", PreMode::kFull, InMode::kFull, PostMode::kFused},
  };
  for (const auto& row : table) {
    EngineConfig c;
    apply_variant(c, row.name);
    CHECK(c.cogcn.pre_mode == row.pre);
    CHECK(c.cogcn.in_mode == row.in);
    CHECK(c.cogcn.post_mode == row.post);
  }
}

TEST_CASE("sparse path matches the dense reference on every fixture") {
  std::vector<std::filesystem::path> files = {testing::fixture_dir() / "standard.json"};
  for (int i = 0; i < 20; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "r%02d.json", i);
    files.push_back(testing::fixture_dir() / "random" / name);
  }
  for (const auto& file : files) {
    CAPTURE(file.string());
    testing::EngineFixture f(oracle::load_fixture(file));
    auto trace = oracle::dense_forward(f.dense, f.config);
    Tape t;
    auto fwd = run_forward(t, f.params, f.shape, f.config, f.graphs);
    for (Index k = 0; k < f.shape.behaviors; ++k) {
      CHECK(testing::max_abs_diff(fwd.reps.joint[k].value(), trace.joint[k]) <= 1e-10);
      if (!fwd.reps.fused) {
        for (Index l = 0; l <= f.shape.layers; ++l) {
          CHECK(testing::max_abs_diff(fwd.reps.layers[k][l].value(), trace.layers[k][l]) <= 1e-10);
        }
      }
    }
  }
}

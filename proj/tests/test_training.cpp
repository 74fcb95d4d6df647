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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "mbrec/training.hpp"
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

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("mbrec_train_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

// Three users, five items, two behaviors; every user has three target items.
Split small_split() {
  std::vector<Edge> view, buy;
  for (Index u = 0; u < 3; ++u) {
    for (Index j = 0; j < 4; ++j) view.push_back({u, (u + j) % 5, {}});
    for (Index j = 0; j < 3; ++j) buy.push_back({u, (u + j) % 5, j});
  }
  return leave_one_out_split(make_set(3, 5, {view, buy}), 1);
}

EngineConfig small_config() {
  EngineConfig cfg;
  cfg.cogcn.dim = 8;
  cfg.train.batch_size = 16;
  cfg.train.epochs = 200;
  cfg.train.patience = 1000;
  cfg.train.eval_every = 50;
  cfg.train.adam.lr = 0.01;
  cfg.train.seed = 7;
  cfg.dfme.tau = 0.5;
  return cfg;
}

// A head whose predictions are e_u * e_v in one dimension.
struct ScalarHead {
  Tape tape;
  BehaviorGraphs graphs;
  std::unique_ptr<DfmeHead> head;

  ScalarHead(const Matrix& users, const Matrix& items) {
    BehaviorRepresentations reps;
    reps.num_users = users.rows();
    reps.num_items = items.rows();
    Var u = tape.constant(users), v = tape.constant(items);
    reps.users = {u};
    reps.items = {v};
    reps.joint = {concat_rows(u, v)};
    DfmeConfig cfg;
    cfg.head = HeadKind::kBilinear;
    head = std::make_unique<DfmeHead>(reps, graphs, HeadParams{}, cfg, 0);
  }
};

}  // namespace

TEST_CASE("sampler skips users without a valid negative") {
  auto set = make_set(2, 2, {{{0, 0, {}}, {0, 1, {}}, {1, 0, {}}}});
  TripleSampler sampler(set, 100);
  int messages = 0;
  sampler.log = [&](const std::string&) { ++messages; };
  std::mt19937_64 rng(1);
  auto batch = sampler.sample(50, rng);
  for (const auto& t : batch.behaviors[0]) {
    CHECK(t.user == 1);
    CHECK(t.negative == 1);
  }
  CHECK(sampler.skipped() > 0);
  CHECK(static_cast<Index>(batch.behaviors[0].size()) + sampler.skipped() == 50);
  sampler.sample(50, rng);
  CHECK(messages == 1);
}

TEST_CASE("sampled triples are valid and reproducible") {
  std::mt19937_64 gen(3);
  std::vector<std::vector<Edge>> edges(2);
  for (auto& list : edges) {
    for (Index u = 0; u < 10; ++u) {
      for (Index v = 0; v < 8; ++v) {
        if (gen() % 3 == 0) list.push_back({u, v, {}});
      }
    }
  }
  auto set = make_set(10, 8, edges);
  TripleSampler sampler(set);
  std::mt19937_64 a(42), b(42);
  auto first = sampler.sample(64, a);
  auto second = sampler.sample(64, b);
  CHECK(first == second);
  for (Index k = 0; k < 2; ++k) {
    for (const auto& t : first.behaviors[k]) {
      CHECK(sampler.observed(k, t.user, t.positive));
      CHECK_FALSE(sampler.observed(k, t.user, t.negative));
    }
  }
}

TEST_CASE("positives are uniform over edges") {
  std::vector<Edge> list;
  for (Index v = 0; v < 10; ++v) list.push_back({v % 3, v, {}});
  auto set = make_set(3, 20, {list});
  TripleSampler sampler(set);
  std::mt19937_64 rng(1);
  const Index draws = 100000;
  auto batch = sampler.sample(draws, rng);
  std::map<Index, Index> counts;
  for (const auto& t : batch.behaviors[0]) ++counts[t.positive];
  const double p = 0.1, expected = draws * p, sigma = std::sqrt(draws * p * (1 - p));
  CHECK(counts.size() == 10);
  double chi2 = 0.0;
  for (const auto& [item, count] : counts) {
    CAPTURE(item);
    CHECK(std::abs(count - expected) <= 3 * sigma);
    chi2 += (count - expected) * (count - expected) / expected;
  }
  // 99.9% quantile of chi-square with 9 degrees of freedom.
  CHECK(chi2 < 27.88);
}

TEST_CASE("bpr closed forms") {
  Matrix users(1, 1), items(3, 1);
  users << 1.0;
  items << 1.0, 1.0, 0.0;
  ScalarHead h(users, items);
  auto loss = [&](Index pos, Index neg) {
    TripleBatch batch{{{{0, pos, neg}}}};
    return bpr_loss(*h.head, batch, {1.0}, BprReduction::kMean).scalar();
  };
  CHECK(loss(0, 1) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(loss(0, 2) == doctest::Approx(0.313262).epsilon(1e-6));
  CHECK(loss(2, 0) == doctest::Approx(1.313262).epsilon(1e-6));

  TripleBatch two{{{{0, 0, 2}, {0, 2, 0}}}};
  const double mean = bpr_loss(*h.head, two, {1.0}, BprReduction::kMean).scalar();
  const double total = bpr_loss(*h.head, two, {1.0}, BprReduction::kSum).scalar();
  CHECK(total == doctest::Approx(2 * mean).epsilon(1e-14));
  CHECK_THROWS_AS(bpr_loss(*h.head, TripleBatch{{{}}}, {1.0}, BprReduction::kMean), DataError);
}

TEST_CASE("total loss assembly") {
  Tape t;
  Parameter p("w", 1, 1, InitScheme::kZeros);
  p.value(0, 0) = 2.0;
  Var w = t.parameter(p);
  Var zero = t.constant(Matrix::Zero(1, 1));
  auto parts = total_loss(zero, {}, {w}, 1.0, 0.01);
  CHECK(parts.total.scalar() == doctest::Approx(0.04).epsilon(1e-15));

  Var bpr = t.constant(Matrix::Constant(1, 1, 0.7));
  auto off = total_loss(bpr, {t.constant(Matrix::Constant(1, 1, 3.0))}, {w}, 0.0, 0.0);
  CHECK(off.total.scalar() == 0.7);
}

TEST_CASE("fixture objective equals the sum of its printed components") {
  testing::EngineFixture f(oracle::load_fixture(testing::fixture_dir() / "standard.json"));
  Tape t;
  auto fwd = run_forward(t, f.params, f.shape, f.config, f.graphs);
  auto parts = batch_objective(fwd, f.batch, f.config);
  REQUIRE(parts.cl.valid());
  REQUIRE(parts.reg.valid());
  const double sum = parts.bpr.scalar() + f.config.dfme.gamma * parts.cl.scalar() + parts.reg.scalar();
  CHECK(parts.total.scalar() == doctest::Approx(sum).epsilon(1e-14));
  CHECK(parts.bpr.scalar() >= 0.0);
  CHECK(parts.cl.scalar() >= 0.0);
  CHECK(parts.reg.scalar() >= 0.0);

  auto trace = oracle::dense_forward(f.dense, f.config);
  CHECK(std::abs(parts.total.scalar() - trace.total) <= 1e-10);
}

TEST_CASE("target-only weights leave auxiliary gates without gradient") {
  auto dense = oracle::load_fixture(testing::fixture_dir() / "standard.json");
  EngineConfig cfg = dense.engine_config();
  cfg.dfme.gate_sharing = GateSharing::kPerTask;
  cfg.dfme.contrastive_on = false;
  cfg.train.lambdas = {0.0, 1.0};
  cfg.train.mu = 0.0;
  auto set = testing::interaction_set_of(dense);
  auto graphs = build_behavior_graphs(set);
  auto shape = ModelShape::of(set, cfg.cogcn);
  auto params = make_parameters(shape, cfg);
  params.initialize(5);
  Tape t;
  auto fwd = run_forward(t, params, shape, cfg, graphs);
  auto parts = batch_objective(fwd, testing::triple_batch_of(dense), cfg);
  t.backward(parts.total);
  CHECK(params.at("gate_weight/0").grad.isZero(0.0));
  CHECK(params.at("gate_bias/0").grad.isZero(0.0));
  CHECK_FALSE(params.at("gate_bias/1").grad.isZero(0.0));
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  auto split = small_split();
  EngineConfig cfg = small_config();
  cfg.train.adam.lr = 0.0;
  auto data = training_view(split, cfg);
  auto graphs = build_behavior_graphs(data);
  auto shape = ModelShape::of(data, cfg.cogcn);
  auto params = make_parameters(shape, cfg);
  params.initialize(cfg.train.seed);
  std::vector<Matrix> before;
  for (std::size_t i = 0; i < params.size(); ++i) before.push_back(params[i].value);
  TripleSampler sampler(data);
  std::mt19937_64 rng(1);
  for (int step = 1; step <= 5; ++step) {
    params.zero_grad();
    Tape t;
    auto fwd = run_forward(t, params, shape, cfg, graphs);
    auto parts = batch_objective(fwd, sampler.sample(8, rng), cfg);
    t.backward(parts.total);
    adam_step(params, cfg.train.adam, step);
  }
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i].value == before[i]);
}

TEST_CASE("smoke run: loss halves within 200 epochs and logs are reproducible") {
  auto split = small_split();
  EngineConfig cfg = small_config();
  TempDir a, b;
  auto first = train(split, cfg, {a.path, {}, {}});
  auto second = train(split, cfg, {b.path, {}, {}});
  REQUIRE(first.epochs.size() == 200);
  auto objective = [&](const EpochRecord& r) { return r.l_bpr + cfg.dfme.gamma * r.l_cl + r.l_reg; };
  CHECK(objective(first.epochs.back()) <= 0.5 * objective(first.epochs.front()));
  REQUIRE(second.epochs.size() == first.epochs.size());
  for (std::size_t i = 0; i < first.epochs.size(); ++i) {
    auto x = first.epochs[i], y = second.epochs[i];
    x.seconds = y.seconds = 0.0;
    CHECK(format_epoch_record(x) == format_epoch_record(y));
  }
  CHECK(first.best == second.best);
  CHECK(std::filesystem::exists(a.path / "best.ckpt"));
  CHECK(std::filesystem::exists(a.path / "epochs.jsonl"));
}

TEST_CASE("epoch records are single json lines") {
  EpochRecord r;
  r.epoch = 3;
  r.l_bpr = 0.1;
  r.hr10 = 0.5;
  const auto line = format_epoch_record(r);
  CHECK(line.find('\n') == std::string::npos);
  auto doc = nlohmann::json::parse(line);
  CHECK(doc["epoch"] == 3);
  CHECK(doc["l_bpr"].get<double>() == 0.1);
  CHECK(doc["hr10"].get<double>() == 0.5);
  CHECK(doc["ndcg10"].is_null());
}

TEST_CASE("checkpoint round trip") {
  EngineConfig cfg;
  cfg.cogcn.dim = 3;
  auto set = make_set(2, 2, {{{0, 0, {}}}, {{1, 1, {}}}});
  auto shape = ModelShape::of(set, cfg.cogcn);
  auto params = make_parameters(shape, cfg);
  params.initialize(11);
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].adam_m.setConstant(0.25 * static_cast<double>(i));
    params[i].adam_v.setConstant(0.5);
  }
  TempDir dir;
  const auto path = dir.path / "c.ckpt";
  save_checkpoint(path, params, config_hash(cfg), 17);

  auto other = make_parameters(shape, cfg);
  CHECK(load_checkpoint(path, other, config_hash(cfg)) == 17);
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(other[i].value == params[i].value);
    CHECK(other[i].adam_m == params[i].adam_m);
    CHECK(other[i].adam_v == params[i].adam_v);
  }
  CHECK_THROWS_AS(load_checkpoint(path, other, "0000000000000000"), ConfigError);
  {
    std::ofstream(dir.path / "junk.ckpt") << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(dir.path / "junk.ckpt", other, config_hash(cfg)), DataError);
}

TEST_CASE("non-finite loss aborts and keeps the last good checkpoint") {
  auto split = small_split();
  EngineConfig cfg = small_config();
  cfg.train.adam.lr = 1e300;
  cfg.train.batch_size = 1000;
  cfg.train.eval_every = 1;
  cfg.train.epochs = 5;
  TempDir dir;
  CHECK_THROWS_AS(train(split, cfg, {dir.path, {}, {}}), NumericError);
  REQUIRE(std::filesystem::exists(dir.path / "best.ckpt"));
  auto data = training_view(split, cfg);
  auto params = make_parameters(ModelShape::of(data, cfg.cogcn), cfg);
  CHECK_NOTHROW(load_checkpoint(dir.path / "best.ckpt", params, config_hash(cfg)));
}

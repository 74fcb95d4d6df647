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
#include <random>

#include "mbrec/autograd.hpp"
#include "mbrec/gradcheck.hpp"
#include "mbrec/optim.hpp"

using namespace mbrec;

namespace {

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

SparseMatrix random_sparse(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::bernoulli_distribution keep(0.5);
  std::vector<Triplet<double>> entries;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (keep(rng)) entries.push_back({r, c, dist(rng)});
    }
  }
  return SparseMatrix::from_triplets(rows, cols, std::move(entries));
}

// Runs finite_diff_check on a loss built from a single parameter.
GradCheckReport check_unary(Matrix init, const std::function<Var(Var)>& f) {
  ParameterStore store;
  auto& p = store.add("x", init.rows(), init.cols(), InitScheme::kZeros);
  p.value = std::move(init);
  return finite_diff_check([&](Tape& t) { return f(t.parameter(store.at("x"))); }, store);
}

}  // namespace

TEST_CASE("spmm matches the worked examples") {
  Matrix b(2, 2);
  b << 1, 2, 3, 4;
  Matrix eye = Matrix::Identity(2, 2);
  CHECK(spmm(SparseMatrix::from_dense(eye), b) == b);
  CHECK(spmm(SparseMatrix(2, 2), b) == Matrix::Zero(2, 2));

  Matrix a(2, 2);
  a << 0, 1, 0.5, 0;
  Matrix b2(2, 2);
  b2 << 1, 0, 0, 2;
  Matrix expected(2, 2);
  expected << 0, 2, 0.5, 0;
  CHECK(spmm(SparseMatrix::from_dense(a), b2) == expected);
}

TEST_CASE("spmm rejects mismatched shapes with both shapes in the message") {
  SparseMatrix a(2, 3);
  Matrix b = Matrix::Zero(2, 2);
  try {
    spmm(a, b);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("2x2") != std::string::npos);
  }
}

TEST_CASE("spmm equals the dense product exactly") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    SparseMatrix a = random_sparse(5, 4, rng);
    Matrix b = random_matrix(4, 3, rng);
    Matrix dense = a.densify();
    Matrix expected = Matrix::Zero(5, 3);
    for (Index r = 0; r < 5; ++r) {
      for (Index c = 0; c < 4; ++c) {
        if (dense(r, c) == 0.0) continue;
        for (Index j = 0; j < 3; ++j) expected(r, j) += dense(r, c) * b(c, j);
      }
    }
    CHECK(spmm(a, b) == expected);
  }
}

TEST_CASE("csr layout keeps sorted columns and no explicit zeros") {
  auto a = SparseMatrix::from_triplets(2, 3, {{0, 2, 1.0}, {0, 0, 2.0}, {1, 1, 0.0}, {0, 2, -1.0}, {1, 0, 3.0}});
  CHECK(a.nnz() == 2);
  CHECK(a.row_indices(0).size() == 1);
  CHECK(a.row_indices(0)[0] == 0);
  CHECK(a.row_values(1)[0] == 3.0);
  CHECK_NOTHROW(SparseMatrix(2, 2, {0, 1, 2}, {1, 0}, {1.0, 2.0}));
  CHECK_THROWS(SparseMatrix(2, 2, {0, 2, 2}, {1, 0}, {1.0, 2.0}));
}

TEST_CASE("backward examples") {
  SUBCASE("quadratic") {
    Tape t;
    Matrix x(1, 2);
    x << 1, 2;
    Var v = t.input(x);
    Var loss = sum(hadamard(v, v));
    t.backward(loss);
    Matrix expected(1, 2);
    expected << 2, 4;
    CHECK(t.grad(v) == expected);
  }
  SUBCASE("stop-gradient blocks one factor") {
    Tape t;
    Matrix x(1, 2);
    x << 1, 2;
    Var v = t.input(x);
    Var loss = sum(hadamard(stop_gradient(v), v));
    t.backward(loss);
    CHECK(t.grad(v) == x);
  }
  SUBCASE("non-scalar loss is a usage error") {
    Tape t;
    Var v = t.input(Matrix::Ones(2, 2));
    CHECK_THROWS_AS(t.backward(v), UsageError);
  }
}

TEST_CASE("stop-gradient contributes exactly zero upstream") {
  Tape t;
  std::mt19937_64 rng(3);
  Var x = t.input(random_matrix(3, 3, rng));
  Var blocked = stop_gradient(matmul(x, x));
  Var loss = sum(hadamard(blocked, blocked));
  t.backward(loss);
  CHECK_FALSE(t.has_grad(x));
  CHECK(t.grad(x) == Matrix::Zero(3, 3));
}

TEST_CASE("sum of spmm(A, X W) matches finite differences") {
  std::mt19937_64 rng(11);
  auto a = std::make_shared<const SparseMatrix>(random_sparse(3, 3, rng));
  Matrix x = random_matrix(3, 3, rng);
  ParameterStore store;
  store.add("w", 3, 3, InitScheme::kZeros).value = random_matrix(3, 3, rng);
  GradCheckOptions opts;
  opts.tolerance = 1e-6;
  auto report = finite_diff_check(
      [&](Tape& t) { return sum(spmm(a, matmul(t.constant(x), t.parameter(store.at("w"))))); }, store, opts);
  CHECK(report.passed);
  CHECK(report.max_relative_error < 1e-6);
}

TEST_CASE("finite_diff_check on linear and constant-sum losses") {
  std::mt19937_64 rng(5);
  auto linear = check_unary(random_matrix(2, 3, rng), [](Var x) { return sum(x); });
  CHECK(linear.passed);
  CHECK(linear.max_relative_error == doctest::Approx(0.0).epsilon(1e-9));

  auto softmax_sum = check_unary(random_matrix(1, 4, rng), [](Var x) { return sum(softmax_rows(x)); });
  CHECK(softmax_sum.passed);
}

TEST_CASE("every differentiable op matches finite differences") {
  std::mt19937_64 rng(19);
  const Matrix a = random_matrix(3, 4, rng);
  const Matrix b = random_matrix(3, 4, rng);
  const Matrix row = random_matrix(1, 4, rng);
  const Matrix col = random_matrix(3, 1, rng);
  const Matrix sq = random_matrix(4, 4, rng);
  Matrix positive = a.cwiseAbs().array() + 0.5;

  std::vector<std::pair<std::string, std::function<Var(Var)>>> cases = {
      {"matmul", [&](Var x) { return sum(matmul(x, x.tape().constant(sq))); }},
      {"matmul_lhs_const", [&](Var x) { return sum(matmul(x.tape().constant(sq), transpose(x))); }},
      {"matmul_nt", [&](Var x) { return sum(hadamard(matmul_nt(x, x), matmul_nt(x, x))); }},
      {"transpose", [&](Var x) { return sum(hadamard(transpose(x), transpose(x))); }},
      {"add_sub", [&](Var x) { return squared_norm((x + x.tape().constant(b)) - scale(x, 3.0)); }},
      {"hadamard", [&](Var x) { return sum(hadamard(x, hadamard(x, x))); }},
      {"add_row_broadcast", [&](Var x) { return squared_norm(add_row_broadcast(x, slice_rows(x, 0, 1))); }},
      {"mul_row_broadcast", [&](Var x) { return sum(mul_row_broadcast(x, slice_rows(x, 2, 1))); }},
      {"mul_col_broadcast", [&](Var x) { return sum(mul_col_broadcast(x, slice_cols(x, 1, 1))); }},
      {"concat_rows", [&](Var x) { return squared_norm(concat_rows(x, scale(x, 2.0))); }},
      {"concat_cols", [&](Var x) { return sum(hadamard(concat_cols(x, x), concat_cols(x, x))); }},
      {"gather_rows", [&](Var x) { return squared_norm(gather_rows(x, {2, 0, 2, 1})); }},
      {"row_sum", [&](Var x) { return squared_norm(row_sum(x)); }},
      {"row_mean", [&](Var x) { return squared_norm(row_mean(x)); }},
      {"mean", [&](Var x) { return hadamard(mean(x), mean(x)); }},
      {"softmax_rows", [&](Var x) { return sum(hadamard(softmax_rows(x), x.tape().constant(b))); }},
      {"logsumexp_rows", [&](Var x) { return sum(logsumexp_rows(x)); }},
      {"sigmoid", [&](Var x) { return sum(hadamard(sigmoid(x), x)); }},
      {"softplus", [&](Var x) { return sum(softplus(scale(x, 4.0))); }},
      {"exp", [&](Var x) { return sum(exp(x)); }},
      {"l2_normalize_rows", [&](Var x) { return sum(hadamard(l2_normalize_rows(x), x.tape().constant(b))); }},
  };
  for (const auto& [name, f] : cases) {
    CAPTURE(name);
    auto report = check_unary(a, f);
    CHECK(report.max_relative_error < 1e-4);
  }
  auto logs = check_unary(positive, [](Var x) { return sum(log(x)); });
  CHECK(logs.max_relative_error < 1e-4);
  (void)row;
  (void)col;
}

TEST_CASE("softmax is stable for large logits and shift invariant") {
  Tape t;
  Matrix logits(1, 3);
  logits << 1000.0, 999.0, 998.0;
  Var y = softmax_rows(t.constant(logits));
  CHECK(y.value().allFinite());
  CHECK(y.value().sum() == doctest::Approx(1.0).epsilon(1e-12));
  Var shifted = softmax_rows(t.constant((logits.array() - 1000.0).matrix()));
  CHECK((y.value() - shifted.value()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("finite_diff_check reports non-deterministic losses") {
  ParameterStore store;
  store.add("x", 1, 2, InitScheme::kOnes).value.setOnes();
  int calls = 0;
  CHECK_THROWS_AS(finite_diff_check(
                      [&](Tape& t) {
                        ++calls;
                        return scale(sum(t.parameter(store.at("x"))), 1.0 + calls);
                      },
                      store),
                  VerificationError);
}

TEST_CASE("finite_diff_check names a corrupted parameter") {
  ParameterStore store;
  store.add("a", 1, 2, InitScheme::kOnes).value << 0.3, -0.2;
  store.add("b", 2, 1, InitScheme::kOnes).value << 1.5, 0.7;
  GradCheckOptions opts;
  opts.corrupt_analytic = [](ParameterStore& s) { s.at("b").grad(1, 0) += 0.1; };
  auto report = finite_diff_check(
      [&](Tape& t) { return sum(matmul(t.parameter(store.at("a")), t.parameter(store.at("b")))); }, store, opts);
  CHECK_FALSE(report.passed);
  REQUIRE(report.worst() != nullptr);
  CHECK(report.worst()->name == "b");
}

TEST_CASE("tape replay is bitwise deterministic") {
  auto run = [] {
    std::mt19937_64 rng(23);
    ParameterStore store;
    store.add("w", 4, 3, InitScheme::kZeros).value = random_matrix(4, 3, rng);
    Matrix x = random_matrix(5, 4, rng);
    Tape t;
    Var loss = sum(softplus(matmul(t.constant(x), t.parameter(store.at("w")))));
    t.backward(loss);
    return std::make_pair(loss.scalar(), Matrix(store.at("w").grad));
  };
  auto first = run();
  auto second = run();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
}

TEST_CASE("adam examples") {
  SUBCASE("zero gradient is a fixed point") {
    ParameterStore store;
    auto& p = store.add("x", 2, 2, InitScheme::kOnes);
    p.value << 1, 2, 3, 4;
    Matrix before = p.value;
    adam_step(store, {}, 1);
    CHECK(p.value == before);
    CHECK(p.adam_m == Matrix::Zero(2, 2));
    CHECK(p.adam_v == Matrix::Zero(2, 2));
  }
  SUBCASE("unit gradient on the first step") {
    ParameterStore store;
    auto& p = store.add("x", 1, 1, InitScheme::kZeros);
    p.value(0, 0) = 0.0;
    p.grad(0, 0) = 1.0;
    adam_step(store, {}, 1);
    // m_hat = v_hat = 1, so the step is -lr / (1 + eps).
    CHECK(p.value(0, 0) == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(std::abs(p.value(0, 0) - -0.00099999999) < 1e-15);
  }
  SUBCASE("identical successive gradients keep the step at or below lr") {
    ParameterStore store;
    auto& p = store.add("x", 1, 1, InitScheme::kZeros);
    p.grad(0, 0) = 1.0;
    adam_step(store, {}, 1);
    const double first = -p.value(0, 0);
    adam_step(store, {}, 2);
    const double second = -p.value(0, 0) - first;
    CHECK(first < 1e-3);
    CHECK(second < 1e-3);
    // Hand recursion: m = 0.19, v = 0.001999, bias-corrected ratio below 1.
    const double m_hat = (0.9 * 0.1 + 0.1) / (1 - 0.81);
    const double v_hat = (0.999 * 0.001 + 0.001) / (1 - 0.999 * 0.999);
    CHECK(second == doctest::Approx(1e-3 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("non-finite gradient aborts and names the parameter") {
    ParameterStore store;
    store.add("ok", 1, 1, InitScheme::kZeros);
    auto& bad = store.add("bad", 1, 1, InitScheme::kZeros);
    bad.grad(0, 0) = std::nan("");
    try {
      adam_step(store, {}, 1);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("bad") != std::string::npos);
    }
    CHECK(store.at("ok").adam_m(0, 0) == 0.0);
  }
  SUBCASE("lr zero leaves values bitwise unchanged") {
    ParameterStore store;
    auto& p = store.add("x", 1, 3, InitScheme::kZeros);
    p.value << 0.1, -0.2, 0.3;
    p.grad << 1, 2, 3;
    Matrix before = p.value;
    AdamSettings s;
    s.lr = 0.0;
    adam_step(store, s, 1);
    CHECK(p.value == before);
  }
}

TEST_CASE("parameter initialization is deterministic and Xavier bounded") {
  ParameterStore a, b;
  a.add("w", 10, 6, InitScheme::kXavierUniform);
  b.add("w", 10, 6, InitScheme::kXavierUniform);
  a.initialize(42);
  b.initialize(42);
  CHECK(a.at("w").value == b.at("w").value);
  CHECK(a.at("w").value.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 16.0));
  CHECK_THROWS_AS(a.add("w", 1, 1, InitScheme::kZeros), ConfigError);
}

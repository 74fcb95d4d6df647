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

#include "mbrec/oracle_bridge.hpp"

#include <cmath>

namespace mbrec::oracle {

InteractionSet interaction_set_of(const DenseFixture& f) {
  InteractionSet set;
  set.behaviors = f.behaviors;
  for (int u = 0; u < f.users; ++u) set.user_ids.push_back("u" + std::to_string(u));
  for (int v = 0; v < f.items; ++v) set.item_ids.push_back("i" + std::to_string(v));
  set.edges.resize(f.behaviors.size());
  for (int k = 0; k < f.num_behaviors(); ++k) {
    for (int u = 0; u < f.users; ++u) {
      for (int v = 0; v < f.items; ++v) {
        if (f.interactions[k][u][v] != 0.0) set.edges[k].push_back({u, v, std::nullopt});
      }
    }
  }
  set.validate();
  return set;
}

TripleBatch triple_batch_of(const DenseFixture& f) {
  TripleBatch batch;
  for (const auto& list : f.triples) {
    auto& out = batch.behaviors.emplace_back();
    for (const auto& t : list) out.push_back({t.user, t.positive, t.negative});
  }
  return batch;
}

Matrix to_matrix(const Mat& m) {
  const Index rows = static_cast<Index>(m.size());
  const Index cols = rows ? static_cast<Index>(m[0].size()) : 0;
  Matrix out(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) out(r, c) = m[r][c];
  }
  return out;
}

Mat to_mat(const Matrix& m) {
  Mat out(m.rows(), std::vector<double>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Mat& b) {
  const Matrix bm = to_matrix(b);
  if (a.rows() != bm.rows() || a.cols() != bm.cols()) return INFINITY;
  if (a.size() == 0) return 0.0;
  return (a - bm).cwiseAbs().maxCoeff();
}

ParameterStore parameters_of(const DenseFixture& f, const ModelShape& shape, const EngineConfig& config) {
  ParameterStore store = make_parameters(shape, config);
  if (store.size() != f.parameters.size()) {
    throw ConfigError("fixture has " + std::to_string(f.parameters.size()) + " parameters, model registers " +
                      std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    auto it = f.parameters.find(p.name);
    if (it == f.parameters.end()) throw ConfigError("fixture lacks parameter '" + p.name + "'");
    const Matrix value = to_matrix(it->second);
    if (value.rows() != p.rows() || value.cols() != p.cols()) {
      throw ConfigError("fixture parameter '" + p.name + "' is " + shape_string(value) + ", expected " +
                        shape_string(p.value));
    }
    p.value = value;
  }
  return store;
}

EngineFixture::EngineFixture(DenseFixture fixture) : EngineFixture(fixture, fixture.engine_config()) {}

EngineFixture::EngineFixture(DenseFixture fixture, EngineConfig cfg)
    : dense(std::move(fixture)),
      config(std::move(cfg)),
      set(interaction_set_of(dense)),
      graphs(build_behavior_graphs(set, config.cogcn.degree_mode)),
      shape(ModelShape::of(set, config.cogcn)),
      params(parameters_of(dense, shape, config)),
      batch(triple_batch_of(dense)) {}

}  // namespace mbrec::oracle

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

#include "mbrec/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace mbrec::oracle {

namespace {

Mat zeros(int rows, int cols) { return Mat(rows, std::vector<double>(cols, 0.0)); }

int rows_of(const Mat& m) { return static_cast<int>(m.size()); }
int cols_of(const Mat& m) { return m.empty() ? 0 : static_cast<int>(m[0].size()); }

Mat plus(const Mat& a, const Mat& b) {
  Mat out = a;
  for (int i = 0; i < rows_of(a); ++i) {
    for (int c = 0; c < cols_of(a); ++c) out[i][c] = a[i][c] + b[i][c];
  }
  return out;
}

Mat times(const Mat& a, double s) {
  Mat out = a;
  for (auto& row : out) {
    for (double& x : row) x = x * s;
  }
  return out;
}

// Row i of the result sums p(i, j) * e(j, :) over j ascending, skipping zeros.
Mat sparse_like_product(const Mat& p, const Mat& e) {
  Mat out = zeros(rows_of(p), cols_of(e));
  for (int i = 0; i < rows_of(p); ++i) {
    for (int j = 0; j < cols_of(p); ++j) {
      if (p[i][j] == 0.0) continue;
      for (int c = 0; c < cols_of(e); ++c) out[i][c] += p[i][j] * e[j][c];
    }
  }
  return out;
}

double softplus_of(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

std::vector<double> softmax_of(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> y(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    y[i] = std::exp(logits[i] - m);
    total += y[i];
  }
  for (double& v : y) v /= total;
  return y;
}

Mat normalize_rows(const Mat& a) {
  Mat out = a;
  for (auto& row : out) {
    double sq = 0.0;
    for (double x : row) sq += x * x;
    const double norm = std::max(std::sqrt(sq), 1e-12);
    for (double& x : row) x = x / norm;
  }
  return out;
}

double info_nce_of(Mat anchors, Mat positives, double tau, Similarity similarity) {
  if (similarity == Similarity::kCosine) {
    anchors = normalize_rows(anchors);
    positives = normalize_rows(positives);
  }
  const double inv = 1.0 / tau;
  const int n = rows_of(anchors);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> logits(n);
    for (int j = 0; j < n; ++j) {
      double dot = 0.0;
      for (int c = 0; c < cols_of(anchors); ++c) dot += anchors[i][c] * positives[j][c];
      logits[j] = dot * inv;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double acc = 0.0;
    for (double l : logits) acc += std::exp(l - m);
    double pos = 0.0;
    for (int c = 0; c < cols_of(anchors); ++c) pos += anchors[i][c] * positives[i][c];
    total += (m + std::log(acc)) - pos * inv;
  }
  return total / n;
}

bool sg_applies(StopGradMode mode, int task, int expert, int behaviors) {
  if (mode == StopGradMode::kTargetOnly) return task != behaviors - 1 && expert == behaviors - 1;
  if (mode == StopGradMode::kAll) return expert != task;
  return false;
}

std::vector<int> relations(InMode mode, int k, int behaviors) {
  std::vector<int> out;
  if (mode == InMode::kFull) {
    for (int i = 0; i <= k; ++i) out.push_back(i);
  } else if (mode == InMode::kStrict) {
    out.push_back(k);
  } else {
    for (int i = 0; i < behaviors; ++i) out.push_back(i);
  }
  return out;
}

Mat to_mat(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError("fixture field '" + what + "' must be a 2-D array");
  Mat m;
  for (const auto& row : j) {
    if (!row.is_array()) throw ConfigError("fixture field '" + what + "' must be a 2-D array");
    std::vector<double> r;
    for (const auto& x : row) r.push_back(x.get<double>());
    if (!m.empty() && r.size() != m[0].size()) throw ConfigError("fixture field '" + what + "' is ragged");
    m.push_back(std::move(r));
  }
  return m;
}

}  // namespace

EngineConfig DenseFixture::engine_config() const {
  nlohmann::json flat = config;
  flat["layers"] = layers;
  flat["dim"] = dim;
  return config_from_json(flat);
}

DenseFixture fixture_from_json(const nlohmann::json& doc) {
  DenseFixture f;
  try {
    f.users = doc.at("users").get<int>();
    f.items = doc.at("items").get<int>();
    f.dim = doc.at("dim").get<int>();
    f.layers = doc.at("layers").get<int>();
    f.behaviors = doc.at("behaviors").get<std::vector<std::string>>();
    for (const auto& m : doc.at("interactions")) f.interactions.push_back(to_mat(m, "interactions"));
    for (const auto& [name, value] : doc.at("parameters").items()) f.parameters[name] = to_mat(value, name);
    if (doc.contains("triples")) {
      for (const auto& list : doc.at("triples")) {
        std::vector<DenseTriple> triples;
        for (const auto& t : list) triples.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
        f.triples.push_back(std::move(triples));
      }
    }
    if (doc.contains("config")) f.config = doc.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed fixture: ") + e.what());
  }
  if (static_cast<int>(f.interactions.size()) != f.num_behaviors()) {
    throw ConfigError("fixture lists " + std::to_string(f.num_behaviors()) + " behaviors but " +
                      std::to_string(f.interactions.size()) + " interaction matrices");
  }
  for (const auto& m : f.interactions) {
    if (rows_of(m) != f.users || cols_of(m) != f.items) throw ConfigError("fixture interaction matrix has wrong shape");
  }
  if (f.triples.empty()) f.triples.resize(f.behaviors.size());
  if (f.triples.size() != f.behaviors.size()) throw ConfigError("fixture needs one triple list per behavior");
  return f;
}

nlohmann::json fixture_to_json(const DenseFixture& f) {
  nlohmann::json doc;
  doc["users"] = f.users;
  doc["items"] = f.items;
  doc["dim"] = f.dim;
  doc["layers"] = f.layers;
  doc["behaviors"] = f.behaviors;
  doc["interactions"] = f.interactions;
  doc["parameters"] = f.parameters;
  nlohmann::json triples = nlohmann::json::array();
  for (const auto& list : f.triples) {
    nlohmann::json l = nlohmann::json::array();
    for (const auto& t : list) l.push_back({t.user, t.positive, t.negative});
    triples.push_back(l);
  }
  doc["triples"] = triples;
  doc["config"] = f.config;
  return doc;
}

DenseFixture load_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open fixture " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("fixture " + path.string() + " is not valid JSON: " + e.what());
  }
  return fixture_from_json(doc);
}

void save_fixture(const std::filesystem::path& path, const DenseFixture& fixture) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write fixture " + path.string());
  out << fixture_to_json(fixture).dump(1) << '\n';
}

LossSelection LossSelection::bpr_only(int behavior, int behaviors) {
  LossSelection s;
  s.bpr_weights.assign(behaviors, 0.0);
  s.bpr_weights[behavior] = 1.0;
  s.contrastive = false;
  s.regularizer = false;
  return s;
}

DenseTrace dense_forward(const DenseFixture& f, const EngineConfig& config, const LossSelection& selection,
                         const ForwardOptions& options) {
  const int m = f.users, n = f.items, nodes = m + n, d = f.dim, kk = f.num_behaviors();
  const int target = kk - 1;
  const auto& cg = config.cogcn;
  const auto& df = config.dfme;
  auto param = [&](const std::string& name) -> const Mat& {
    auto it = f.parameters.find(name);
    if (it == f.parameters.end()) throw ConfigError("fixture lacks parameter '" + name + "'");
    return it->second;
  };
  DenseTrace tr;

  // Adjacency and row-normalized propagation.
  std::vector<Mat> adjacency;
  for (int k = 0; k < kk; ++k) {
    Mat a = zeros(nodes, nodes);
    for (int u = 0; u < m; ++u) {
      for (int v = 0; v < n; ++v) {
        if (f.interactions[k][u][v] != 0.0) {
          a[u][m + v] = 1.0;
          a[m + v][u] = 1.0;
        }
      }
    }
    adjacency.push_back(std::move(a));
  }
  for (int k = 0; k < kk; ++k) {
    Mat p = zeros(nodes, nodes);
    for (int i = 0; i < nodes; ++i) {
      double degree = 0.0;
      if (cg.degree_mode == DegreeMode::kPerBehavior) {
        for (int j = 0; j < nodes; ++j) degree += adjacency[k][i][j];
      } else {
        for (int b = 0; b < kk; ++b) {
          for (int j = 0; j < nodes; ++j) degree += adjacency[b][i][j];
        }
      }
      const double inv = degree > 0.0 ? 1.0 / degree : 0.0;
      for (int j = 0; j < nodes; ++j) p[i][j] = adjacency[k][i][j] * inv;
    }
    tr.propagation.push_back(std::move(p));
  }

  // Cascade.
  Mat initial = param("user_embedding");
  for (const auto& row : param("item_embedding")) initial.push_back(row);
  std::vector<Mat> last;
  for (int k = 0; k < kk; ++k) {
    Mat e;
    if (k == 0 || cg.pre_mode == PreMode::kNone) {
      e = initial;
    } else if (cg.pre_mode == PreMode::kStrict) {
      e = plus(last.back(), initial);
    } else {
      Mat acc = last[0];
      for (int i = 1; i < k; ++i) acc = plus(acc, last[i]);
      e = plus(acc, initial);
    }
    std::vector<Mat> layers{e};
    for (int l = 0; l < cg.layers; ++l) {
      Mat acc;
      for (int r : relations(cg.in_mode, k, kk)) {
        Mat term = sparse_like_product(tr.propagation[r], e);
        if (cg.self_loop_mode == SelfLoopMode::kPerRelation) term = plus(term, e);
        acc = acc.empty() ? term : plus(acc, term);
      }
      if (cg.self_loop_mode == SelfLoopMode::kOnce) acc = plus(acc, e);
      e = acc;
      layers.push_back(e);
    }
    last.push_back(e);
    Mat fused = layers[0];
    for (std::size_t l = 1; l < layers.size(); ++l) fused = plus(fused, layers[l]);
    tr.joint.push_back(fused);
    tr.layers.push_back(std::move(layers));
  }
  if (cg.post_mode == PostMode::kFused) {
    Mat acc = tr.joint[0];
    for (int k = 1; k < kk; ++k) acc = plus(acc, tr.joint[k]);
    acc = times(acc, 1.0 / kk);
    for (int k = 0; k < kk; ++k) tr.joint[k] = acc;
  }
  if (options.perturb_behavior >= 0) {
    tr.joint[options.perturb_behavior] = plus(tr.joint[options.perturb_behavior], options.perturbation);
  }

  const bool dfme_head = df.head == HeadKind::kDfme;
  const bool fitting = dfme_head && df.fitting_on && kk > 1;
  auto fitting_output = [&](int current, int other) -> const Mat& {
    auto key = std::make_pair(current, other);
    auto it = tr.fitting.find(key);
    if (it != tr.fitting.end()) return it->second;
    Mat e = times(plus(times(tr.joint[current], df.alpha), times(tr.joint[other], df.beta)), 0.5);
    std::vector<double> rel = param("fit_relation")[other];
    for (int l = 1; l <= cg.layers; ++l) {
      const Mat& w = param("fit_transform/" + std::to_string(l));
      std::vector<double> next(d, 0.0);
      for (int c = 0; c < d; ++c) {
        for (int q = 0; q < d; ++q) next[c] += rel[q] * w[c][q];
      }
      rel = next;
      Mat scaled = e;
      for (auto& row : scaled) {
        for (int c = 0; c < d; ++c) row[c] = row[c] * rel[c];
      }
      e = plus(sparse_like_product(tr.propagation[other], scaled), scaled);
    }
    return tr.fitting.emplace(key, std::move(e)).first->second;
  };

  std::vector<double> weights = selection.bpr_weights;
  if (weights.empty()) weights = resolved_lambdas(config.train, kk);
  tr.tasks.resize(kk);
  bool any_bpr = false;
  for (int k = 0; k < kk; ++k) {
    const auto& triples = f.triples[k];
    TaskTrace& task = tr.tasks[k];
    if (triples.empty()) continue;
    for (const auto& t : triples) task.users.push_back(t.user);
    for (const auto& t : triples) task.users.push_back(t.user);
    for (const auto& t : triples) task.items.push_back(t.positive);
    for (const auto& t : triples) task.items.push_back(t.negative);
    const int rows = static_cast<int>(task.users.size());
    auto row_of = [&](const Mat& joint, int node) { return joint[node]; };

    if (!dfme_head) {
      for (int r = 0; r < rows; ++r) {
        const auto eu = row_of(tr.joint[k], task.users[r]);
        const auto ev = row_of(tr.joint[k], m + task.items[r]);
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += eu[c] * ev[c];
        task.predictions.push_back(s / d);
      }
    } else {
      const std::string suffix =
          df.gate_sharing == GateSharing::kShared ? std::string() : "/" + std::to_string(k);
      const Mat& wg = param("gate_weight" + suffix);
      const Mat& bg = param("gate_bias" + suffix);
      task.gates = zeros(rows, kk);
      for (int r = 0; r < rows; ++r) {
        std::vector<double> x = row_of(tr.joint[k], task.users[r]);
        const auto ev = row_of(tr.joint[k], m + task.items[r]);
        x.insert(x.end(), ev.begin(), ev.end());
        std::vector<double> logits(kk);
        for (int j = 0; j < kk; ++j) {
          double s = 0.0;
          for (int q = 0; q < 2 * d; ++q) s += x[q] * wg[j][q];
          logits[j] = s + bg[0][j];
        }
        task.gates[r] = softmax_of(logits);
      }
      for (int j = 0; j < kk; ++j) {
        Mat expert = zeros(rows, d);
        const bool use_fitting = fitting && j != k;
        const Mat& source = use_fitting ? fitting_output(j, k) : tr.joint[j];
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < d; ++c) {
            expert[r][c] = source[task.users[r]][c] * source[m + task.items[r]][c];
          }
        }
        Mat term = zeros(rows, d);
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < d; ++c) term[r][c] = expert[r][c] * task.gates[r][j];
        }
        if (sg_applies(df.stop_grad_mode, k, j, kk)) {
          auto it = options.frozen_terms.find({k, j});
          if (it != options.frozen_terms.end()) term = it->second;
        }
        task.experts.push_back(std::move(expert));
        task.terms.push_back(std::move(term));
      }
      for (int r = 0; r < rows; ++r) {
        std::vector<double> acc = task.terms[0][r];
        for (int j = 1; j < kk; ++j) {
          for (int c = 0; c < d; ++c) acc[c] = acc[c] + task.terms[j][r][c];
        }
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += acc[c];
        task.predictions.push_back(s / d);
      }
    }
    const int b = rows / 2;
    double loss = 0.0;
    for (int i = 0; i < b; ++i) loss += softplus_of(task.predictions[b + i] - task.predictions[i]);
    if (config.train.bpr_reduction == BprReduction::kMean) loss /= b;
    task.bpr = loss;
    if (weights[k] != 0.0) {
      tr.bpr += weights[k] * loss;
      any_bpr = true;
    }
  }
  (void)any_bpr;

  if (selection.contrastive && df.contrastive_on && kk > 1) {
    if (df.neg_mode != NegativeSet::kFull) throw ConfigError("the dense oracle implements the full negative set only");
    auto block = [&](const Mat& joint, int start, int count) {
      return Mat(joint.begin() + start, joint.begin() + start + count);
    };
    for (int k = 0; k < target; ++k) {
      const double cl = info_nce_of(block(tr.joint[target], 0, m), block(tr.joint[k], 0, m), df.tau, df.similarity) +
                        info_nce_of(block(tr.joint[target], m, n), block(tr.joint[k], m, n), df.tau, df.similarity);
      tr.contrastive.push_back(cl);
      tr.cl += cl;
    }
  }
  if (selection.regularizer && config.train.mu != 0.0) {
    double sq = 0.0;
    for (const auto& [name, value] : f.parameters) {
      for (const auto& row : value) {
        for (double x : row) sq += x * x;
      }
    }
    tr.reg = config.train.mu * sq;
  }
  tr.total = tr.bpr + df.gamma * tr.cl + tr.reg;
  return tr;
}

std::map<std::pair<int, int>, Mat> frozen_terms_of(const DenseTrace& trace, const EngineConfig& config) {
  std::map<std::pair<int, int>, Mat> out;
  const int kk = static_cast<int>(trace.joint.size());
  for (int k = 0; k < static_cast<int>(trace.tasks.size()); ++k) {
    const auto& task = trace.tasks[k];
    for (int j = 0; j < static_cast<int>(task.terms.size()); ++j) {
      if (sg_applies(config.dfme.stop_grad_mode, k, j, kk)) out[{k, j}] = task.terms[j];
    }
  }
  return out;
}

std::map<std::string, Mat> numerical_gradient(const DenseFixture& fixture, const EngineConfig& config,
                                              const LossSelection& selection, double h) {
  const DenseTrace base = dense_forward(fixture, config, selection);
  ForwardOptions options;
  options.frozen_terms = frozen_terms_of(base, config);
  std::map<std::string, Mat> grads;
  DenseFixture work = fixture;
  for (const auto& [name, value] : fixture.parameters) {
    Mat g = zeros(rows_of(value), cols_of(value));
    for (int r = 0; r < rows_of(value); ++r) {
      for (int c = 0; c < cols_of(value); ++c) {
        const double x = value[r][c];
        work.parameters[name][r][c] = x + h;
        const double up = dense_forward(work, config, selection, options).total;
        work.parameters[name][r][c] = x - h;
        const double down = dense_forward(work, config, selection, options).total;
        work.parameters[name][r][c] = x;
        g[r][c] = (up - down) / (2.0 * h);
      }
    }
    grads[name] = std::move(g);
  }
  return grads;
}

Mat numerical_representation_gradient(const DenseFixture& fixture, const EngineConfig& config,
                                      const LossSelection& selection, int behavior, double h) {
  const DenseTrace base = dense_forward(fixture, config, selection);
  ForwardOptions options;
  options.frozen_terms = frozen_terms_of(base, config);
  options.perturb_behavior = behavior;
  const int rows = fixture.users + fixture.items;
  options.perturbation = zeros(rows, fixture.dim);
  Mat g = zeros(rows, fixture.dim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < fixture.dim; ++c) {
      options.perturbation[r][c] = h;
      const double up = dense_forward(fixture, config, selection, options).total;
      options.perturbation[r][c] = -h;
      const double down = dense_forward(fixture, config, selection, options).total;
      options.perturbation[r][c] = 0.0;
      g[r][c] = (up - down) / (2.0 * h);
    }
  }
  return g;
}

std::pair<double, double> reference_metrics(const Mat& scores, const std::map<int, int>& held_out, int k,
                                            const std::map<int, std::vector<int>>& excluded) {
  double hits = 0.0, gain = 0.0;
  for (const auto& [user, item] : held_out) {
    const auto& row = scores.at(user);
    std::vector<int> candidates;
    auto ex = excluded.find(user);
    for (int v = 0; v < static_cast<int>(row.size()); ++v) {
      const bool removed =
          ex != excluded.end() && std::find(ex->second.begin(), ex->second.end(), v) != ex->second.end();
      if (!removed || v == item) candidates.push_back(v);
    }
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
      if (row[a] != row[b]) return row[a] > row[b];
      return a < b;
    });
    const int rank = static_cast<int>(std::find(candidates.begin(), candidates.end(), item) - candidates.begin()) + 1;
    if (rank <= k) {
      hits += 1.0;
      gain += 1.0 / std::log2(static_cast<double>(rank + 1));
    }
  }
  const double n = static_cast<double>(held_out.size());
  return {hits / n, gain / n};
}

}  // namespace mbrec::oracle

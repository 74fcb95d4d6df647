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

#include "mbrec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mbrec/optim.hpp"

namespace mbrec {

TripleSampler::TripleSampler(const InteractionSet& set, Index max_attempts)
    : set_(set), max_attempts_(max_attempts) {
  if (max_attempts < 1) throw ConfigError("max_negative_attempts must be >= 1");
  seen_.assign(set.num_behaviors(), std::vector<std::vector<Index>>(set.num_users()));
  for (Index k = 0; k < set.num_behaviors(); ++k) {
    for (const auto& e : set.edges[k]) seen_[k][e.user].push_back(e.item);
    for (auto& items : seen_[k]) std::sort(items.begin(), items.end());
  }
}

bool TripleSampler::observed(Index behavior, Index user, Index item) const {
  const auto& items = seen_[behavior][user];
  return std::binary_search(items.begin(), items.end(), item);
}

TripleBatch TripleSampler::sample(Index batch_size, std::mt19937_64& rng) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const Index n = set_.num_items();
  TripleBatch batch;
  batch.behaviors.resize(set_.num_behaviors());
  std::uniform_int_distribution<Index> item_dist(0, n - 1);
  for (Index k = 0; k < set_.num_behaviors(); ++k) {
    const auto& edges = set_.edges[k];
    if (edges.empty()) continue;
    std::uniform_int_distribution<std::size_t> edge_dist(0, edges.size() - 1);
    auto& out = batch.behaviors[k];
    out.reserve(static_cast<std::size_t>(batch_size));
    for (Index i = 0; i < batch_size; ++i) {
      const Edge& e = edges[edge_dist(rng)];
      Index negative = -1;
      if (static_cast<Index>(seen_[k][e.user].size()) < n) {
        for (Index attempt = 0; attempt < max_attempts_; ++attempt) {
          const Index t = item_dist(rng);
          if (!observed(k, e.user, t)) {
            negative = t;
            break;
          }
        }
      }
      if (negative < 0) {
        ++skipped_;
        if (!warned_ && log) {
          log("no unobserved item found for user " + set_.user_ids[e.user] + " under behavior '" +
              set_.behaviors[k] + "'; skipping such draws");
        }
        warned_ = true;
        continue;
      }
      out.push_back({e.user, e.item, negative});
    }
  }
  return batch;
}

Var bpr_loss(DfmeHead& head, const TripleBatch& batch, const std::vector<double>& lambdas, BprReduction reduction) {
  if (lambdas.size() != batch.behaviors.size()) throw ConfigError("bpr_loss: one lambda per behavior required");
  Var total;
  for (std::size_t k = 0; k < batch.behaviors.size(); ++k) {
    const auto& triples = batch.behaviors[k];
    if (triples.empty() || lambdas[k] == 0.0) continue;
    const Index b = static_cast<Index>(triples.size());
    std::vector<Index> users, items;
    users.reserve(2 * triples.size());
    items.reserve(2 * triples.size());
    for (const auto& t : triples) users.push_back(t.user);
    for (const auto& t : triples) users.push_back(t.user);
    for (const auto& t : triples) items.push_back(t.positive);
    for (const auto& t : triples) items.push_back(t.negative);
    Var pred = head.predict(static_cast<Index>(k), users, items);
    Var margin = slice_rows(pred, b, b) - slice_rows(pred, 0, b);
    Var terms = softplus(margin);
    Var reduced = reduction == BprReduction::kMean ? mean(terms) : sum(terms);
    Var weighted = scale(reduced, lambdas[k]);
    total = total.valid() ? total + weighted : weighted;
  }
  if (!total.valid()) throw DataError("bpr_loss: the batch holds no usable triples");
  return total;
}

LossParts total_loss(Var bpr, const std::vector<Var>& cl_terms, const std::vector<Var>& parameter_leaves,
                     double gamma, double mu) {
  LossParts parts;
  parts.bpr = bpr;
  Var total = bpr;
  for (Var term : cl_terms) parts.cl = parts.cl.valid() ? parts.cl + term : term;
  if (parts.cl.valid()) total = total + scale(parts.cl, gamma);
  if (mu != 0.0) {
    for (Var leaf : parameter_leaves) {
      Var sq = squared_norm(leaf);
      parts.reg = parts.reg.valid() ? parts.reg + sq : sq;
    }
    if (parts.reg.valid()) {
      parts.reg = scale(parts.reg, mu);
      total = total + parts.reg;
    }
  }
  parts.total = total;
  return parts;
}

LossParts batch_objective(Forward& forward, const TripleBatch& batch, const EngineConfig& config) {
  const Index behaviors = forward.reps.num_behaviors();
  const auto lambdas = resolved_lambdas(config.train, behaviors);
  Var bpr = bpr_loss(*forward.head, batch, lambdas, config.train.bpr_reduction);
  std::vector<Var> cl;
  if (config.dfme.contrastive_on && behaviors > 1) {
    std::vector<Index> users, items;
    if (config.dfme.neg_mode == NegativeSet::kBatch) {
      for (const auto& triples : batch.behaviors) {
        for (const auto& t : triples) {
          users.push_back(t.user);
          items.push_back(t.positive);
          items.push_back(t.negative);
        }
      }
    }
    for (Index k = 0; k + 1 < behaviors; ++k) cl.push_back(contrastive_loss(forward.reps, k, config.dfme, users, items));
  }
  return total_loss(bpr, cl, forward.leaves, config.dfme.gamma, config.train.mu);
}

std::string format_epoch_record(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["l_bpr"] = r.l_bpr;
  j["l_cl"] = r.l_cl;
  j["l_reg"] = r.l_reg;
  j["hr10"] = r.hr10 ? nlohmann::ordered_json(*r.hr10) : nlohmann::ordered_json(nullptr);
  j["ndcg10"] = r.ndcg10 ? nlohmann::ordered_json(*r.ndcg10) : nlohmann::ordered_json(nullptr);
  j["seconds"] = r.seconds;
  return j.dump();
}

InteractionSet training_view(const Split& split, const EngineConfig& config) {
  return config.single_behavior ? split.train.target_only() : split.train;
}

TrainResult train(const Split& split, const EngineConfig& config, const TrainOptions& options) {
  config.validate();
  const InteractionSet data = training_view(split, config);
  data.validate();
  if (split.test.empty()) throw DataError("train: the split has no test pairs");
  const BehaviorGraphs graphs = build_behavior_graphs(data, config.cogcn.degree_mode);
  const ModelShape shape = ModelShape::of(data, config.cogcn);
  ParameterStore params = make_parameters(shape, config);
  params.initialize(config.train.seed);
  const std::string hash = config_hash(config);

  TripleSampler sampler(data, config.train.max_negative_attempts);
  sampler.log = options.log;
  std::mt19937_64 rng(config.train.seed ^ 0xA5A5A5A5A5A5A5A5ULL);

  const Index target_edges = static_cast<Index>(data.edges[data.target()].size());
  const Index batches = (target_edges + config.train.batch_size - 1) / config.train.batch_size;

  std::ofstream log_file;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    log_file.open(options.out_dir / "epochs.jsonl");
    if (!log_file) throw DataError("cannot write " + (options.out_dir / "epochs.jsonl").string());
  }
  auto evaluate_now = [&] {
    Scorer scorer(params, shape, config, graphs);
    return evaluate(scorer, data, split.test, config.eval, config.train.seed);
  };
  auto keep_best = [&](const Metrics& m, Index epoch, TrainResult& result) {
    result.best = m;
    result.best_epoch = epoch;
    if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "best.ckpt", params, hash, result.steps);
  };

  TrainResult result;
  bool have_best = false;
  if (config.train.epochs == 0) {
    keep_best(evaluate_now(), 0, result);
    have_best = true;
  }
  Index stale = 0;
  for (Index epoch = 1; epoch <= config.train.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord record;
    record.epoch = epoch;
    for (Index b = 0; b < batches; ++b) {
      const TripleBatch batch = sampler.sample(config.train.batch_size, rng);
      params.zero_grad();
      Tape tape;
      Forward forward = run_forward(tape, params, shape, config, graphs);
      LossParts parts = batch_objective(forward, batch, config);
      const double total = parts.total.scalar();
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1));
      }
      tape.backward(parts.total);
      adam_step(params, config.train.adam, ++result.steps);
      record.l_bpr += parts.bpr.scalar();
      if (parts.cl.valid()) record.l_cl += parts.cl.scalar();
      if (parts.reg.valid()) record.l_reg += parts.reg.scalar();
    }
    record.l_bpr /= static_cast<double>(batches);
    record.l_cl /= static_cast<double>(batches);
    record.l_reg /= static_cast<double>(batches);

    bool stop = false;
    if (epoch % config.train.eval_every == 0 || epoch == config.train.epochs) {
      const Metrics m = evaluate_now();
      record.hr10 = m.hr;
      record.ndcg10 = m.ndcg;
      if (!have_best || m.hr > result.best.hr) {
        keep_best(m, epoch, result);
        have_best = true;
        stale = 0;
      } else if (++stale >= config.train.patience) {
        stop = true;
      }
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log_file) log_file << format_epoch_record(record) << '\n' << std::flush;
    if (options.on_epoch) options.on_epoch(record);
    result.epochs.push_back(record);
    if (stop) break;
  }
  return result;
}

namespace {

constexpr char kMagic[8] = {'M', 'B', 'R', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated checkpoint " + path.string());
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::filesystem::path& path) {
  const auto n = read_pod<std::uint32_t>(in, path);
  if (n > (1u << 20)) throw DataError("corrupt checkpoint " + path.string());
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw DataError("truncated checkpoint " + path.string());
  return s;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void read_matrix(std::istream& in, Matrix& m, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw DataError("truncated checkpoint " + path.string());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params, const std::string& config_hash,
                     std::int64_t step) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + tmp);
    out.write(kMagic, sizeof(kMagic));
    write_string(out, config_hash);
    write_pod<std::int64_t>(out, step);
    write_pod<std::uint64_t>(out, params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Parameter& p = params[i];
      write_string(out, p.name);
      write_pod<std::int64_t>(out, p.rows());
      write_pod<std::int64_t>(out, p.cols());
      write_matrix(out, p.value);
      write_matrix(out, p.adam_m);
      write_matrix(out, p.adam_v);
    }
    if (!out) throw DataError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::int64_t load_checkpoint(const std::filesystem::path& path, ParameterStore& params,
                             const std::string& expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + " is not an mbrec checkpoint");
  }
  const std::string hash = read_string(in, path);
  if (!expected_hash.empty() && hash != expected_hash) {
    throw ConfigError("checkpoint " + path.string() + " was written under config hash " + hash + ", expected " +
                      expected_hash);
  }
  const auto step = read_pod<std::int64_t>(in, path);
  const auto count = read_pod<std::uint64_t>(in, path);
  if (count != params.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    const std::string name = read_string(in, path);
    const auto rows = read_pod<std::int64_t>(in, path);
    const auto cols = read_pod<std::int64_t>(in, path);
    if (name != p.name || rows != p.rows() || cols != p.cols()) {
      throw ConfigError("checkpoint parameter '" + name + "' " + shape_string(rows, cols) + " does not match '" +
                        p.name + "' " + shape_string(p.value));
    }
    read_matrix(in, p.value, path);
    read_matrix(in, p.adam_m, path);
    read_matrix(in, p.adam_v, path);
  }
  return step;
}

}  // namespace mbrec

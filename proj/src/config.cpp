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

#include "mbrec/config.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <utility>

namespace mbrec {

namespace {

template <typename E>
using EnumTable = std::vector<std::pair<std::string_view, E>>;

const EnumTable<PreMode> kPreModes = {{"full", PreMode::kFull}, {"strict", PreMode::kStrict}, {"none", PreMode::kNone}};
const EnumTable<InMode> kInModes = {{"full", InMode::kFull}, {"strict", InMode::kStrict}, {"none", InMode::kNone}};
const EnumTable<PostMode> kPostModes = {{"decoupled", PostMode::kDecoupled}, {"fused", PostMode::kFused}};
const EnumTable<SelfLoopMode> kSelfLoopModes = {{"per-relation", SelfLoopMode::kPerRelation},
                                                {"once", SelfLoopMode::kOnce}};
const EnumTable<DegreeMode> kDegreeModes = {{"per-behavior", DegreeMode::kPerBehavior}, {"joint", DegreeMode::kJoint}};
const EnumTable<NegativeSet> kNegModes = {{"full", NegativeSet::kFull}, {"batch", NegativeSet::kBatch}};
const EnumTable<StopGradMode> kStopGradModes = {
    {"target-only", StopGradMode::kTargetOnly}, {"all", StopGradMode::kAll}, {"none", StopGradMode::kNone}};
const EnumTable<GateSharing> kGateSharing = {{"shared", GateSharing::kShared}, {"per-task", GateSharing::kPerTask}};
const EnumTable<Similarity> kSimilarity = {{"inner", Similarity::kInnerProduct}, {"cosine", Similarity::kCosine}};
const EnumTable<HeadKind> kHeads = {{"dfme", HeadKind::kDfme}, {"bilinear", HeadKind::kBilinear}};
const EnumTable<BprReduction> kReductions = {{"mean", BprReduction::kMean}, {"sum", BprReduction::kSum}};
const EnumTable<CandidateMode> kCandidates = {{"full", CandidateMode::kFull}, {"sampled", CandidateMode::kSampled}};

template <typename E>
std::string_view enum_name(const EnumTable<E>& table, E value) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  throw ConfigError("enum value without a name");
}

template <typename E>
E enum_value(const EnumTable<E>& table, const std::string& key, const nlohmann::json& j) {
  if (!j.is_string()) throw ConfigError("config key '" + key + "' must be a string");
  const auto s = j.get<std::string>();
  std::string valid;
  for (const auto& [name, v] : table) {
    if (name == s) return v;
    valid += (valid.empty() ? "" : ", ") + std::string(name);
  }
  throw ConfigError("config key '" + key + "': '" + s + "' is not one of {" + valid + "}");
}

double get_number(const std::string& key, const nlohmann::json& j) {
  if (!j.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return j.get<double>();
}

Index get_integer(const std::string& key, const nlohmann::json& j) {
  if (!j.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
  return j.get<Index>();
}

bool get_bool(const std::string& key, const nlohmann::json& j) {
  if (!j.is_boolean()) throw ConfigError("config key '" + key + "' must be true or false");
  return j.get<bool>();
}

using Setter = std::function<void(EngineConfig&, const std::string&, const nlohmann::json&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["data"] = [](EngineConfig& c, const std::string& k, const nlohmann::json& j) {
      if (!j.is_string()) throw ConfigError("config key '" + k + "' must be a string");
      c.data = j.get<std::string>();
    };
    t["single_behavior"] = [](EngineConfig& c, auto& k, auto& j) { c.single_behavior = get_bool(k, j); };
    t["layers"] = [](EngineConfig& c, auto& k, auto& j) { c.cogcn.layers = get_integer(k, j); };
    t["dim"] = [](EngineConfig& c, auto& k, auto& j) { c.cogcn.dim = get_integer(k, j); };
    t["pre_mode"] = [](EngineConfig& c, auto& k, auto& j) { c.cogcn.pre_mode = enum_value(kPreModes, k, j); };
    t["in_mode"] = [](EngineConfig& c, auto& k, auto& j) { c.cogcn.in_mode = enum_value(kInModes, k, j); };
    t["post_mode"] = [](EngineConfig& c, auto& k, auto& j) { c.cogcn.post_mode = enum_value(kPostModes, k, j); };
    t["self_loop_mode"] = [](EngineConfig& c, auto& k, auto& j) {
      c.cogcn.self_loop_mode = enum_value(kSelfLoopModes, k, j);
    };
    t["degree_mode"] = [](EngineConfig& c, auto& k, auto& j) { c.cogcn.degree_mode = enum_value(kDegreeModes, k, j); };
    t["tau"] = [](EngineConfig& c, auto& k, auto& j) { c.dfme.tau = get_number(k, j); };
    t["alpha"] = [](EngineConfig& c, auto& k, auto& j) { c.dfme.alpha = get_number(k, j); };
    t["beta"] = [](EngineConfig& c, auto& k, auto& j) { c.dfme.beta = get_number(k, j); };
    t["gamma"] = [](EngineConfig& c, auto& k, auto& j) { c.dfme.gamma = get_number(k, j); };
    t["neg_mode"] = [](EngineConfig& c, auto& k, auto& j) { c.dfme.neg_mode = enum_value(kNegModes, k, j); };
    t["contrastive_on"] = [](EngineConfig& c, auto& k, auto& j) { c.dfme.contrastive_on = get_bool(k, j); };
    t["fitting_on"] = [](EngineConfig& c, auto& k, auto& j) { c.dfme.fitting_on = get_bool(k, j); };
    t["stop_grad_mode"] = [](EngineConfig& c, auto& k, auto& j) {
      c.dfme.stop_grad_mode = enum_value(kStopGradModes, k, j);
    };
    t["gate_sharing"] = [](EngineConfig& c, auto& k, auto& j) { c.dfme.gate_sharing = enum_value(kGateSharing, k, j); };
    t["similarity"] = [](EngineConfig& c, auto& k, auto& j) { c.dfme.similarity = enum_value(kSimilarity, k, j); };
    t["head"] = [](EngineConfig& c, auto& k, auto& j) { c.dfme.head = enum_value(kHeads, k, j); };
    t["lambdas"] = [](EngineConfig& c, const std::string& k, const nlohmann::json& j) {
      if (!j.is_array()) throw ConfigError("config key '" + k + "' must be an array of numbers");
      c.train.lambdas.clear();
      for (const auto& x : j) c.train.lambdas.push_back(get_number(k, x));
    };
    t["mu"] = [](EngineConfig& c, auto& k, auto& j) { c.train.mu = get_number(k, j); };
    t["lr"] = [](EngineConfig& c, auto& k, auto& j) { c.train.adam.lr = get_number(k, j); };
    t["adam_beta1"] = [](EngineConfig& c, auto& k, auto& j) { c.train.adam.beta1 = get_number(k, j); };
    t["adam_beta2"] = [](EngineConfig& c, auto& k, auto& j) { c.train.adam.beta2 = get_number(k, j); };
    t["adam_eps"] = [](EngineConfig& c, auto& k, auto& j) { c.train.adam.eps = get_number(k, j); };
    t["batch_size"] = [](EngineConfig& c, auto& k, auto& j) { c.train.batch_size = get_integer(k, j); };
    t["epochs"] = [](EngineConfig& c, auto& k, auto& j) { c.train.epochs = get_integer(k, j); };
    t["seed"] = [](EngineConfig& c, auto& k, auto& j) {
      const Index s = get_integer(k, j);
      if (s < 0) throw ConfigError("config key 'seed' must be non-negative");
      c.train.seed = static_cast<std::uint64_t>(s);
    };
    t["seeds"] = [](EngineConfig& c, auto& k, auto& j) { c.train.seeds = get_integer(k, j); };
    t["eval_every"] = [](EngineConfig& c, auto& k, auto& j) { c.train.eval_every = get_integer(k, j); };
    t["patience"] = [](EngineConfig& c, auto& k, auto& j) { c.train.patience = get_integer(k, j); };
    t["bpr_reduction"] = [](EngineConfig& c, auto& k, auto& j) {
      c.train.bpr_reduction = enum_value(kReductions, k, j);
    };
    t["max_negative_attempts"] = [](EngineConfig& c, auto& k, auto& j) {
      c.train.max_negative_attempts = get_integer(k, j);
    };
    t["eval_k"] = [](EngineConfig& c, auto& k, auto& j) { c.eval.k = get_integer(k, j); };
    t["eval_candidates"] = [](EngineConfig& c, auto& k, auto& j) { c.eval.candidates = enum_value(kCandidates, k, j); };
    t["eval_sampled_negatives"] = [](EngineConfig& c, auto& k, auto& j) {
      c.eval.sampled_negatives = get_integer(k, j);
    };
    t["exclude_auxiliary"] = [](EngineConfig& c, auto& k, auto& j) { c.eval.exclude_auxiliary = get_bool(k, j); };
    t["threads"] = [](EngineConfig& c, auto& k, auto& j) { c.eval.threads = get_integer(k, j); };
    return t;
  }();
  return table;
}

}  // namespace

void CogcnConfig::validate() const {
  if (layers < 1) throw ConfigError("layers must be >= 1, got " + std::to_string(layers));
  if (dim < 1) throw ConfigError("dim must be >= 1, got " + std::to_string(dim));
}

void DfmeConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("alpha and beta must be >= 0");
  if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
}

void TrainConfig::validate() const {
  if (mu < 0.0) throw ConfigError("mu must be >= 0");
  if (adam.lr < 0.0) throw ConfigError("lr must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (seeds < 1) throw ConfigError("seeds must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (max_negative_attempts < 1) throw ConfigError("max_negative_attempts must be >= 1");
  for (double l : lambdas) {
    if (l < 0.0) throw ConfigError("lambdas must be non-negative");
  }
  if (!lambdas.empty()) {
    const double total = std::accumulate(lambdas.begin(), lambdas.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("lambdas must sum to 1, got " + std::to_string(total));
  }
}

void EvalConfig::validate() const {
  if (k < 1) throw ConfigError("eval_k must be >= 1");
  if (sampled_negatives < 1) throw ConfigError("eval_sampled_negatives must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

void EngineConfig::validate() const {
  cogcn.validate();
  dfme.validate();
  train.validate();
  eval.validate();
}

EngineConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  EngineConfig config;
  const auto& table = setters();
  for (const auto& [key, value] : doc.items()) {
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(config, key, value);
  }
  config.validate();
  return config;
}

nlohmann::json config_to_json(const EngineConfig& c) {
  nlohmann::json j;
  j["data"] = c.data;
  j["single_behavior"] = c.single_behavior;
  j["layers"] = c.cogcn.layers;
  j["dim"] = c.cogcn.dim;
  j["pre_mode"] = enum_name(kPreModes, c.cogcn.pre_mode);
  j["in_mode"] = enum_name(kInModes, c.cogcn.in_mode);
  j["post_mode"] = enum_name(kPostModes, c.cogcn.post_mode);
  j["self_loop_mode"] = enum_name(kSelfLoopModes, c.cogcn.self_loop_mode);
  j["degree_mode"] = enum_name(kDegreeModes, c.cogcn.degree_mode);
  j["tau"] = c.dfme.tau;
  j["alpha"] = c.dfme.alpha;
  j["beta"] = c.dfme.beta;
  j["gamma"] = c.dfme.gamma;
  j["neg_mode"] = enum_name(kNegModes, c.dfme.neg_mode);
  j["contrastive_on"] = c.dfme.contrastive_on;
  j["fitting_on"] = c.dfme.fitting_on;
  j["stop_grad_mode"] = enum_name(kStopGradModes, c.dfme.stop_grad_mode);
  j["gate_sharing"] = enum_name(kGateSharing, c.dfme.gate_sharing);
  j["similarity"] = enum_name(kSimilarity, c.dfme.similarity);
  j["head"] = enum_name(kHeads, c.dfme.head);
  j["lambdas"] = c.train.lambdas;
  j["mu"] = c.train.mu;
  j["lr"] = c.train.adam.lr;
  j["adam_beta1"] = c.train.adam.beta1;
  j["adam_beta2"] = c.train.adam.beta2;
  j["adam_eps"] = c.train.adam.eps;
  j["batch_size"] = c.train.batch_size;
  j["epochs"] = c.train.epochs;
  j["seed"] = c.train.seed;
  j["seeds"] = c.train.seeds;
  j["eval_every"] = c.train.eval_every;
  j["patience"] = c.train.patience;
  j["bpr_reduction"] = enum_name(kReductions, c.train.bpr_reduction);
  j["max_negative_attempts"] = c.train.max_negative_attempts;
  j["eval_k"] = c.eval.k;
  j["eval_candidates"] = enum_name(kCandidates, c.eval.candidates);
  j["eval_sampled_negatives"] = c.eval.sampled_negatives;
  j["exclude_auxiliary"] = c.eval.exclude_auxiliary;
  j["threads"] = c.eval.threads;
  return j;
}

EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

std::string config_hash(const EngineConfig& config) {
  // threads and data location do not change results.
  auto j = config_to_json(config);
  j.erase("threads");
  j.erase("data");
  return fnv1a_hex(j.dump());
}

std::vector<double> resolved_lambdas(const TrainConfig& config, Index behaviors) {
  if (config.lambdas.empty()) return std::vector<double>(behaviors, 1.0 / static_cast<double>(behaviors));
  if (static_cast<Index>(config.lambdas.size()) != behaviors) {
    throw ConfigError("lambdas has " + std::to_string(config.lambdas.size()) + " entries but the dataset has " +
                      std::to_string(behaviors) + " behaviors");
  }
  return config.lambdas;
}

namespace {

using VariantFn = std::function<void(EngineConfig&)>;

const std::vector<std::pair<std::string, VariantFn>>& variant_table() {
  static const std::vector<std::pair<std::string, VariantFn>> table = {
      {"full", [](EngineConfig&) {}},
      {"w/o-cogcn",
       [](EngineConfig& c) {
         c.cogcn.pre_mode = PreMode::kNone;
         c.cogcn.in_mode = InMode::kStrict;
       }},
      {"copf-p", [](EngineConfig& c) { c.cogcn.pre_mode = PreMode::kNone; }},
      {"copf-a", [](EngineConfig& c) { c.cogcn.in_mode = InMode::kNone; }},
      {"copf-d",
       [](EngineConfig& c) {
         c.cogcn.post_mode = PostMode::kFused;
         c.dfme.head = HeadKind::kBilinear;
         c.dfme.contrastive_on = false;
       }},
      {"copf-f",
       [](EngineConfig& c) {
         c.cogcn.pre_mode = PreMode::kNone;
         c.cogcn.in_mode = InMode::kNone;
       }},
      {"copf-c",
       [](EngineConfig& c) {
         c.cogcn.pre_mode = PreMode::kStrict;
         c.cogcn.in_mode = InMode::kStrict;
       }},
      {"copf-b", [](EngineConfig& c) { c.cogcn.pre_mode = PreMode::kStrict; }},
      {"copf-h", [](EngineConfig& c) { c.cogcn.in_mode = InMode::kStrict; }},
      {"w/o-dfme",
       [](EngineConfig& c) {
         c.dfme.head = HeadKind::kBilinear;
         c.dfme.contrastive_on = false;
       }},
      {"w/o-con",
       [](EngineConfig& c) {
         c.dfme.contrastive_on = false;
         c.dfme.gamma = 0.0;
       }},
      {"w/o-for", [](EngineConfig& c) { c.dfme.fitting_on = false; }},
      {"w/o-back", [](EngineConfig& c) { c.dfme.stop_grad_mode = StopGradMode::kNone; }},
      {"all-sg", [](EngineConfig& c) { c.dfme.stop_grad_mode = StopGradMode::kAll; }},
      {"w/o-fit",
       [](EngineConfig& c) {
         c.dfme.fitting_on = false;
         c.dfme.stop_grad_mode = StopGradMode::kNone;
       }},
      // Not an ablation row: the target-behavior-only baseline.
      {"single-behavior", [](EngineConfig& c) { c.single_behavior = true; }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : variant_table()) out.push_back(name);
    return out;
  }();
  return names;
}

void apply_variant(EngineConfig& config, std::string_view name) {
  for (const auto& [n, fn] : variant_table()) {
    if (n == name) {
      fn(config);
      return;
    }
  }
  std::string valid;
  for (const auto& n : variant_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw UsageError("unknown variant '" + std::string(name) + "'; valid variants: " + valid);
}

}  // namespace mbrec

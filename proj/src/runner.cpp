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

#include "mbrec/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mbrec/errors.hpp"

#ifndef MBREC_VERSION
#define MBREC_VERSION "0.0.0"
#endif

namespace mbrec {

const char* engine_version() { return MBREC_VERSION; }

std::filesystem::path snapshot_path(const std::filesystem::path& data) {
  if (data.empty()) throw ConfigError("no dataset given (set \"data\" in the config or pass --data)");
  return std::filesystem::is_directory(data) ? data / "snapshot.txt" : data;
}

Split load_dataset(const std::filesystem::path& data) { return load_snapshot(snapshot_path(data)); }

std::string dataset_hash(const Split& split) { return fnv1a_hex(serialize_snapshot(split)); }

std::vector<std::uint64_t> seed_list(std::uint64_t base, Index count) {
  if (count < 1) throw ConfigError("seed count must be at least 1");
  std::vector<std::uint64_t> out;
  for (Index i = 0; i < count; ++i) out.push_back(base + static_cast<std::uint64_t>(i));
  return out;
}

RunSummary run_seeds(const Split& split, const EngineConfig& config, const std::vector<std::uint64_t>& seeds,
                     const RunOptions& options) {
  RunSummary summary;
  for (auto seed : seeds) {
    EngineConfig c = config;
    c.train.seed = seed;
    TrainOptions train_options;
    if (!options.out_dir.empty()) train_options.out_dir = options.out_dir / ("seed-" + std::to_string(seed));
    train_options.log = options.log;
    const auto start = std::chrono::steady_clock::now();
    TrainResult result = train(split, c, train_options);
    SeedOutcome outcome;
    outcome.seed = seed;
    outcome.best = result.best;
    outcome.best_epoch = result.best_epoch;
    outcome.epochs_run = static_cast<Index>(result.epochs.size());
    outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (options.log) {
      char line[160];
      std::snprintf(line, sizeof line, "seed %llu: HR@10 %.4f  NDCG@10 %.4f  (best epoch %lld, %.1f s)",
                    static_cast<unsigned long long>(seed), outcome.best.hr, outcome.best.ndcg,
                    static_cast<long long>(outcome.best_epoch), outcome.seconds);
      options.log(line);
    }
    summary.seeds.push_back(outcome);
  }
  for (const auto& s : summary.seeds) {
    summary.mean_hr += s.best.hr;
    summary.mean_ndcg += s.best.ndcg;
  }
  summary.mean_hr /= static_cast<double>(summary.seeds.size());
  summary.mean_ndcg /= static_cast<double>(summary.seeds.size());
  return summary;
}

nlohmann::ordered_json run_manifest(const EngineConfig& config, const std::string& hash,
                                    const std::vector<std::uint64_t>& seeds, const std::string& command_line) {
  nlohmann::ordered_json m;
  m["engine_version"] = engine_version();
  m["command_line"] = command_line;
  m["dataset_hash"] = hash;
  m["config_hash"] = config_hash(config);
  m["seeds"] = seeds;
  m["config"] = config_to_json(config);
  return m;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

void write_manifest(const std::filesystem::path& out_dir, const nlohmann::ordered_json& manifest) {
  const auto path = out_dir / "manifest.json";
  if (std::filesystem::exists(path)) {
    throw UsageError(path.string() + " already exists; run directories are not reused");
  }
  write_text(path, manifest.dump(2) + "\n");
}

nlohmann::ordered_json metrics_json(const RunSummary& summary) {
  nlohmann::ordered_json j;
  j["per_seed"] = nlohmann::ordered_json::array();
  for (const auto& s : summary.seeds) {
    nlohmann::ordered_json row;
    row["seed"] = s.seed;
    row["hr10"] = s.best.hr;
    row["ndcg10"] = s.best.ndcg;
    row["users"] = s.best.users;
    row["best_epoch"] = s.best_epoch;
    row["epochs_run"] = s.epochs_run;
    j["per_seed"].push_back(row);
  }
  j["mean"] = {{"hr10", summary.mean_hr}, {"ndcg10", summary.mean_ndcg}};
  return j;
}

std::string metrics_table(const RunSummary& summary) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %10s %10s %11s\n", "seed", "HR@10", "NDCG@10", "best epoch");
  out << line;
  for (const auto& s : summary.seeds) {
    std::snprintf(line, sizeof line, "%-12llu %10.4f %10.4f %11lld\n", static_cast<unsigned long long>(s.seed),
                  s.best.hr, s.best.ndcg, static_cast<long long>(s.best_epoch));
    out << line;
  }
  std::snprintf(line, sizeof line, "%-12s %10.4f %10.4f\n", "mean", summary.mean_hr, summary.mean_ndcg);
  out << line;
  return out.str();
}

nlohmann::ordered_json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["variant"] = r.variant;
    row["hr10"] = r.summary.mean_hr;
    row["ndcg10"] = r.summary.mean_ndcg;
    row["seeds"] = r.summary.seeds.size();
    j.push_back(row);
  }
  return j;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::size_t width = 7;
  for (const auto& r : rows) width = std::max(width, r.variant.size());
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-*s %10s %10s\n", static_cast<int>(width), "variant", "HR@10", "NDCG@10");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-*s %10.4f %10.4f\n", static_cast<int>(width), r.variant.c_str(),
                  r.summary.mean_hr, r.summary.mean_ndcg);
    out << line;
  }
  return out.str();
}

std::string variant_dir(const std::string& variant) {
  std::string out = variant;
  for (char& c : out) {
    if (c == '/') c = '-';
  }
  return out;
}

}  // namespace mbrec

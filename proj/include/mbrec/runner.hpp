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

#pragma once

// Multi-seed runs, run directories and their reports.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mbrec/config.hpp"
#include "mbrec/data.hpp"
#include "mbrec/training.hpp"

namespace mbrec {

/// Accepts a snapshot file or a directory holding snapshot.txt.
std::filesystem::path snapshot_path(const std::filesystem::path& data);
Split load_dataset(const std::filesystem::path& data);
std::string dataset_hash(const Split& split);

/// base, base + 1, ..., base + count - 1.
std::vector<std::uint64_t> seed_list(std::uint64_t base, Index count);

struct SeedOutcome {
  std::uint64_t seed = 0;
  Metrics best;
  Index best_epoch = 0;
  Index epochs_run = 0;
  double seconds = 0.0;
};

struct RunSummary {
  std::vector<SeedOutcome> seeds;
  double mean_hr = 0.0;
  double mean_ndcg = 0.0;
};

struct RunOptions {
  std::filesystem::path out_dir;  // seed-<s>/ subdirectories; empty: nothing written
  std::function<void(const std::string&)> log;
};

/// Trains once per seed (config.train.seed replaced by each entry).
RunSummary run_seeds(const Split& split, const EngineConfig& config, const std::vector<std::uint64_t>& seeds,
                     const RunOptions& options = {});

nlohmann::ordered_json run_manifest(const EngineConfig& config, const std::string& dataset_hash,
                                    const std::vector<std::uint64_t>& seeds, const std::string& command_line);
/// Refuses to replace an existing manifest.
void write_manifest(const std::filesystem::path& out_dir, const nlohmann::ordered_json& manifest);

nlohmann::ordered_json metrics_json(const RunSummary& summary);
/// Per-seed rows plus the mean.
std::string metrics_table(const RunSummary& summary);

struct AblationRow {
  std::string variant;
  RunSummary summary;
};

nlohmann::ordered_json ablation_json(const std::vector<AblationRow>& rows);
/// Rows = variants, columns = HR@10, NDCG@10 (seed means).
std::string ablation_table(const std::vector<AblationRow>& rows);

/// Directory-safe form of a variant name ("w/o-con" -> "w-o-con").
std::string variant_dir(const std::string& variant);

void write_text(const std::filesystem::path& path, const std::string& text);

const char* engine_version();

}  // namespace mbrec

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

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mbrec/dense.hpp"

namespace mbrec {

/// One raw log line after parsing, before id mapping.
struct InteractionRecord {
  std::string user;
  std::string item;
  std::string behavior;
  std::optional<std::int64_t> timestamp;
};

struct Edge {
  Index user = 0;
  Index item = 0;
  std::optional<std::int64_t> timestamp;

  bool operator==(const Edge&) const = default;
};

/// Deduplicated interactions for an ordered list of behaviors. The last
/// behavior is the target. Ids are contiguous and 0-based.
struct InteractionSet {
  std::vector<std::string> behaviors;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<std::vector<Edge>> edges;

  Index num_users() const { return static_cast<Index>(user_ids.size()); }
  Index num_items() const { return static_cast<Index>(item_ids.size()); }
  Index num_behaviors() const { return static_cast<Index>(behaviors.size()); }
  Index target() const { return num_behaviors() - 1; }
  Index num_nodes() const { return num_users() + num_items(); }

  /// Throws DataError when ids are out of range or a (u, v) pair repeats
  /// within one behavior.
  void validate() const;

  /// Keeps only the target behavior (single-behavior degeneration).
  InteractionSet target_only() const;

  bool operator==(const InteractionSet&) const = default;
};

struct BehaviorFile {
  std::string behavior;
  std::filesystem::path path;
};

/// Parses one file per behavior ("user<TAB>item[<TAB>timestamp]", comma also
/// accepted, '#' comments skipped). Within a behavior, duplicate pairs keep the
/// record with the smallest timestamp; ties and missing timestamps keep the
/// first occurrence. Ids are numbered by first appearance across the files in
/// the order given.
InteractionSet load_interactions(std::span<const BehaviorFile> files, std::span<const std::string> behavior_order);

/// Same rules as load_interactions, over already-parsed records.
InteractionSet build_interaction_set(std::span<const InteractionRecord> records,
                                     std::span<const std::string> behavior_order);

enum class DegreeMode { kPerBehavior, kJoint };

/// Adjacency A_k = [[0, B_k], [B_k^T, 0]] over the M + N joint node set and
/// its row-normalized propagation operator D^-1 A_k. Rows of isolated nodes
/// are empty. Immutable once built.
struct BehaviorGraph {
  std::shared_ptr<const SparseMatrix> adjacency;
  std::shared_ptr<const SparseMatrix> propagation;
};

using BehaviorGraphs = std::vector<BehaviorGraph>;

BehaviorGraph build_behavior_graph(const InteractionSet& set, Index behavior,
                                   DegreeMode mode = DegreeMode::kPerBehavior);
BehaviorGraphs build_behavior_graphs(const InteractionSet& set, DegreeMode mode = DegreeMode::kPerBehavior);

struct TestPair {
  Index user = 0;
  Index item = 0;

  bool operator==(const TestPair&) const = default;
};

struct Split {
  InteractionSet train;
  std::vector<TestPair> test;  // ascending user id

  bool operator==(const Split&) const = default;
};

/// Leave-one-out on the target behavior: every user with at least two target
/// interactions loses the latest one to the test set. Ties (or missing
/// timestamps) are broken uniformly at random under `seed`.
Split leave_one_out_split(const InteractionSet& set, std::uint64_t seed);

/// Versioned plain-text snapshot of a Split (training set, id maps, test
/// pairs). The text is a pure function of the Split.
std::string serialize_snapshot(const Split& split);
Split parse_snapshot(const std::string& text);
void save_snapshot(const std::filesystem::path& path, const Split& split);
Split load_snapshot(const std::filesystem::path& path);

/// 64-bit FNV-1a of the bytes, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

struct BehaviorStats {
  std::string behavior;
  Index interactions = 0;
  Index users_with_interactions = 0;
};

struct DatasetStats {
  Index users = 0;
  Index items = 0;
  Index interactions = 0;
  Index target_interactions = 0;
  Index test_users = 0;
  std::vector<BehaviorStats> behaviors;
};

DatasetStats dataset_stats(const Split& split);

}  // namespace mbrec

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

#include "mbrec/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mbrec {

namespace {

constexpr std::string_view kSnapshotTag = "mbrec-snapshot";
constexpr int kSnapshotVersion = 1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  const char sep = line.find('\t') != std::string_view::npos ? '\t' : ',';
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

Index behavior_index(std::span<const std::string> order, const std::string& name) {
  auto it = std::find(order.begin(), order.end(), name);
  return it == order.end() ? -1 : static_cast<Index>(it - order.begin());
}

}  // namespace

void InteractionSet::validate() const {
  if (edges.size() != behaviors.size()) throw DataError("edge lists do not match the behavior list");
  for (std::size_t k = 0; k < edges.size(); ++k) {
    std::set<std::pair<Index, Index>> seen;
    for (const auto& e : edges[k]) {
      if (e.user < 0 || e.user >= num_users() || e.item < 0 || e.item >= num_items()) {
        throw DataError("edge (" + std::to_string(e.user) + ", " + std::to_string(e.item) + ") out of range in '" +
                        behaviors[k] + "'");
      }
      if (!seen.insert({e.user, e.item}).second) {
        throw DataError("duplicate edge (" + std::to_string(e.user) + ", " + std::to_string(e.item) + ") in '" +
                        behaviors[k] + "'");
      }
    }
  }
}

InteractionSet InteractionSet::target_only() const {
  InteractionSet out;
  out.behaviors = {behaviors.back()};
  out.user_ids = user_ids;
  out.item_ids = item_ids;
  out.edges = {edges.back()};
  return out;
}

InteractionSet build_interaction_set(std::span<const InteractionRecord> records,
                                     std::span<const std::string> behavior_order) {
  if (behavior_order.empty()) throw ConfigError("behavior order is empty");
  InteractionSet set;
  set.behaviors.assign(behavior_order.begin(), behavior_order.end());
  set.edges.resize(behavior_order.size());

  std::unordered_map<std::string, Index> user_map, item_map;
  std::vector<std::map<std::pair<Index, Index>, std::size_t>> position(behavior_order.size());
  for (const auto& r : records) {
    const Index k = behavior_index(behavior_order, r.behavior);
    if (k < 0) throw IngestionError("unknown behavior '" + r.behavior + "'");
    auto [uit, unew] = user_map.try_emplace(r.user, static_cast<Index>(set.user_ids.size()));
    if (unew) set.user_ids.push_back(r.user);
    auto [iit, inew] = item_map.try_emplace(r.item, static_cast<Index>(set.item_ids.size()));
    if (inew) set.item_ids.push_back(r.item);
    const Index u = uit->second;
    const Index v = iit->second;

    auto& where = position[k];
    auto& list = set.edges[k];
    auto [pit, fresh] = where.try_emplace({u, v}, list.size());
    if (fresh) {
      list.push_back({u, v, r.timestamp});
      continue;
    }
    Edge& kept = list[pit->second];
    if (kept.timestamp && r.timestamp && *r.timestamp < *kept.timestamp) kept.timestamp = r.timestamp;
  }
  return set;
}

InteractionSet load_interactions(std::span<const BehaviorFile> files, std::span<const std::string> behavior_order) {
  if (behavior_order.empty()) throw ConfigError("behavior order is empty");
  std::vector<InteractionRecord> records;
  for (const auto& f : files) {
    if (behavior_index(behavior_order, f.behavior) < 0) {
      throw IngestionError("unknown behavior '" + f.behavior + "' for file " + f.path.string());
    }
    std::ifstream in(f.path);
    if (!in) throw IngestionError("cannot open " + f.path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto text = trim(line);
      if (text.empty() || text.front() == '#') continue;
      const auto fields = split_fields(text);
      const auto where = f.path.string() + ":" + std::to_string(line_no);
      if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty()) {
        throw IngestionError(where + ": expected user, item[, timestamp]");
      }
      InteractionRecord r{std::string(fields[0]), std::string(fields[1]), f.behavior, std::nullopt};
      if (fields.size() == 3 && !fields[2].empty()) {
        r.timestamp = parse_int(fields[2]);
        if (!r.timestamp) throw IngestionError(where + ": timestamp '" + std::string(fields[2]) + "' is not an integer");
      }
      records.push_back(std::move(r));
    }
  }
  InteractionSet set = build_interaction_set(records, behavior_order);
  if (set.edges.back().empty()) {
    std::string names;
    for (const auto& f : files) {
      if (f.behavior == behavior_order.back()) names += (names.empty() ? "" : ", ") + f.path.string();
    }
    throw IngestionError("target behavior '" + behavior_order.back() + "' has no interactions (" +
                         (names.empty() ? std::string("no file given") : names) + ")");
  }
  return set;
}

BehaviorGraph build_behavior_graph(const InteractionSet& set, Index behavior, DegreeMode mode) {
  if (behavior < 0 || behavior >= set.num_behaviors()) {
    throw ConfigError("behavior index " + std::to_string(behavior) + " outside [0, " +
                      std::to_string(set.num_behaviors()) + ")");
  }
  const Index m = set.num_users();
  const Index nodes = set.num_nodes();
  std::vector<Triplet<double>> entries;
  for (const auto& e : set.edges[behavior]) {
    entries.push_back({e.user, m + e.item, 1.0});
    entries.push_back({m + e.item, e.user, 1.0});
  }
  auto adjacency = std::make_shared<SparseMatrix>(SparseMatrix::from_triplets(nodes, nodes, std::move(entries)));

  std::vector<double> degree(nodes, 0.0);
  if (mode == DegreeMode::kPerBehavior) {
    for (Index r = 0; r < nodes; ++r) degree[r] = adjacency->row_sum(r);
  } else {
    for (const auto& list : set.edges) {
      for (const auto& e : list) {
        degree[e.user] += 1.0;
        degree[m + e.item] += 1.0;
      }
    }
  }
  std::vector<double> inverse(nodes, 0.0);
  for (Index r = 0; r < nodes; ++r) inverse[r] = degree[r] > 0.0 ? 1.0 / degree[r] : 0.0;
  auto propagation = std::make_shared<SparseMatrix>(adjacency->scale_rows(inverse));
  return {std::move(adjacency), std::move(propagation)};
}

BehaviorGraphs build_behavior_graphs(const InteractionSet& set, DegreeMode mode) {
  BehaviorGraphs graphs;
  for (Index k = 0; k < set.num_behaviors(); ++k) graphs.push_back(build_behavior_graph(set, k, mode));
  return graphs;
}

Split leave_one_out_split(const InteractionSet& set, std::uint64_t seed) {
  const Index target = set.target();
  if (set.edges[target].empty()) throw SplitError("target behavior has no interactions");
  std::vector<std::vector<std::size_t>> by_user(set.num_users());
  for (std::size_t i = 0; i < set.edges[target].size(); ++i) by_user[set.edges[target][i].user].push_back(i);

  std::mt19937_64 rng(seed);
  Split split;
  std::vector<bool> held_out(set.edges[target].size(), false);
  for (Index u = 0; u < set.num_users(); ++u) {
    const auto& mine = by_user[u];
    if (mine.size() < 2) continue;
    // Latest timestamp wins; records without one are only candidates when no
    // record of this user has a timestamp.
    std::optional<std::int64_t> latest;
    for (auto i : mine) {
      const auto& t = set.edges[target][i].timestamp;
      if (t && (!latest || *t > *latest)) latest = t;
    }
    std::vector<std::size_t> candidates;
    for (auto i : mine) {
      if (set.edges[target][i].timestamp == latest) candidates.push_back(i);
    }
    std::size_t pick = candidates.front();
    if (candidates.size() > 1) {
      std::uniform_int_distribution<std::size_t> dist(0, candidates.size() - 1);
      pick = candidates[dist(rng)];
    }
    held_out[pick] = true;
    split.test.push_back({u, set.edges[target][pick].item});
  }
  if (split.test.empty()) throw SplitError("no user has two or more target interactions; test set would be empty");

  split.train = set;
  auto& kept = split.train.edges[target];
  kept.clear();
  for (std::size_t i = 0; i < set.edges[target].size(); ++i) {
    if (!held_out[i]) kept.push_back(set.edges[target][i]);
  }
  return split;
}

std::string serialize_snapshot(const Split& split) {
  const auto& s = split.train;
  std::ostringstream os;
  os << kSnapshotTag << ' ' << kSnapshotVersion << '\n';
  os << "behaviors " << s.behaviors.size() << '\n';
  for (const auto& b : s.behaviors) os << b << '\n';
  os << "users " << s.user_ids.size() << '\n';
  for (const auto& u : s.user_ids) os << u << '\n';
  os << "items " << s.item_ids.size() << '\n';
  for (const auto& v : s.item_ids) os << v << '\n';
  for (std::size_t k = 0; k < s.edges.size(); ++k) {
    os << "edges " << k << ' ' << s.edges[k].size() << '\n';
    for (const auto& e : s.edges[k]) {
      os << e.user << '\t' << e.item << '\t';
      if (e.timestamp) {
        os << *e.timestamp;
      } else {
        os << '-';
      }
      os << '\n';
    }
  }
  os << "test " << split.test.size() << '\n';
  for (const auto& t : split.test) os << t.user << '\t' << t.item << '\n';
  return os.str();
}

Split parse_snapshot(const std::string& text) {
  std::istringstream in(text);
  auto fail = [](const std::string& what) -> DataError { return DataError("malformed snapshot: " + what); };
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != kSnapshotTag) throw fail("missing format tag");
  if (version != kSnapshotVersion) throw fail("unsupported version " + std::to_string(version));

  auto header = [&](const std::string& expected) {
    std::string word;
    std::size_t count = 0;
    if (!(in >> word >> count) || word != expected) throw fail("expected section '" + expected + "'");
    std::string rest;
    std::getline(in, rest);
    return count;
  };
  auto read_lines = [&](std::size_t n, std::vector<std::string>& out) {
    out.resize(n);
    for (auto& line : out) {
      if (!std::getline(in, line)) throw fail("truncated name list");
    }
  };

  Split split;
  auto& s = split.train;
  read_lines(header("behaviors"), s.behaviors);
  read_lines(header("users"), s.user_ids);
  read_lines(header("items"), s.item_ids);
  s.edges.resize(s.behaviors.size());
  for (std::size_t k = 0; k < s.behaviors.size(); ++k) {
    std::string word;
    std::size_t index = 0, count = 0;
    if (!(in >> word >> index >> count) || word != "edges" || index != k) throw fail("expected edges section");
    s.edges[k].resize(count);
    for (auto& e : s.edges[k]) {
      std::string ts;
      if (!(in >> e.user >> e.item >> ts)) throw fail("truncated edge list");
      if (ts != "-") {
        e.timestamp = parse_int(ts);
        if (!e.timestamp) throw fail("bad timestamp '" + ts + "'");
      }
    }
  }
  split.test.resize(header("test"));
  for (auto& t : split.test) {
    if (!(in >> t.user >> t.item)) throw fail("truncated test list");
  }
  s.validate();
  return split;
}

void save_snapshot(const std::filesystem::path& path, const Split& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << serialize_snapshot(split);
}

Split load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open snapshot " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_snapshot(buffer.str());
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

DatasetStats dataset_stats(const Split& split) {
  const auto& s = split.train;
  DatasetStats stats;
  stats.users = s.num_users();
  stats.items = s.num_items();
  stats.test_users = static_cast<Index>(split.test.size());
  for (Index k = 0; k < s.num_behaviors(); ++k) {
    BehaviorStats b;
    b.behavior = s.behaviors[k];
    std::set<Index> users;
    for (const auto& e : s.edges[k]) users.insert(e.user);
    b.interactions = static_cast<Index>(s.edges[k].size());
    if (k == s.target()) {
      for (const auto& t : split.test) users.insert(t.user);
      b.interactions += stats.test_users;
      stats.target_interactions = b.interactions;
    }
    b.users_with_interactions = static_cast<Index>(users.size());
    stats.interactions += b.interactions;
    stats.behaviors.push_back(b);
  }
  return stats;
}

}  // namespace mbrec

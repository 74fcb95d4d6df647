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

// mbrec: prepare / train / eval / ablate / gradcheck.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure (including failed verification checks).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mbrec/config.hpp"
#include "mbrec/data.hpp"
#include "mbrec/errors.hpp"
#include "mbrec/evaluation.hpp"
#include "mbrec/oracle.hpp"
#include "mbrec/runner.hpp"
#include "mbrec/training.hpp"
#include "mbrec/verify.hpp"

#ifndef MBREC_DEFAULT_FIXTURE
#define MBREC_DEFAULT_FIXTURE "tests/fixtures/standard.json"
#endif

namespace fs = std::filesystem;
using namespace mbrec;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void log_line(const std::string& line) { std::cerr << line << '\n'; }

std::string joined_command_line(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) out += (i ? " " : "") + std::string(argv[i]);
  return out;
}

struct CommonRunFlags {
  std::string config;
  std::string data;
  std::string variant;
  Index threads = 0;
  double lr = -1.0;
  Index epochs = -1;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config, "flat JSON configuration")->check(CLI::ExistingFile);
    cmd->add_option("--data", data, "prepared dataset directory or snapshot file (overrides \"data\")");
    cmd->add_option("--threads", threads, "evaluation workers")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", lr, "learning rate override")->check(CLI::NonNegativeNumber);
    cmd->add_option("--epochs", epochs, "epoch count override")->check(CLI::NonNegativeNumber);
  }

  EngineConfig resolve() const {
    EngineConfig c = config.empty() ? EngineConfig{} : load_config(config);
    if (!variant.empty()) apply_variant(c, variant);
    if (!data.empty()) c.data = data;
    if (threads > 0) c.eval.threads = threads;
    if (lr >= 0.0) c.train.adam.lr = lr;
    if (epochs >= 0) c.train.epochs = epochs;
    c.validate();
    return c;
  }
};

// ---- prepare ---------------------------------------------------------------

struct PrepareFlags {
  std::vector<std::string> inputs;
  std::string out;
  std::uint64_t seed = 1;
};

std::string stats_table(const DatasetStats& s, const std::string& hash) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "users %lld, items %lld, interactions %lld, test users %lld\n",
                static_cast<long long>(s.users), static_cast<long long>(s.items),
                static_cast<long long>(s.interactions), static_cast<long long>(s.test_users));
  out << line;
  std::snprintf(line, sizeof line, "%-16s %14s %8s\n", "behavior", "interactions", "users");
  out << line;
  for (const auto& b : s.behaviors) {
    std::snprintf(line, sizeof line, "%-16s %14lld %8lld\n", b.behavior.c_str(),
                  static_cast<long long>(b.interactions), static_cast<long long>(b.users_with_interactions));
    out << line;
  }
  out << "dataset hash " << hash << '\n';
  return out.str();
}

int cmd_prepare(const PrepareFlags& flags) {
  std::vector<BehaviorFile> files;
  std::vector<std::string> order;
  for (const auto& entry : flags.inputs) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == entry.size()) {
      throw UsageError("--input expects behavior=path, got '" + entry + "'");
    }
    files.push_back({entry.substr(0, eq), entry.substr(eq + 1)});
    order.push_back(entry.substr(0, eq));
  }
  InteractionSet set = load_interactions(files, order);
  Split split = leave_one_out_split(set, flags.seed);
  const fs::path out = flags.out;
  fs::create_directories(out);
  save_snapshot(out / "snapshot.txt", split);
  const std::string hash = dataset_hash(split);
  const DatasetStats s = dataset_stats(split);

  nlohmann::ordered_json j;
  j["dataset_hash"] = hash;
  j["split_seed"] = flags.seed;
  j["users"] = s.users;
  j["items"] = s.items;
  j["interactions"] = s.interactions;
  j["target_interactions"] = s.target_interactions;
  j["test_users"] = s.test_users;
  j["behaviors"] = nlohmann::ordered_json::array();
  for (const auto& b : s.behaviors) {
    j["behaviors"].push_back({{"behavior", b.behavior},
                              {"interactions", b.interactions},
                              {"users", b.users_with_interactions}});
  }
  write_text(out / "stats.json", j.dump(2) + "\n");
  const std::string table = stats_table(s, hash);
  write_text(out / "stats.txt", table);
  std::cout << table;
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainFlags {
  CommonRunFlags run;
  std::string out;
  Index seeds = 0;
};

int cmd_train(const TrainFlags& flags, const std::string& command_line) {
  const EngineConfig config = flags.run.resolve();
  const Split split = load_dataset(config.data);
  const auto seeds = seed_list(config.train.seed, flags.seeds > 0 ? flags.seeds : config.train.seeds);
  const fs::path out = flags.out;
  fs::create_directories(out);
  write_manifest(out, run_manifest(config, dataset_hash(split), seeds, command_line));

  RunSummary summary = run_seeds(split, config, seeds, {out, log_line});
  write_text(out / "metrics.json", metrics_json(summary).dump(2) + "\n");
  const std::string table = metrics_table(summary);
  write_text(out / "metrics.txt", table);
  std::cout << table;
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalFlags {
  CommonRunFlags run;
  std::string checkpoint;
};

int cmd_eval(const EvalFlags& flags) {
  const EngineConfig config = flags.run.resolve();
  const Split split = load_dataset(config.data);
  const InteractionSet data = training_view(split, config);
  const BehaviorGraphs graphs = build_behavior_graphs(data, config.cogcn.degree_mode);
  const ModelShape shape = ModelShape::of(data, config.cogcn);
  ParameterStore params = make_parameters(shape, config);
  const auto step = load_checkpoint(flags.checkpoint, params, config_hash(config));
  Scorer scorer(params, shape, config, graphs);
  const Metrics m = evaluate(scorer, data, split.test, config.eval, config.train.seed);

  nlohmann::ordered_json j;
  j["checkpoint"] = flags.checkpoint;
  j["step"] = step;
  j["hr10"] = m.hr;
  j["ndcg10"] = m.ndcg;
  j["users"] = m.users;
  std::printf("HR@%lld %.4f  NDCG@%lld %.4f  over %lld users\n", static_cast<long long>(config.eval.k), m.hr,
              static_cast<long long>(config.eval.k), m.ndcg, static_cast<long long>(m.users));
  std::cout << j.dump() << '\n';
  return 0;
}

// ---- ablate ----------------------------------------------------------------

struct AblateFlags {
  CommonRunFlags run;
  std::vector<std::string> variants;
  std::string out;
  Index seeds = 0;
};

int cmd_ablate(const AblateFlags& flags, const std::string& command_line) {
  // Resolve every variant before any compute so a typo fails fast.
  std::vector<std::pair<std::string, EngineConfig>> configs;
  for (const auto& v : flags.variants) {
    CommonRunFlags one = flags.run;
    one.variant = v;
    configs.emplace_back(v, one.resolve());
  }
  const Split split = load_dataset(configs.front().second.data);
  const std::string hash = dataset_hash(split);
  const fs::path out = flags.out;

  std::vector<AblationRow> rows;
  for (const auto& [variant, config] : configs) {
    const auto seeds = seed_list(config.train.seed, flags.seeds > 0 ? flags.seeds : config.train.seeds);
    const fs::path dir = out / variant_dir(variant);
    fs::create_directories(dir);
    write_manifest(dir, run_manifest(config, hash, seeds, command_line));
    log_line("variant " + variant);
    RunSummary summary = run_seeds(split, config, seeds, {dir, log_line});
    write_text(dir / "metrics.json", metrics_json(summary).dump(2) + "\n");
    rows.push_back({variant, summary});
  }
  write_text(out / "ablation.json", ablation_json(rows).dump(2) + "\n");
  const std::string table = ablation_table(rows);
  write_text(out / "ablation.txt", table);
  std::cout << table;
  return 0;
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckFlags {
  std::string fixture = MBREC_DEFAULT_FIXTURE;
  std::string config;
  std::string variant;
  std::string fault;
};

int cmd_gradcheck(const GradcheckFlags& flags) {
  oracle::DenseFixture fixture = oracle::load_fixture(flags.fixture);
  if (!flags.config.empty()) {
    // The fixture's own settings, then the file's keys on top.
    std::ifstream in(flags.config);
    nlohmann::json overrides;
    try {
      overrides = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(flags.config + ": " + e.what());
    }
    if (!overrides.is_object()) throw ConfigError(flags.config + ": expected a JSON object");
    for (const auto& [key, value] : overrides.items()) {
      if (key != "data") fixture.config[key] = value;
    }
  }
  EngineConfig config = fixture.engine_config();
  if (!flags.variant.empty()) apply_variant(config, flags.variant);
  config.validate();
  bool ok = true;

  auto grads = verify::check_gradients(fixture, config, flags.fault);
  ok = ok && grads.passed;
  std::printf("[%s] gradient: max relative error %.3e vs finite differences, %.3e vs reference (tolerance %.0e, %.2f s)\n",
              grads.passed ? "PASS" : "FAIL", grads.engine.max_relative_error, grads.oracle_max_relative_error,
              grads.tolerance, grads.seconds);
  for (const auto& p : grads.engine.parameters) {
    std::printf("    %-18s max rel %.3e  max abs %.3e%s\n", p.name.c_str(), p.max_relative_error,
                p.max_absolute_error, p.passed ? "" : "  <- mismatch");
  }
  if (!grads.passed) {
    if (const auto* worst = grads.engine.worst()) std::printf("    failing parameter: %s\n", worst->name.c_str());
    std::printf("    worst reference entry %s\n", grads.oracle_worst.c_str());
  }

  const bool gated = config.dfme.head == HeadKind::kDfme && fixture.num_behaviors() > 1;
  if (gated) {
    auto sg = verify::check_stop_gradient(fixture, config);
    ok = ok && sg.passed;
    std::printf("[%s] stop-gradient paths (%s)\n", sg.passed ? "PASS" : "FAIL",
                sg.expect_zero ? "expected zero" : "open in this configuration; nonzero is expected");
    for (const auto& t : sg.tasks) {
      std::printf("    task %lld: last term %.3e, target rep tape %.3e / numeric %.3e; target loss %.3e / %.3e%s\n",
                  static_cast<long long>(t.task), t.term_analytic, t.target_analytic, t.target_numeric,
                  t.live_analytic, t.live_numeric, t.stopped ? "" : "  (not stopped: expected nonzero)");
    }
  } else {
    std::printf("[SKIP] stop-gradient paths (no gated head in this configuration)\n");
  }

  auto fwd = verify::compare_forward(fixture, config);
  const bool fwd_ok = fwd.max_abs_diff <= 1e-10;
  ok = ok && fwd_ok;
  std::printf("[%s] sparse vs dense forward: max abs difference %.3e%s%s\n", fwd_ok ? "PASS" : "FAIL",
              fwd.max_abs_diff, fwd.worst.empty() ? "" : " at ", fwd.worst.c_str());
  std::printf("%s\n", ok ? "gradcheck passed" : "gradcheck FAILED");
  return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-behavior recommendation: data preparation, training and verification"};
  app.set_version_flag("--version", engine_version());
  app.require_subcommand(1);

  PrepareFlags prepare;
  auto* p = app.add_subcommand("prepare", "ingest raw behavior logs and write a split snapshot");
  p->add_option("--input", prepare.inputs, "behavior=path, repeated; order is the behavior order, target last")
      ->required();
  p->add_option("--out", prepare.out, "output directory")->required();
  p->add_option("--seed", prepare.seed, "tie-break seed for the leave-one-out split");

  TrainFlags train_flags;
  auto* t = app.add_subcommand("train", "train over the seed list and report HR@10 / NDCG@10");
  train_flags.run.add_to(t);
  t->add_option("--variant", train_flags.run.variant, "named configuration variant");
  t->add_option("--out", train_flags.out, "run directory")->required();
  t->add_option("--seeds", train_flags.seeds, "number of seeds (base seed from the config)")
      ->check(CLI::PositiveNumber);

  EvalFlags eval_flags;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  eval_flags.run.add_to(e);
  e->add_option("--variant", eval_flags.run.variant, "named configuration variant");
  e->add_option("--checkpoint", eval_flags.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);

  AblateFlags ablate_flags;
  auto* a = app.add_subcommand("ablate", "train several variants and tabulate them");
  ablate_flags.run.add_to(a);
  a->add_option("--variant", ablate_flags.variants, "variant names (repeat or comma-separate)")
      ->required()
      ->delimiter(',');
  a->add_option("--out", ablate_flags.out, "output directory")->required();
  a->add_option("--seeds", ablate_flags.seeds, "number of seeds per variant")->check(CLI::PositiveNumber);

  GradcheckFlags grad_flags;
  auto* g = app.add_subcommand("gradcheck", "gradient, stop-gradient and reference checks on a fixture");
  g->add_option("--fixture", grad_flags.fixture, "dense fixture")->check(CLI::ExistingFile);
  g->add_option("--config", grad_flags.config, "JSON keys applied over the fixture's settings")
      ->check(CLI::ExistingFile);
  g->add_option("--variant", grad_flags.variant, "named configuration variant");
  g->add_option("--inject-fault", grad_flags.fault, "perturb this parameter's analytic gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  const std::string command_line = joined_command_line(argc, argv);
  try {
    if (*p) return cmd_prepare(prepare);
    if (*t) return cmd_train(train_flags, command_line);
    if (*e) return cmd_eval(eval_flags);
    if (*a) return cmd_ablate(ablate_flags, command_line);
    if (*g) return cmd_gradcheck(grad_flags);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kExitData;
  } catch (const NumericError& err) {
    std::cerr << "numeric error: " << err.what() << '\n';
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

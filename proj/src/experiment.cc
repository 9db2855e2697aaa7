// Copyright 2026 The Tabular MOPO Authors.
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

#include "mopo/experiment.h"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

namespace mopo {
namespace {

using ::Eigen::VectorXd;

void RejectUnknown(const Json& j, const std::set<std::string>& allowed,
                   const std::string& where) {
  if (!j.is_object()) throw FormatError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw FormatError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T Read(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(std::string("bad value for '") + key + "'");
  }
}

int ReadPositive(const Json& j, const char* key, int fallback) {
  const Json& v = j.contains(key) ? j.at(key) : Json(fallback);
  if (!v.is_number_integer() || v.get<long long>() < 1) {
    throw FormatError(std::string("'") + key + "' must be a positive integer");
  }
  return v.get<int>();
}

WorldConfig ParseWorld(const Json& j) {
  RejectUnknown(j, {"prompts", "responses", "objectives", "feature_dim",
                    "reward_bound", "beta", "seed"},
                "world");
  WorldConfig w;
  w.prompts = ReadPositive(j, "prompts", w.prompts);
  w.responses = ReadPositive(j, "responses", w.responses);
  w.objectives = ReadPositive(j, "objectives", w.objectives);
  w.feature_dim = ReadPositive(j, "feature_dim", w.feature_dim);
  w.reward_bound = Read<double>(j, "reward_bound", w.reward_bound);
  w.beta = Read<double>(j, "beta", w.beta);
  w.seed = Read<std::uint64_t>(j, "seed", w.seed);
  if (w.responses < 2 || w.feature_dim < 2 || !(w.beta > 0.0) || !(w.reward_bound >= 0.0)) {
    throw FormatError("world needs responses >= 2, feature_dim >= 2, beta > 0, reward_bound >= 0");
  }
  return w;
}

Json WorldConfigToJson(const WorldConfig& w) {
  Json out;
  out["prompts"] = w.prompts;
  out["responses"] = w.responses;
  out["objectives"] = w.objectives;
  out["feature_dim"] = w.feature_dim;
  out["reward_bound"] = w.reward_bound;
  out["beta"] = w.beta;
  out["seed"] = w.seed;
  return out;
}

OracleBudget BudgetFor(const ExperimentConfig& config) {
  OracleBudget budget;
  budget.restarts = config.oracle_restarts;
  return budget;
}

std::vector<Policy> TruePolicies(const TabularWorld& world) {
  std::vector<Policy> out;
  for (int i = 0; i < world.num_objectives(); ++i) {
    VectorXd e = VectorXd::Zero(world.num_objectives());
    e[i] = 1.0;
    out.push_back(OptimalPolicyLinear(world, e, world.true_rewards()));
  }
  return out;
}

// Runs fn(k) for k in [0, count) on up to `workers` threads.
template <typename Fn>
void ParallelFor(int count, int workers, Fn fn) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int k = next++; k < count; k = next++) fn(k);
    });
  }
  for (auto& t : pool) t.join();
}

SeedOutcome RunOneSeed(const TabularWorld& world, const ExperimentConfig& config,
                       const Target& target, std::uint64_t seed,
                       const std::optional<OracleResult>& oracle) {
  SeedOutcome outcome;
  outcome.seed = seed;
  outcome.trace_path =
      (std::filesystem::path(config.output_dir) / ("trace_seed" + std::to_string(seed) + ".csv"))
          .string();
  std::ofstream csv(outcome.trace_path, std::ios::binary | std::ios::trunc);
  if (!csv) {
    outcome.message = "cannot write " + outcome.trace_path;
    return outcome;
  }
  const int groups = target.groups.num_groups();
  const int m = world.num_objectives();
  WriteTraceCsvHeader(csv, groups, m);
  const IterationCallback stream = [&](const IterationRecord& record) {
    WriteTraceCsvRow(csv, record, groups, m);
    csv.flush();
  };
  RunConfig run;
  run.mode = config.mode;
  run.iterations = config.iterations;
  run.eta = config.eta;
  run.dataset_size = config.dataset_size;
  run.seed = seed;
  run.param_bound = config.param_bound;
  run.initial_direction = config.initial_direction;
  if (config.inject_true_rewards) run.injected_theta = world.theta_star();
  try {
    RunTrace trace;
    switch (config.mode) {
      case RunMode::kOffline: {
        std::mt19937_64 rng(seed);
        const auto data = GenerateOfflineData(world, config.dataset_size, rng);
        trace = RunOffline(world, data, target, run, stream);
        break;
      }
      case RunMode::kOnline:
        trace = RunOnline(world, target, run, stream);
        break;
      case RunMode::kPractical:
        trace = RunPractical(world, TruePolicies(world), target, run, stream);
        break;
    }
    outcome.ok = true;
    outcome.final_objective = trace.final_objective;
    outcome.final_value = trace.final_value;
    if (oracle.has_value()) outcome.gap = EvaluateGap(world, trace, *oracle);
  } catch (const std::exception& e) {
    outcome.message = e.what();
  }
  return outcome;
}

}  // namespace

std::vector<VectorXd> DefaultAlphaSweep() {
  std::vector<VectorXd> out;
  const double sweep[5][2] = {{0.1, 0.9}, {0.3, 0.7}, {0.5, 0.5}, {0.7, 0.3}, {0.9, 0.1}};
  for (const auto& pair : sweep) {
    VectorXd v(2);
    v << pair[0], pair[1];
    out.push_back(v);
  }
  return out;
}

ExperimentConfig ParseExperimentConfig(const Json& j) {
  RejectUnknown(j, {"world", "world_path", "mode", "goal", "target", "iterations",
                    "dataset_size", "eta", "param_bound", "seeds", "output_dir",
                    "inject_true_rewards", "oracle", "oracle_restarts", "workers",
                    "initial_direction", "compare"},
                "config");
  ExperimentConfig c;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') {
    c.output_dir = env;
  }
  if (j.contains("world")) c.world = ParseWorld(j.at("world"));
  if (j.contains("world_path")) c.world_path = Read<std::string>(j, "world_path", "");
  try {
    c.mode = ParseRunMode(Read<std::string>(j, "mode", "offline"));
    c.goal = ParseGoal(Read<std::string>(j, "goal", "consensus"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  if (j.contains("target")) c.target = MultiGroupSpecFromJson(j.at("target"));
  c.iterations = ReadPositive(j, "iterations", c.iterations);
  c.dataset_size = ReadPositive(j, "dataset_size", c.dataset_size);
  if (j.contains("eta") && !j.at("eta").is_null()) {
    c.eta = Read<double>(j, "eta", 0.0);
    if (!(*c.eta > 0.0)) throw FormatError("eta must be positive");
  }
  c.param_bound = Read<double>(j, "param_bound", c.param_bound);
  if (j.contains("seeds")) {
    c.seeds = Read<std::vector<std::uint64_t>>(j, "seeds", {});
    if (c.seeds.empty()) throw FormatError("seeds must be non-empty");
  }
  c.output_dir = Read<std::string>(j, "output_dir", c.output_dir);
  c.inject_true_rewards = Read<bool>(j, "inject_true_rewards", false);
  c.oracle = Read<bool>(j, "oracle", false);
  c.oracle_restarts = ReadPositive(j, "oracle_restarts", c.oracle_restarts);
  c.workers = ReadPositive(j, "workers", c.workers);
  const std::string init = Read<std::string>(j, "initial_direction", "uniform");
  if (init == "uniform") {
    c.initial_direction = InitialDirection::kUniform;
  } else if (init == "toward_target") {
    c.initial_direction = InitialDirection::kTowardTarget;
  } else {
    throw FormatError("initial_direction must be \"uniform\" or \"toward_target\"");
  }
  c.compare.alphas = DefaultAlphaSweep();
  if (j.contains("compare")) {
    const Json& cj = j.at("compare");
    RejectUnknown(cj, {"p", "c", "iterations", "alphas"}, "compare");
    c.compare.p = Read<double>(cj, "p", c.compare.p);
    c.compare.c = Read<double>(cj, "c", c.compare.c);
    c.compare.iterations = ReadPositive(cj, "iterations", c.compare.iterations);
    if (cj.contains("alphas")) {
      c.compare.alphas.clear();
      for (const Json& a : cj.at("alphas")) c.compare.alphas.push_back(VectorFromJson(a));
      if (c.compare.alphas.empty()) throw FormatError("compare.alphas must be non-empty");
    }
    if (!c.world_path.has_value()) {
      for (const VectorXd& alpha : c.compare.alphas) {
        if (alpha.size() != c.world.objectives) {
          throw FormatError("compare.alphas entries need one weight per objective");
        }
      }
    }
    for (const VectorXd& alpha : c.compare.alphas) {
      try {
        AggregationSpec{alpha, c.compare.p, c.compare.c}.Validate();
      } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("compare: ") + e.what());
      }
    }
  }
  if (c.target.has_value()) {
    const int m = c.world_path.has_value() ? c.target->dim() : c.world.objectives;
    if (c.target->dim() != m) throw FormatError("target dimension differs from the world");
  }
  return c;
}

Json ToJson(const ExperimentConfig& c) {
  Json out;
  out["world"] = WorldConfigToJson(c.world);
  if (c.world_path.has_value()) out["world_path"] = *c.world_path;
  out["mode"] = RunModeName(c.mode);
  out["goal"] = GoalName(c.goal);
  if (c.target.has_value()) out["target"] = ToJson(*c.target);
  out["iterations"] = c.iterations;
  out["dataset_size"] = c.dataset_size;
  out["eta"] = c.eta.has_value() ? Json(*c.eta) : Json(nullptr);
  out["param_bound"] = c.param_bound;
  out["seeds"] = c.seeds;
  out["output_dir"] = c.output_dir;
  out["inject_true_rewards"] = c.inject_true_rewards;
  out["oracle"] = c.oracle;
  out["oracle_restarts"] = c.oracle_restarts;
  out["workers"] = c.workers;
  out["initial_direction"] =
      c.initial_direction == InitialDirection::kUniform ? "uniform" : "toward_target";
  Json cmp;
  cmp["p"] = c.compare.p;
  cmp["c"] = c.compare.c;
  cmp["iterations"] = c.compare.iterations;
  cmp["alphas"] = Json::array();
  for (const auto& a : c.compare.alphas) cmp["alphas"].push_back(VectorToJson(a));
  out["compare"] = cmp;
  return out;
}

TabularWorld LoadWorld(const ExperimentConfig& config) {
  if (config.world_path.has_value()) return WorldFromJson(ReadJsonFile(*config.world_path));
  try {
    return TabularWorld::Generate(config.world);
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
}

bool RunReport::all_failed() const {
  return std::none_of(seeds.begin(), seeds.end(),
                      [](const SeedOutcome& s) { return s.ok; });
}

RunReport RunExperiment(const ExperimentConfig& config) {
  if (!config.target.has_value()) throw FormatError("run needs a 'target'");
  const TabularWorld world = LoadWorld(config);
  Target target;
  target.goal = config.goal;
  target.groups = *config.target;
  if (target.groups.dim() != world.num_objectives()) {
    throw FormatError("target dimension differs from the world");
  }
  std::filesystem::create_directories(config.output_dir);
  RunReport report;
  if (config.oracle) {
    report.oracle = config.goal == Goal::kMalfare
                        ? SolveMalfare(world, target.groups, BudgetFor(config))
                        : SolveConsensus(world, target.groups.groups, BudgetFor(config));
    WriteFile((std::filesystem::path(config.output_dir) / "oracle.json").string(),
              ToJson(*report.oracle).dump(2) + "\n");
  }
  report.seeds.resize(config.seeds.size());
  ParallelFor(static_cast<int>(config.seeds.size()), config.workers, [&](int k) {
    report.seeds[k] = RunOneSeed(world, config, target, config.seeds[k], report.oracle);
  });

  Json summary;
  summary["format"] = kSummaryFormat;
  summary["trace_format"] = kTraceCsvFormat;
  summary["world_hash"] = HashToHex(WorldHash(world));
  summary["config"] = ToJson(config);
  summary["seeds"] = Json::array();
  double gap_sum = 0.0;
  int gap_count = 0;
  for (const auto& s : report.seeds) {
    Json e;
    e["seed"] = s.seed;
    e["status"] = s.ok ? "ok" : "error";
    if (s.ok) {
      e["final_objective"] = s.final_objective;
      e["final_value"] = VectorToJson(s.final_value);
      if (s.gap.has_value()) {
        e["gap"] = *s.gap;
        gap_sum += *s.gap;
        ++gap_count;
      }
    } else {
      e["message"] = s.message;
    }
    e["trace"] = std::filesystem::path(s.trace_path).filename().string();
    summary["seeds"].push_back(e);
  }
  if (report.oracle.has_value()) summary["oracle_value"] = report.oracle->value;
  summary["mean_gap"] = gap_count > 0 ? Json(gap_sum / gap_count) : Json(nullptr);
  report.summary = summary;
  WriteFile((std::filesystem::path(config.output_dir) / "summary.json").string(),
            summary.dump(2) + "\n");
  return report;
}

std::vector<ComparisonRow> CompareOnWorld(const TabularWorld& world,
                                          const CompareConfig& config,
                                          std::uint64_t seed,
                                          const OracleBudget& budget) {
  const std::vector<Policy> own = TruePolicies(world);
  const Policy maxmin = SolveMaxMin(world, budget).pi_star;
  std::vector<ComparisonRow> rows;
  for (const VectorXd& alpha : config.alphas) {
    AggregationSpec spec{alpha, config.p, config.c};
    spec.Validate();
    Target target;
    target.groups = MultiGroupSpec::Uniform({spec});
    RunConfig run;
    run.mode = RunMode::kPractical;
    run.iterations = config.iterations;
    ComparisonRow row;
    row.seed = seed;
    row.alpha = alpha;
    row.mopo = RunPractical(world, own, target, run).final_objective;
    row.mod = Objective(world, target, ModCombine(own, alpha));
    row.ar = Objective(world, target, AggregatedRewardPolicy(world, spec));
    row.maxmin = Objective(world, target, maxmin);
    rows.push_back(row);
  }
  return rows;
}

void WriteComparisonCsv(std::ostream& out, std::span<const ComparisonRow> rows) {
  out << "seed,alpha,mopo_practical,mod_linear,ar_clamped,maxmin_oracle\n";
  for (const auto& r : rows) {
    std::string alpha;
    for (int i = 0; i < r.alpha.size(); ++i) alpha += (i ? " " : "") + FormatDouble(r.alpha[i]);
    out << r.seed << ',' << alpha << ',' << FormatDouble(r.mopo) << ','
        << FormatDouble(r.mod) << ',' << FormatDouble(r.ar) << ','
        << FormatDouble(r.maxmin) << '\n';
  }
}

std::vector<ComparisonRow> RunComparison(const ExperimentConfig& config) {
  if (config.world_path.has_value()) {
    throw FormatError("compare generates one world per seed; drop 'world_path'");
  }
  std::vector<std::vector<ComparisonRow>> per_seed(config.seeds.size());
  OracleBudget budget = BudgetFor(config);
  budget.use_grid = false;
  ParallelFor(static_cast<int>(config.seeds.size()), config.workers, [&](int k) {
    WorldConfig wc = config.world;
    wc.seed = config.seeds[k];
    const TabularWorld world = TabularWorld::Generate(wc);
    per_seed[k] = CompareOnWorld(world, config.compare, config.seeds[k], budget);
  });
  std::vector<ComparisonRow> rows;
  for (auto& r : per_seed) rows.insert(rows.end(), r.begin(), r.end());
  std::filesystem::create_directories(config.output_dir);
  std::ostringstream cells;
  WriteComparisonCsv(cells, rows);
  WriteFile((std::filesystem::path(config.output_dir) / "comparison.csv").string(), cells.str());

  std::vector<ComparisonRow> means;
  for (size_t a = 0; a < config.compare.alphas.size(); ++a) {
    ComparisonRow mean;
    mean.alpha = config.compare.alphas[a];
    for (const auto& seed_rows : per_seed) {
      mean.mopo += seed_rows[a].mopo / per_seed.size();
      mean.mod += seed_rows[a].mod / per_seed.size();
      mean.ar += seed_rows[a].ar / per_seed.size();
      mean.maxmin += seed_rows[a].maxmin / per_seed.size();
    }
    means.push_back(mean);
  }
  std::ostringstream table;
  table << "alpha,mopo_practical,mod_linear,ar_clamped,maxmin_oracle\n";
  for (const auto& r : means) {
    std::string alpha;
    for (int i = 0; i < r.alpha.size(); ++i) alpha += (i ? " " : "") + FormatDouble(r.alpha[i]);
    table << alpha << ',' << FormatDouble(r.mopo) << ',' << FormatDouble(r.mod) << ','
          << FormatDouble(r.ar) << ',' << FormatDouble(r.maxmin) << '\n';
  }
  WriteFile((std::filesystem::path(config.output_dir) / "comparison_mean.csv").string(),
            table.str());
  return rows;
}

}  // namespace mopo

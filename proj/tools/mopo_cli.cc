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

// Command-line front end for the experiment harness.
//
// Exit codes: 0 success, 2 configuration error, 3 solver failure (for `run`,
// only when every seed fails).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mopo/errors.h"
#include "mopo/experiment.h"
#include "mopo/geometry.h"
#include "mopo/learning.h"
#include "mopo/oracle.h"
#include "mopo/serialization.h"
#include "mopo/world.h"

namespace mopo {
namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

// Accepts inline JSON or a path to a JSON file.
Json JsonArgument(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\n");
  if (first != std::string::npos && (arg[first] == '{' || arg[first] == '[')) {
    try {
      return Json::parse(arg);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed JSON: ") + e.what());
    }
  }
  return ReadJsonFile(arg);
}

Eigen::VectorXd ParsePoint(const std::string& text) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw FormatError("bad coordinate '" + item + "' in point");
    }
  }
  if (values.empty()) throw FormatError("empty point");
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::string OutputPath(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  return (std::filesystem::path(dir) / name).string();
}

// Scalar overrides shared by the config-driven subcommands.
struct Overrides {
  std::string config_path;
  std::optional<std::string> output_dir;
  std::optional<std::string> world_path;
  std::optional<std::string> mode;
  std::optional<std::string> goal;
  std::optional<int> iterations;
  std::optional<int> dataset_size;
  std::optional<double> eta;
  std::optional<double> beta;
  std::optional<double> reward_bound;
  std::optional<std::uint64_t> world_seed;
  std::vector<std::uint64_t> seeds;
  std::optional<int> workers;
  bool oracle = false;
  bool inject = false;

  void Register(CLI::App* app) {
    app->add_option("-c,--config", config_path, "experiment config JSON");
    app->add_option("-o,--output-dir", output_dir, "output directory");
    app->add_option("--world", world_path, "world JSON file");
    app->add_option("--mode", mode, "offline | online | practical");
    app->add_option("--goal", goal, "consensus | malfare");
    app->add_option("-T,--iterations", iterations);
    app->add_option("-M,--dataset-size", dataset_size);
    app->add_option("--eta", eta);
    app->add_option("--beta", beta);
    app->add_option("--reward-bound", reward_bound);
    app->add_option("--world-seed", world_seed);
    app->add_option("--seeds", seeds, "experiment seeds")->delimiter(',');
    app->add_option("-j,--workers", workers);
    app->add_flag("--oracle", oracle, "pair the run with the oracle");
    app->add_flag("--inject-true-rewards", inject);
  }

  ExperimentConfig Build() const {
    Json j = config_path.empty() ? Json::object() : JsonArgument(config_path);
    if (!j.is_object()) throw FormatError("config must be a JSON object");
    auto world = [&]() -> Json& {
      if (!j.contains("world")) j["world"] = Json::object();
      return j["world"];
    };
    if (output_dir) j["output_dir"] = *output_dir;
    if (world_path) j["world_path"] = *world_path;
    if (mode) j["mode"] = *mode;
    if (goal) j["goal"] = *goal;
    if (iterations) j["iterations"] = *iterations;
    if (dataset_size) j["dataset_size"] = *dataset_size;
    if (eta) j["eta"] = *eta;
    if (beta) world()["beta"] = *beta;
    if (reward_bound) world()["reward_bound"] = *reward_bound;
    if (world_seed) world()["seed"] = *world_seed;
    if (!seeds.empty()) j["seeds"] = seeds;
    if (workers) j["workers"] = *workers;
    if (oracle) j["oracle"] = true;
    if (inject) j["inject_true_rewards"] = true;
    return ParseExperimentConfig(j);
  }
};

int GenWorld(const Overrides& o, const std::optional<std::string>& out) {
  const ExperimentConfig config = o.Build();
  const TabularWorld world = LoadWorld(config);
  const std::string path = out ? *out : OutputPath(config.output_dir, "world.json");
  WriteFile(path, ToJson(world).dump(2) + "\n");
  std::cout << path << "\n";
  return 0;
}

int Run(const Overrides& o) {
  const RunReport report = RunExperiment(o.Build());
  for (const auto& s : report.seeds) {
    std::cout << "seed " << s.seed << ": ";
    if (s.ok) {
      std::cout << "objective " << FormatDouble(s.final_objective);
      if (s.gap) std::cout << " gap " << FormatDouble(*s.gap);
    } else {
      std::cout << "error: " << s.message;
    }
    std::cout << "\n";
  }
  return report.all_failed() ? kExitSolver : 0;
}

int Compare(const Overrides& o) {
  const ExperimentConfig config = o.Build();
  const auto rows = RunComparison(config);
  WriteComparisonCsv(std::cout, rows);
  return 0;
}

int ProjectCommand(const std::string& spec_arg, const std::string& point_arg) {
  const AggregationSpec spec = AggregationSpecFromJson(JsonArgument(spec_arg));
  const Eigen::VectorXd v = ParsePoint(point_arg);
  if (v.size() != spec.dim()) throw FormatError("point dimension differs from alpha");
  const Eigen::VectorXd z = Project(spec, v);
  const AggregationSpec specs[] = {spec};
  const Direction dir = DirectionConsensus(specs, v);
  Json out;
  out["projection"] = VectorToJson(z);
  out["distance"] = (z - v).norm();
  out["contains"] = Contains(spec, v);
  out["direction"] = VectorToJson(dir.d);
  out["direction_l1"] = VectorToJson(dir.L1Normalized().d);
  std::cout << out.dump(2) << "\n";
  return 0;
}

int OracleCommand(const std::string& world_path, const std::optional<std::string>& target,
                  const std::string& goal, bool maxmin, int restarts,
                  const std::optional<std::string>& out) {
  const TabularWorld world = WorldFromJson(ReadJsonFile(world_path));
  OracleBudget budget;
  budget.restarts = restarts;
  OracleResult result;
  if (maxmin) {
    result = SolveMaxMin(world, budget);
  } else {
    if (!target) throw FormatError("oracle needs --target or --maxmin");
    const MultiGroupSpec mg = MultiGroupSpecFromJson(JsonArgument(*target));
    if (mg.dim() != world.num_objectives()) throw FormatError("target dimension differs from the world");
    Goal g;
    try {
      g = ParseGoal(goal);
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what());
    }
    result = g == Goal::kMalfare ? SolveMalfare(world, mg, budget)
                                 : SolveConsensus(world, mg.groups, budget);
  }
  const std::string text = ToJson(result).dump(2) + "\n";
  if (out) {
    WriteFile(*out, text);
  } else {
    std::cout << text;
  }
  return 0;
}

int EstimateWeights(const std::string& world_path, const std::string& data_path,
                    const std::optional<std::string>& out) {
  const TabularWorld world = WorldFromJson(ReadJsonFile(world_path));
  std::ifstream in(data_path);
  if (!in) throw FormatError("cannot read " + data_path);
  const std::vector<PreferenceDatum> data = ReadJsonLines(in);
  const int m = world.num_objectives();
  std::vector<Dataset> by_index(m);
  std::map<int, Dataset> by_group;
  for (const auto& d : data) {
    if (d.index < 0 || d.index >= m) throw FormatError("datum index out of range");
    if (d.x < 0 || d.x >= world.num_prompts() || d.y_w < 0 || d.y_l < 0 ||
        d.y_w >= world.num_responses() || d.y_l >= world.num_responses()) {
      throw FormatError("datum refers to a prompt or response outside the world");
    }
    by_index[d.index].push_back(d);
    by_group[d.group].push_back(d);
  }
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(m, 1.0 / m);
  const RewardFit fit = FitTheta(world, by_index, uniform, FitMode::kMle, FitOptions{});
  Json result;
  result["reward_fit"] = ToJson(fit);
  result["groups"] = Json::array();
  for (const auto& [group, rows] : by_group) {
    Json g;
    g["group"] = group;
    g["estimate"] = ToJson(FitAlpha(IndexData(world, fit.theta, rows)));
    result["groups"].push_back(g);
  }
  const std::string text = result.dump(2) + "\n";
  if (out) {
    WriteFile(*out, text);
  } else {
    std::cout << text;
  }
  return 0;
}

int Main(int argc, char** argv) {
  CLI::App app{"Projection-based multi-objective alignment on tabular worlds"};
  app.require_subcommand(1);

  Overrides gen_o, run_o, cmp_o;
  std::optional<std::string> gen_out;
  auto* gen = app.add_subcommand("gen-world", "write a seeded world JSON");
  gen_o.Register(gen);
  gen->add_option("--out", gen_out, "output file (default <output-dir>/world.json)");

  auto* run = app.add_subcommand("run", "run MOPO over a list of seeds");
  run_o.Register(run);

  auto* cmp = app.add_subcommand("compare", "alpha sweep against the baselines");
  cmp_o.Register(cmp);

  std::string spec_arg, point_arg;
  auto* proj = app.add_subcommand("project", "project a point onto a target set");
  proj->add_option("--spec", spec_arg, "aggregation spec JSON or file")->required();
  proj->add_option("--point", point_arg, "comma-separated coordinates")->required();

  std::string oracle_world, oracle_goal = "consensus";
  std::optional<std::string> oracle_target, oracle_out;
  bool oracle_maxmin = false;
  int oracle_restarts = 32;
  auto* orc = app.add_subcommand("oracle", "solve the exact target problem");
  orc->add_option("--world", oracle_world)->required();
  orc->add_option("--target", oracle_target, "multi-group spec JSON or file");
  orc->add_option("--goal", oracle_goal);
  orc->add_flag("--maxmin", oracle_maxmin, "maximize the smallest objective instead");
  orc->add_option("--restarts", oracle_restarts)->check(CLI::PositiveNumber);
  orc->add_option("--out", oracle_out);

  std::string est_world, est_data;
  std::optional<std::string> est_out;
  auto* est = app.add_subcommand("estimate-weights", "fit rewards and group weights from data");
  est->add_option("--world", est_world)->required();
  est->add_option("--data", est_data, "preference data, JSON lines")->required();
  est->add_option("--out", est_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return GenWorld(gen_o, gen_out);
    if (*run) return Run(run_o);
    if (*cmp) return Compare(cmp_o);
    if (*proj) return ProjectCommand(spec_arg, point_arg);
    if (*orc) {
      return OracleCommand(oracle_world, oracle_target, oracle_goal, oracle_maxmin,
                           oracle_restarts, oracle_out);
    }
    if (*est) return EstimateWeights(est_world, est_data, est_out);
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const FormatError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace
}  // namespace mopo

int main(int argc, char** argv) { return mopo::Main(argc, argv); }

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


// Batch experiments behind the command-line tool: configuration parsing,
// seed sweeps with per-seed trace files, oracle pairing and the baseline
// comparison table.

#ifndef MOPO_EXPERIMENT_H_
#define MOPO_EXPERIMENT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "Eigen/Core"
#include "mopo/driver.h"
#include "mopo/serialization.h"
#include "mopo/world.h"

namespace mopo {

// Environment variable naming the default output directory.
inline constexpr char kOutputDirEnv[] = "MOPO_OUTPUT_DIR";

struct CompareConfig {
  double p = 0.5;
  double c = 1.0;
  int iterations = 7;
  // Each row is one weight vector of the sweep.
  std::vector<Eigen::VectorXd> alphas;
};

struct ExperimentConfig {
  WorldConfig world;
  std::optional<std::string> world_path;
  RunMode mode = RunMode::kOffline;
  Goal goal = Goal::kConsensus;
  std::optional<MultiGroupSpec> target;
  int iterations = 100;
  int dataset_size = 500;
  std::optional<double> eta;
  double param_bound = -1.0;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = ".";
  bool inject_true_rewards = false;
  bool oracle = false;
  int oracle_restarts = 32;
  int workers = 1;
  InitialDirection initial_direction = InitialDirection::kUniform;
  CompareConfig compare;
};

// Throws FormatError on unknown keys, wrong types or invalid values. The
// output directory defaults to $MOPO_OUTPUT_DIR, then ".".
ExperimentConfig ParseExperimentConfig(const Json& j);
Json ToJson(const ExperimentConfig& config);

// The configured world: loaded from world_path or generated.
TabularWorld LoadWorld(const ExperimentConfig& config);

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string message;
  double final_objective = 0.0;
  Eigen::VectorXd final_value;
  std::optional<double> gap;
  std::string trace_path;
};

struct RunReport {
  std::vector<SeedOutcome> seeds;
  std::optional<OracleResult> oracle;
  Json summary;
  bool all_failed() const;
};

// One trace per seed, streamed to <output_dir>/trace_seed<seed>.csv, plus
// summary.json (and oracle.json when enabled).
RunReport RunExperiment(const ExperimentConfig& config);

struct ComparisonRow {
  std::uint64_t seed = 0;
  Eigen::VectorXd alpha;
  double mopo = 0.0;    // practical driver, final averaged direction
  double mod = 0.0;     // fixed-alpha policy combination
  double ar = 0.0;      // aggregated clamped rewards
  double maxmin = 0.0;  // max-min optimal policy
};

inline constexpr int kComparisonMethods = 4;

// Distances to W_{p,c}^alpha for every weight vector of the sweep on one
// world.
std::vector<ComparisonRow> CompareOnWorld(const TabularWorld& world,
                                          const CompareConfig& config,
                                          std::uint64_t seed,
                                          const OracleBudget& budget);

// Generates one world per seed and writes comparison.csv (one row per seed
// and weight vector) and comparison_mean.csv (seed averages).
std::vector<ComparisonRow> RunComparison(const ExperimentConfig& config);

void WriteComparisonCsv(std::ostream& out, std::span<const ComparisonRow> rows);

// The default 2-objective sweep (0.1, 0.9), (0.3, 0.7), ..., (0.9, 0.1).
std::vector<Eigen::VectorXd> DefaultAlphaSweep();

}  // namespace mopo

#endif  // MOPO_EXPERIMENT_H_

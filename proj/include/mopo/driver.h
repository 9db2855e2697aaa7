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


// Iteration drivers. Each iteration solves one linearly aggregated problem
// in the direction obtained by projecting the current reward estimate onto
// the target sets, so the running average of the executed policies
// approaches the targets.

#ifndef MOPO_DRIVER_H_
#define MOPO_DRIVER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "Eigen/Core"
#include "mopo/geometry.h"
#include "mopo/learning.h"
#include "mopo/oracle.h"
#include "mopo/world.h"

namespace mopo {

enum class Goal { kConsensus, kMalfare };
enum class RunMode { kOffline, kOnline, kPractical };

std::string GoalName(Goal goal);
Goal ParseGoal(const std::string& name);
std::string RunModeName(RunMode mode);
RunMode ParseRunMode(const std::string& name);

struct Target {
  Goal goal = Goal::kConsensus;
  // Consensus uses only the groups; malfare also uses zeta and q.
  MultiGroupSpec groups;
};

// D(pi) for consensus, D_q(pi) for malfare, evaluated at a reward vector.
double TargetObjective(const Target& target, const Eigen::VectorXd& s);
// Per-group distances d(s, W_n).
Eigen::VectorXd GroupDistances(const Target& target, const Eigen::VectorXd& s);
// l1-normalized direction toward the target, or a zero direction.
Direction TargetDirection(const Target& target, const Eigen::VectorXd& v);
// TargetObjective at S(pi) under the true rewards.
double Objective(const TabularWorld& world, const Target& target,
                 const Policy& pi);

// Direction executed at the first iteration of the offline and online
// drivers: the uniform weights, or the direction from the origin toward the
// target (uniform when the origin already meets it).
enum class InitialDirection { kUniform, kTowardTarget };

struct RunConfig {
  RunMode mode = RunMode::kOffline;
  int iterations = 100;
  // Defaults to 1/sqrt(M) offline and 1/sqrt(T) online.
  std::optional<double> eta;
  int dataset_size = 500;
  std::uint64_t seed = 0;
  double param_bound = -1.0;
  // Replaces every reward fit with these parameters.
  std::optional<Parameters> injected_theta;
  bool keep_policies = false;
  InitialDirection initial_direction = InitialDirection::kUniform;
};

struct IterationRecord;
// Invoked after every iteration, e.g. to stream a trace file.
using IterationCallback = std::function<void(const IterationRecord&)>;

struct IterationRecord {
  int t = 0;
  Eigen::VectorXd d_bar;   // direction executed at iteration t
  Eigen::VectorXd d_next;  // raw direction computed at the end of t
  Eigen::VectorXd v;
  Eigen::VectorXd v_bar;
  double distance = 0.0;  // target objective at v_bar
  Eigen::VectorXd group_distances;
  std::vector<Eigen::VectorXd> alpha;      // online only, running mean
  std::vector<Eigen::VectorXd> alpha_hat;  // online only, latest estimate
  Eigen::VectorXd alpha_error;             // online only, sup-norm per group
};

struct RunTrace {
  RunConfig config;
  Target target;
  std::vector<IterationRecord> records;
  // Uniform average of the executed policies.
  Policy mixture;
  // Returned policy: the mixture, except for the practical driver, which
  // returns the combination for the final averaged direction.
  Policy final_policy;
  Eigen::VectorXd final_value;  // S(final_policy) under the true rewards
  double final_objective = 0.0;
  std::vector<Policy> policies;  // when config.keep_policies
  std::uint64_t world_hash = 0;
};

// Pessimistic fits on fixed datasets; values from the reward-free formula.
RunTrace RunOffline(const TabularWorld& world, std::span<const Dataset> datasets,
                    const Target& target, const RunConfig& config,
                    const IterationCallback& on_iteration = nullptr);

// Optimistic fits on data collected from the executed policies. The group
// weights in `target` are hidden from the learner: they only generate the
// feedback and score the weight estimates.
RunTrace RunOnline(const TabularWorld& world, const Target& target,
                   const RunConfig& config,
                   const IterationCallback& on_iteration = nullptr);

// Training-free variant: combines fixed per-objective optimal policies,
// projects the instantaneous reward vector and averages directions.
RunTrace RunPractical(const TabularWorld& world,
                      std::span<const Policy> objective_policies,
                      const Target& target, const RunConfig& config,
                      const IterationCallback& on_iteration = nullptr);

// Fixed-weight baseline that aggregates the rewards, clamped at zero, with
// the group's own power mean and tilts pi_ref by the result:
//   pi(y|x) ~ pi_ref(y|x) exp(agg(max(r(x,y), 0)) / beta).
Policy AggregatedRewardPolicy(const TabularWorld& world,
                              const AggregationSpec& spec);

// final_objective - oracle.value. Throws std::invalid_argument when the
// oracle was computed on a different world.
double EvaluateGap(const TabularWorld& world, const RunTrace& trace,
                   const OracleResult& oracle);

}  // namespace mopo

#endif  // MOPO_DRIVER_H_

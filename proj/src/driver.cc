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

#include "mopo/driver.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

namespace mopo {
namespace {

using ::Eigen::MatrixXd;
using ::Eigen::VectorXd;

VectorXd UniformDirection(int m) { return VectorXd::Constant(m, 1.0 / m); }

void CheckTarget(const TabularWorld& world, const Target& target) {
  if (target.groups.groups.empty()) throw std::invalid_argument("no target groups");
  if (target.goal == Goal::kMalfare) {
    target.groups.Validate();
  } else {
    for (const auto& spec : target.groups.groups) spec.Validate();
  }
  if (target.groups.dim() != world.num_objectives()) {
    throw std::invalid_argument("target dimension differs from the world");
  }
}

void CheckConfig(const RunConfig& config) {
  if (config.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (config.eta.has_value() && !(*config.eta > 0.0)) {
    throw std::invalid_argument("eta must be positive");
  }
}

std::vector<Policy> ObjectivePolicies(const TabularWorld& world,
                                      const Parameters& theta) {
  const RewardTables rewards = RewardTablesFor(world, theta);
  std::vector<Policy> out;
  for (int i = 0; i < world.num_objectives(); ++i) {
    VectorXd e = VectorXd::Zero(world.num_objectives());
    e[i] = 1.0;
    out.push_back(OptimalPolicyLinear(world, e, rewards));
  }
  return out;
}

VectorXd InitialDirectionFor(const Target& target, const RunConfig& config,
                             int m) {
  if (config.initial_direction == InitialDirection::kTowardTarget) {
    const Direction d = TargetDirection(target, VectorXd::Zero(m));
    if (!d.is_zero()) return d.d;
  }
  return UniformDirection(m);
}

// Bookkeeping shared by the three drivers.
class TraceBuilder {
 public:
  TraceBuilder(const TabularWorld& world, const Target& target,
               const RunConfig& config)
      : world_(world),
        v_bar_(VectorXd::Zero(world.num_objectives())),
        sum_(MatrixXd::Zero(world.num_prompts(), world.num_responses())) {
    trace_.config = config;
    trace_.target = target;
    trace_.world_hash = WorldHash(world);
  }

  // Folds in iteration t and returns the updated running mean of V.
  const VectorXd& Add(int t, const Policy& policy, const VectorXd& v) {
    v_bar_ = ((t - 1) * v_bar_ + v) / static_cast<double>(t);
    sum_ += policy.probs;
    if (trace_.config.keep_policies) trace_.policies.push_back(policy);
    return v_bar_;
  }

  void Record(IterationRecord record) { trace_.records.push_back(std::move(record)); }

  RunTrace Finish(std::optional<Policy> final_policy) {
    const int t = static_cast<int>(trace_.records.size());
    trace_.mixture = Policy{sum_ / static_cast<double>(t)};
    for (int x = 0; x < trace_.mixture.num_prompts(); ++x) {
      trace_.mixture.probs.row(x) /= trace_.mixture.probs.row(x).sum();
    }
    trace_.final_policy = final_policy.value_or(trace_.mixture);
    trace_.final_value =
        ExpectedRewardVector(world_, trace_.final_policy, world_.true_rewards());
    trace_.final_objective = TargetObjective(trace_.target, trace_.final_value);
    return std::move(trace_);
  }

 private:
  const TabularWorld& world_;
  RunTrace trace_;
  VectorXd v_bar_;
  MatrixXd sum_;
};

}  // namespace

std::string GoalName(Goal goal) {
  return goal == Goal::kMalfare ? "malfare" : "consensus";
}

Goal ParseGoal(const std::string& name) {
  if (name == "consensus") return Goal::kConsensus;
  if (name == "malfare") return Goal::kMalfare;
  throw std::invalid_argument("unknown goal: " + name);
}

std::string RunModeName(RunMode mode) {
  switch (mode) {
    case RunMode::kOffline:
      return "offline";
    case RunMode::kOnline:
      return "online";
    case RunMode::kPractical:
      return "practical";
  }
  return "unknown";
}

RunMode ParseRunMode(const std::string& name) {
  if (name == "offline") return RunMode::kOffline;
  if (name == "online") return RunMode::kOnline;
  if (name == "practical") return RunMode::kPractical;
  throw std::invalid_argument("unknown run mode: " + name);
}

double TargetObjective(const Target& target, const VectorXd& s) {
  if (target.goal == Goal::kMalfare) return Malfare(target.groups, s);
  return DistanceToIntersection(target.groups.groups, s);
}

VectorXd GroupDistances(const Target& target, const VectorXd& s) {
  VectorXd out(target.groups.num_groups());
  for (int n = 0; n < out.size(); ++n) {
    out[n] = Distance(target.groups.groups[n], s);
  }
  return out;
}

Direction TargetDirection(const Target& target, const VectorXd& v) {
  if (target.goal == Goal::kMalfare) {
    return DirectionMalfare(target.groups, v).normalized;
  }
  return DirectionConsensus(target.groups.groups, v).L1Normalized();
}

double Objective(const TabularWorld& world, const Target& target,
                 const Policy& pi) {
  return TargetObjective(target,
                         ExpectedRewardVector(world, pi, world.true_rewards()));
}

RunTrace RunOffline(const TabularWorld& world, std::span<const Dataset> datasets,
                    const Target& target, const RunConfig& config,
                    const IterationCallback& on_iteration) {
  CheckConfig(config);
  CheckTarget(world, target);
  const int m = world.num_objectives();
  if (static_cast<int>(datasets.size()) != m) {
    throw std::invalid_argument("need one dataset per objective");
  }
  size_t smallest = datasets.front().size();
  for (const Dataset& data : datasets) smallest = std::min(smallest, data.size());
  MopStepOptions step_options;
  step_options.mode = FitMode::kPessimistic;
  step_options.injected_theta = config.injected_theta;
  step_options.fit.eta = config.eta.value_or(
      1.0 / std::sqrt(static_cast<double>(std::max<size_t>(1, smallest))));
  step_options.fit.param_bound = config.param_bound;
  if (!config.injected_theta.has_value()) {
    // Every pessimistic fit starts from the plain likelihood fit.
    step_options.fit.init =
        FitTheta(world, datasets, UniformDirection(m), FitMode::kMle,
                 step_options.fit)
            .theta;
  }

  TraceBuilder builder(world, target, config);
  VectorXd d_bar = InitialDirectionFor(target, config, m);
  for (int t = 1; t <= config.iterations; ++t) {
    const MopStepResult step = MopStep(world, datasets, d_bar, step_options);
    const std::vector<Policy> own = ObjectivePolicies(world, step.fit.theta);
    const VectorXd v = RewardFreeValue(world, own, step.policy);
    const VectorXd& v_bar = builder.Add(t, step.policy, v);
    const Direction next = TargetDirection(target, v_bar);
    IterationRecord record;
    record.t = t;
    record.d_bar = d_bar;
    record.d_next = next.d;
    record.v = v;
    record.v_bar = v_bar;
    record.distance = TargetObjective(target, v_bar);
    record.group_distances = GroupDistances(target, v_bar);
    if (on_iteration) on_iteration(record);
    builder.Record(std::move(record));
    if (!next.is_zero()) d_bar = next.d;
  }
  return builder.Finish(std::nullopt);
}

RunTrace RunOnline(const TabularWorld& world, const Target& target,
                   const RunConfig& config,
                   const IterationCallback& on_iteration) {
  CheckConfig(config);
  CheckTarget(world, target);
  const int m = world.num_objectives();
  const int groups = target.groups.num_groups();
  std::vector<VectorXd> hidden_alpha;
  for (const auto& spec : target.groups.groups) hidden_alpha.push_back(spec.alpha);

  FitOptions fit;
  fit.eta = config.eta.value_or(1.0 / std::sqrt(static_cast<double>(config.iterations)));
  fit.param_bound = config.param_bound;
  MopStepOptions step_options;
  step_options.mode = FitMode::kOptimistic;
  step_options.online = true;
  step_options.injected_theta = config.injected_theta;

  std::mt19937_64 rng(config.seed);
  std::vector<Dataset> objective_data(m);
  std::vector<Dataset> group_data(groups);
  Target estimated = target;
  std::vector<VectorXd> alpha(groups, UniformDirection(m));
  std::vector<std::optional<VectorXd>> alpha_hat(groups);
  std::optional<Parameters> mle_theta;
  std::optional<Parameters> theta;

  for (int n = 0; n < groups; ++n) estimated.groups.groups[n].alpha = alpha[n];
  TraceBuilder builder(world, target, config);
  VectorXd d_bar = InitialDirectionFor(estimated, config, m);
  for (int t = 1; t <= config.iterations; ++t) {
    if (t > 1) {
      FitOptions mle_options = fit;
      mle_options.init = mle_theta;
      mle_theta = FitTheta(world, objective_data, UniformDirection(m),
                           FitMode::kMle, mle_options)
                      .theta;
      for (int n = 0; n < groups; ++n) {
        AlphaFitOptions alpha_options;
        alpha_options.init = alpha_hat[n];
        const WeightEstimate estimate =
            FitAlpha(IndexData(world, *mle_theta, group_data[n]), alpha_options);
        alpha_hat[n] = estimate.alpha_hat;
        alpha[n] = RunningMean(alpha[n], estimate.alpha_hat, t);
        alpha[n] /= alpha[n].sum();
      }
    }
    for (int n = 0; n < groups; ++n) estimated.groups.groups[n].alpha = alpha[n];

    step_options.fit = fit;
    step_options.fit.init = theta;
    const MopStepResult step = MopStep(world, objective_data, d_bar,
                                       step_options, hidden_alpha, &rng);
    theta = step.fit.theta;
    for (const PreferenceDatum& datum : step.data) {
      objective_data[datum.index].push_back(datum);
      group_data[datum.group].push_back(datum);
    }
    const std::vector<Policy> own = ObjectivePolicies(world, step.fit.theta);
    const VectorXd v = RewardFreeValue(world, own, step.policy);
    const VectorXd& v_bar = builder.Add(t, step.policy, v);
    const Direction next = TargetDirection(estimated, v_bar);
    IterationRecord record;
    record.t = t;
    record.d_bar = d_bar;
    record.d_next = next.d;
    record.v = v;
    record.v_bar = v_bar;
    record.distance = TargetObjective(estimated, v_bar);
    record.group_distances = GroupDistances(estimated, v_bar);
    record.alpha = alpha;
    for (int n = 0; n < groups; ++n) {
      record.alpha_hat.push_back(alpha_hat[n].value_or(alpha[n]));
    }
    record.alpha_error = VectorXd(groups);
    for (int n = 0; n < groups; ++n) {
      record.alpha_error[n] =
          (alpha[n] - hidden_alpha[n]).lpNorm<Eigen::Infinity>();
    }
    if (on_iteration) on_iteration(record);
    builder.Record(std::move(record));
    if (!next.is_zero()) d_bar = next.d;
  }
  return builder.Finish(std::nullopt);
}

RunTrace RunPractical(const TabularWorld& world,
                      std::span<const Policy> objective_policies,
                      const Target& target, const RunConfig& config,
                      const IterationCallback& on_iteration) {
  CheckConfig(config);
  CheckTarget(world, target);
  const int m = world.num_objectives();
  if (static_cast<int>(objective_policies.size()) != m) {
    throw std::invalid_argument("need one policy per objective");
  }
  TraceBuilder builder(world, target, config);
  VectorXd d_bar = UniformDirection(m);
  VectorXd direction_sum = VectorXd::Zero(m);
  for (int t = 1; t <= config.iterations; ++t) {
    const Policy pi = ModCombine(objective_policies, d_bar);
    const VectorXd v = ExpectedRewardVector(world, pi, world.true_rewards());
    const VectorXd& v_bar = builder.Add(t, pi, v);
    const Direction next = TargetDirection(target, v);
    // An already satisfied iterate keeps the current average direction.
    const VectorXd contribution = next.is_zero() ? d_bar : next.d;
    direction_sum += contribution;
    IterationRecord record;
    record.t = t;
    record.d_bar = d_bar;
    record.d_next = contribution;
    record.v = v;
    record.v_bar = v_bar;
    record.distance = TargetObjective(target, v_bar);
    record.group_distances = GroupDistances(target, v_bar);
    if (on_iteration) on_iteration(record);
    builder.Record(std::move(record));
    d_bar = direction_sum / static_cast<double>(t);
    d_bar /= d_bar.sum();
  }
  return builder.Finish(ModCombine(objective_policies, d_bar));
}

Policy AggregatedRewardPolicy(const TabularWorld& world,
                              const AggregationSpec& spec) {
  spec.Validate();
  const int m = world.num_objectives();
  if (spec.dim() != m) throw std::invalid_argument("spec dimension differs");
  MatrixXd logits = world.pi_ref().probs.array().log().matrix();
  VectorXd r(m);
  for (int x = 0; x < world.num_prompts(); ++x) {
    for (int y = 0; y < world.num_responses(); ++y) {
      for (int i = 0; i < m; ++i) r[i] = std::max(0.0, world.true_rewards()[i](x, y));
      logits(x, y) += Aggregate(spec, r) / world.beta();
    }
  }
  Policy out{MatrixXd(logits.rows(), logits.cols())};
  for (int x = 0; x < logits.rows(); ++x) {
    out.probs.row(x) = (logits.row(x).array() - logits.row(x).maxCoeff()).exp();
    out.probs.row(x) /= out.probs.row(x).sum();
  }
  return out;
}

double EvaluateGap(const TabularWorld& world, const RunTrace& trace,
                   const OracleResult& oracle) {
  const std::uint64_t hash = WorldHash(world);
  if (trace.world_hash != hash || oracle.world_hash != hash) {
    throw std::invalid_argument("trace and oracle come from different worlds");
  }
  return trace.final_objective - oracle.value;
}

}  // namespace mopo

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

// An exactly solvable preference environment: a finite set of prompts and
// responses, linear per-objective rewards r_i(x, y) = <theta_i, phi_i(x, y)>,
// and closed-form KL-regularized policies. Every expectation is an exact sum
// over the tables; randomness only enters through the feedback samplers.

#ifndef MOPO_WORLD_H_
#define MOPO_WORLD_H_

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "Eigen/Core"

namespace mopo {

// Row-stochastic table of response probabilities, one row per prompt.
struct Policy {
  Eigen::MatrixXd probs;

  int num_prompts() const { return static_cast<int>(probs.rows()); }
  int num_responses() const { return static_cast<int>(probs.cols()); }

  // Throws std::invalid_argument unless rows sum to 1 within 1e-12 and all
  // entries are nonnegative.
  void Validate() const;

  static Policy Uniform(int prompts, int responses);
};

// Rewards of one objective, prompts x responses.
using RewardTable = Eigen::MatrixXd;
using RewardTables = std::vector<RewardTable>;
// One parameter vector per objective.
using Parameters = std::vector<Eigen::VectorXd>;

struct PreferenceDatum {
  int x = 0;
  int y_w = 0;
  int y_l = 0;
  int group = 0;
  int index = 0;  // objective the preference was reported on

  friend bool operator==(const PreferenceDatum&, const PreferenceDatum&) = default;
};

struct WorldConfig {
  int prompts = 1;
  int responses = 4;
  int objectives = 2;
  int feature_dim = 4;
  double reward_bound = 2.0;
  double beta = 0.5;
  std::uint64_t seed = 0;
};

class TabularWorld {
 public:
  // features[i] holds phi_i with one row per (x, y) pair, row x * |Y| + y.
  // The per-objective baselines C_i = E_{rho, pi_base} r_i are computed from
  // theta_star, so theta_star satisfies the parameter-set constraint exactly.
  // Throws std::invalid_argument when an invariant fails.
  TabularWorld(Eigen::VectorXd rho, std::vector<Eigen::MatrixXd> features,
               Parameters theta_star, double beta, Policy pi_ref,
               Policy pi_base, double reward_bound);

  // Seeded random world. Features are unit vectors whose last coordinate is
  // the constant 0.6; true parameters are shifted through that coordinate so
  // every reward lies in [0, reward_bound].
  static TabularWorld Generate(const WorldConfig& config);

  int num_prompts() const { return static_cast<int>(rho_.size()); }
  int num_responses() const { return pi_ref_.num_responses(); }
  int num_objectives() const { return static_cast<int>(features_.size()); }
  int feature_dim() const { return static_cast<int>(features_.front().cols()); }

  const Eigen::VectorXd& rho() const { return rho_; }
  const Eigen::MatrixXd& features(int i) const { return features_[i]; }
  auto feature(int i, int x, int y) const {
    return features_[i].row(x * num_responses() + y);
  }
  const Parameters& theta_star() const { return theta_star_; }
  double beta() const { return beta_; }
  const Policy& pi_ref() const { return pi_ref_; }
  const Policy& pi_base() const { return pi_base_; }
  double baseline(int i) const { return baselines_[i]; }
  const Eigen::VectorXd& baselines() const { return baselines_; }
  double reward_bound() const { return reward_bound_; }
  const RewardTables& true_rewards() const { return true_rewards_; }

  // E_{x ~ rho, y ~ pi_base} phi_i(x, y): normal of the affine parameter set.
  const Eigen::VectorXd& base_feature_mean(int i) const {
    return base_feature_means_[i];
  }

 private:
  Eigen::VectorXd rho_;
  std::vector<Eigen::MatrixXd> features_;
  Parameters theta_star_;
  double beta_;
  Policy pi_ref_;
  Policy pi_base_;
  double reward_bound_;
  Eigen::VectorXd baselines_;
  std::vector<Eigen::VectorXd> base_feature_means_;
  RewardTables true_rewards_;
};

double Reward(const TabularWorld& world, int i, int x, int y);

RewardTable RewardTableFor(const TabularWorld& world, int i,
                           const Eigen::VectorXd& theta);
RewardTables RewardTablesFor(const TabularWorld& world, const Parameters& theta);

// Returns (winner, loser) under P(y1 beats y2) = sigmoid(r(x,y1) - r(x,y2)).
std::pair<int, int> BtSample(const RewardTable& rewards, int x, int y1, int y2,
                             std::mt19937_64& rng);

// Softmax over alpha_i * gap_i.
Eigen::VectorXd IndexProbabilities(const Eigen::VectorXd& alpha,
                                   const Eigen::VectorXd& gaps);

// |r_i(x, y_w) - r_i(x, y_l)| for every objective.
Eigen::VectorXd RewardGaps(const RewardTables& rewards, int x, int y_w, int y_l);

// Draws the objective a group reports on, using the true rewards.
int IndexSample(const TabularWorld& world, const Eigen::VectorXd& alpha, int x,
                int y_w, int y_l, std::mt19937_64& rng);

int SamplePrompt(const TabularWorld& world, std::mt19937_64& rng);
int SampleResponse(const Policy& policy, int x, std::mt19937_64& rng);
// Second response of a comparison pair, drawn from policy conditioned on
// differing from `other`.
int SampleDistinctResponse(const Policy& policy, int x, int other,
                           std::mt19937_64& rng);

// pi(y|x) proportional to pi_ref(y|x) exp(sum_i d_i r_i(x,y) / beta). The
// direction must lie on the simplex.
Policy OptimalPolicyLinear(const TabularWorld& world, const Eigen::VectorXd& d,
                           const RewardTables& rewards);

// pi(y|x) proportional to prod_i pi_i(y|x)^{d_i}. Throws DomainError on a
// zero probability.
Policy ModCombine(std::span<const Policy> policies, const Eigen::VectorXd& d);

// E_{x ~ rho} KL(pi(.|x) || pi_ref(.|x)).
double KlToReference(const TabularWorld& world, const Policy& pi);

// S_i = E[r_i] - beta KL(pi || pi_ref), computed exactly.
Eigen::VectorXd ExpectedRewardVector(const TabularWorld& world, const Policy& pi,
                                     const RewardTables& rewards);

// Value vector computed from policies alone:
//   V_i = C_i - beta E_{pi_base} log(pi_i / pi_ref) + beta E_pi log(pi_i / pi)
// where pi_i is the optimal policy of objective i alone. Agrees with
// ExpectedRewardVector whenever the parameters meet the baseline constraint.
Eigen::VectorXd RewardFreeValue(const TabularWorld& world,
                                std::span<const Policy> objective_policies,
                                const Policy& pi);

// J = E_pi[sum_i d_i r_i] - (sum_i d_i) beta KL(pi || pi_ref).
double LinearObjective(const TabularWorld& world, const RewardTables& rewards,
                       const Eigen::VectorXd& d, const Policy& pi);

// max_pi J in closed form: E_x beta log sum_y pi_ref exp(sum_i d_i r_i / beta).
double OptimalLinearValue(const TabularWorld& world, const RewardTables& rewards,
                          const Eigen::VectorXd& d);

// min_i E_{x, y1 ~ pi_star, y2 ~ pi_ref} |r_i(x,y1) - r_i(x,y2)|.
double MeasureGap(const TabularWorld& world, const Policy& pi_star);

// Largest total-variation distance over prompts.
double TotalVariation(const Policy& a, const Policy& b);

// Uniform average of the tables.
Policy MixturePolicy(std::span<const Policy> policies);

// FNV-1a digest of every table that defines the world. Used to pair traces
// with oracle results computed on the same instance.
std::uint64_t WorldHash(const TabularWorld& world);

// Offline comparisons: for every objective, `per_objective` pairs drawn from
// pi_ref and labeled with that objective's true rewards.
std::vector<std::vector<PreferenceDatum>> GenerateOfflineData(
    const TabularWorld& world, int per_objective, std::mt19937_64& rng);

}  // namespace mopo

#endif  // MOPO_WORLD_H_

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


// Preference learning: Bradley-Terry reward fits with optional optimism or
// pessimism toward the linear-aggregation value, the equivalent reward-free
// objective, and maximum-likelihood estimation of a group's importance
// weights from the objectives it chose to report on.

#ifndef MOPO_LEARNING_H_
#define MOPO_LEARNING_H_

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "Eigen/Core"
#include "mopo/world.h"

namespace mopo {

using Dataset = std::vector<PreferenceDatum>;

enum class FitMode { kMle, kPessimistic, kOptimistic };

std::string FitModeName(FitMode mode);
FitMode ParseFitMode(const std::string& name);

struct FitOptions {
  double eta = 1.0;
  // Radius B' of the parameter ball; negative means reward_bound + 1.
  double param_bound = -1.0;
  int max_iters = 20000;
  double tol = 1e-7;
  // Starting point. When empty, kMle starts at the projected zero vector and
  // the other modes start at the kMle solution.
  std::optional<Parameters> init;
  bool record_trace = false;
};

struct RewardFit {
  Parameters theta;
  FitMode mode = FitMode::kMle;
  double eta = 0.0;
  double residual = 0.0;
  int iterations = 0;
  // Objective after every accepted step, in the minimized form.
  std::vector<double> objective_trace;
};

// Comparisons of one objective grouped by (x, y_w, y_l).
class PairCounts {
 public:
  PairCounts(int prompts, int responses);
  PairCounts(const TabularWorld& world, std::span<const PreferenceDatum> data);

  void Add(const PreferenceDatum& datum, double weight = 1.0);

  struct Entry {
    int x;
    int y_w;
    int y_l;
    double count;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  double total() const { return total_; }

 private:
  int prompts_;
  int responses_;
  std::vector<int> slot_;  // cell -> entry index, or -1
  std::vector<Entry> entries_;
  double total_ = 0.0;
};

// L_i(theta) = -sum log sigmoid(r(x, y_w) - r(x, y_l)).
double NegLogLikelihood(const TabularWorld& world, int i,
                        const Eigen::VectorXd& theta,
                        std::span<const PreferenceDatum> data);
Eigen::VectorXd NegLogLikelihoodGradient(const TabularWorld& world, int i,
                                         const Eigen::VectorXd& theta,
                                         std::span<const PreferenceDatum> data);

// max_pi J(r^theta, d, pi) in closed form, and its gradient in each theta_i.
double SoftValue(const TabularWorld& world, const Parameters& theta,
                 const Eigen::VectorXd& d);
Parameters SoftValueGradient(const TabularWorld& world, const Parameters& theta,
                             const Eigen::VectorXd& d);

// Projection onto {theta : E_base <theta, phi_i> = C_i, |theta| <= bound}.
Eigen::VectorXd ProjectToParameterSet(const TabularWorld& world, int i,
                                      const Eigen::VectorXd& theta,
                                      double bound);

// Unnormalized objective minimized by FitTheta:
//   kMle:          sum_i L_i
//   kPessimistic:  SoftValue + eta sum_i L_i
//   kOptimistic:  -SoftValue + eta sum_i L_i
double FitObjective(const TabularWorld& world, const Parameters& theta,
                    std::span<const Dataset> datasets, const Eigen::VectorXd& d,
                    FitMode mode, double eta);

// Projected gradient with Barzilai-Borwein trial steps and Armijo
// backtracking. Throws SolverError when max_iters is reached.
RewardFit FitTheta(const TabularWorld& world, std::span<const Dataset> datasets,
                   const Eigen::VectorXd& d, FitMode mode,
                   const FitOptions& options);

// The parameter-free counterpart of the optimistic objective, written in
// terms of policies only:
//   beta E_base log pi^theta - eta sum_i l(D_i, theta_i),
//   l(D, theta_i) = sum log sigmoid(beta log-ratio(y_w) - beta log-ratio(y_l)),
// where pi^theta is the d-weighted optimal policy and the log-ratios use the
// per-objective optimal policies. On the parameter set it differs from the
// kOptimistic FitObjective by a constant.
double RewardFreeObjective(const TabularWorld& world, const Parameters& theta,
                           std::span<const Dataset> datasets,
                           const Eigen::VectorXd& d, double eta);

// l(D, theta_i) evaluated through the optimal policy of objective i.
double RewardFreeLogLikelihood(const TabularWorld& world, int i,
                               const Eigen::VectorXd& theta,
                               std::span<const PreferenceDatum> data);

// Index observations of one group with the gaps measured under a reward fit.
class IndexData {
 public:
  IndexData(const TabularWorld& world, const Parameters& theta,
            std::span<const PreferenceDatum> data);

  const Eigen::MatrixXd& gaps() const { return gaps_; }      // K x m
  const Eigen::MatrixXd& counts() const { return counts_; }  // K x m
  double total() const { return total_; }

 private:
  Eigen::MatrixXd gaps_;
  Eigen::MatrixXd counts_;
  double total_ = 0.0;
};

// sum log P(I | alpha, x, y_w, y_l) under the softmax index model.
double IndexLogLikelihood(const IndexData& data, const Eigen::VectorXd& alpha);
Eigen::VectorXd IndexLogLikelihoodGradient(const IndexData& data,
                                           const Eigen::VectorXd& alpha);

struct WeightEstimate {
  Eigen::VectorXd alpha_hat;
  double loglik = 0.0;
  Eigen::VectorXd running_mean;
  double residual = 0.0;
  int iterations = 0;
};

struct AlphaFitOptions {
  int max_iters = 20000;
  double tol = 1e-7;
  std::optional<Eigen::VectorXd> init;
};

// Maximizes IndexLogLikelihood over the simplex by exponentiated gradient
// ascent. running_mean is left equal to alpha_hat. Throws
// std::invalid_argument on an empty dataset and SolverError on
// non-convergence.
WeightEstimate FitAlpha(const IndexData& data,
                        const AlphaFitOptions& options = {});

// ((t - 1) previous + estimate) / t.
Eigen::VectorXd RunningMean(const Eigen::VectorXd& previous,
                            const Eigen::VectorXd& estimate, int t);

struct MopStepOptions {
  FitMode mode = FitMode::kPessimistic;
  FitOptions fit;
  // Skips the fit and uses these parameters directly.
  std::optional<Parameters> injected_theta;
  // Online steps sample one comparison per group.
  bool online = false;
};

struct MopStepResult {
  RewardFit fit;
  Policy policy;
  std::vector<PreferenceDatum> data;
};

// One call of the linear-aggregation subsolver: fit, execute the optimal
// policy for d_bar and, online, collect feedback. group_alphas holds the
// hidden importance weights that drive each group's index choice.
MopStepResult MopStep(const TabularWorld& world,
                      std::span<const Dataset> datasets,
                      const Eigen::VectorXd& d_bar,
                      const MopStepOptions& options,
                      std::span<const Eigen::VectorXd> group_alphas = {},
                      std::mt19937_64* rng = nullptr);

}  // namespace mopo

#endif  // MOPO_LEARNING_H_

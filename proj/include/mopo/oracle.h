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


// Brute-force ground truth on small worlds. The expected reward vector S(pi)
// is concave in pi, so distances to the target sets are convex in the policy
// table; the solvers still use many restarts because they work in logit
// coordinates, where that convexity is lost.

#ifndef MOPO_ORACLE_H_
#define MOPO_ORACLE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "Eigen/Core"
#include "mopo/geometry.h"
#include "mopo/world.h"

namespace mopo {

inline constexpr double kTolOracle = 2e-3;
inline constexpr double kTolOracleSpread = 1e-3;
inline constexpr int kMaxOracleCells = 64;

struct OracleBudget {
  int restarts = 32;
  int max_iters = 4000;
  int polish_iters = 2000;
  // Dense simplex grid for one-prompt worlds with at most five responses.
  bool use_grid = true;
  double grid_resolution = 0.01;
  std::uint64_t seed = 0;
};

enum class OracleMethod { kMultistartGd, kDenseGrid };

std::string OracleMethodName(OracleMethod method);

struct OracleCertificate {
  double best = 0.0;
  // Largest minus smallest of the three best restart values.
  double spread = 0.0;
  std::vector<double> restart_values;
  std::optional<double> grid_value;
};

struct OracleResult {
  Policy pi_star;
  double value = 0.0;
  OracleMethod method = OracleMethod::kMultistartGd;
  OracleCertificate certificate;
  bool budget_exhausted = false;
  bool multimodal = false;
  std::uint64_t world_hash = 0;
};

// min_pi d(S(pi), intersection of the sets).
OracleResult SolveConsensus(const TabularWorld& world,
                            std::span<const AggregationSpec> specs,
                            const OracleBudget& budget = {});

// min_pi (sum_n zeta_n d(S(pi), W_n)^(2q))^(1/2q).
OracleResult SolveMalfare(const TabularWorld& world, const MultiGroupSpec& mg,
                          const OracleBudget& budget = {});

// max_pi min_i S_i(pi); value holds c*.
OracleResult SolveMaxMin(const TabularWorld& world,
                         const OracleBudget& budget = {});

// Generic minimizer of phi(S(pi)) over policies. phi returns its value and
// writes a (sub)gradient with respect to S.
using RewardVectorObjective =
    std::function<double(const Eigen::VectorXd& s, Eigen::VectorXd* grad)>;
OracleResult MinimizeOverPolicies(const TabularWorld& world,
                                  const RewardVectorObjective& phi,
                                  const OracleBudget& budget);

}  // namespace mopo

#endif  // MOPO_ORACLE_H_

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

#include "mopo/oracle.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "mopo/driver.h"
#include "test_oracles.h"

namespace mopo {
namespace {

using ::Eigen::MatrixXd;
using ::Eigen::VectorXd;
using testing::Gen;

WorldConfig Config(std::uint64_t seed, int prompts = 1, int responses = 4, int m = 2) {
  WorldConfig c;
  c.seed = seed;
  c.prompts = prompts;
  c.responses = responses;
  c.objectives = m;
  return c;
}

AggregationSpec Spec(VectorXd alpha, double p, double c) {
  return AggregationSpec{std::move(alpha), p, c};
}

OracleBudget Quick() {
  OracleBudget b;
  b.restarts = 8;
  b.use_grid = false;
  return b;
}

TEST(ConsensusOracleTest, SatisfiedTargetHasZeroValue) {
  const TabularWorld w = TabularWorld::Generate(Config(1));
  const AggregationSpec specs[] = {Spec(VectorXd::Constant(2, 0.5), 0.5, 0.05)};
  const OracleResult r = SolveConsensus(w, specs, Quick());
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(DistanceToIntersection(specs, ExpectedRewardVector(w, w.pi_ref(), w.true_rewards())), 0.0);
  EXPECT_EQ(r.world_hash, WorldHash(w));
}

TEST(ConsensusOracleTest, LinearTargetRecoversLinearPolicy) {
  Gen gen(2);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularWorld w = TabularWorld::Generate(Config(seed, 2, 3, 2));
    const VectorXd alpha = gen.Simplex(2, 0.2);
    const AggregationSpec specs[] = {Spec(alpha, 1.0, 50.0)};
    const OracleResult r = SolveConsensus(w, specs, Quick());
    EXPECT_LE(TotalVariation(r.pi_star, OptimalPolicyLinear(w, alpha, w.true_rewards())), 1e-3);
  }
}

TEST(ConsensusOracleTest, GridAgreesWithMultistart) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TabularWorld w = TabularWorld::Generate(Config(seed));
    const double c = 0.5 + 0.05 * static_cast<double>(seed % 10);
    const AggregationSpec specs[] = {Spec(VectorXd::Constant(2, 0.5), -1.0, c)};
    OracleBudget budget;
    budget.restarts = 8;
    const OracleResult r = SolveConsensus(w, specs, budget);
    ASSERT_TRUE(r.certificate.grid_value.has_value());
    const double multistart = *std::min_element(r.certificate.restart_values.begin(),
                                                r.certificate.restart_values.end());
    EXPECT_NEAR(*r.certificate.grid_value, multistart, 1e-3) << "seed " << seed;
  }
}

TEST(ConsensusOracleTest, NoPolicyBeatsOracle) {
  Gen gen(3);
  const TabularWorld w = TabularWorld::Generate(Config(3, 2, 4, 3));
  const AggregationSpec specs[] = {Spec(gen.Simplex(3), 0.5, 1.2), Spec(gen.Simplex(3), -2.0, 1.0)};
  const OracleResult r = SolveConsensus(w, specs, Quick());
  for (int k = 0; k < 500; ++k) {
    const Policy pi = k % 2 ? gen.RandomPolicy(2, 4, 2.0)
                            : OptimalPolicyLinear(w, gen.Simplex(3, 0.0), w.true_rewards());
    const VectorXd s = ExpectedRewardVector(w, pi, w.true_rewards());
    EXPECT_GE(DistanceToIntersection(specs, s), r.value - kTolOracle);
  }
}

TEST(ConsensusOracleTest, RejectsLargeWorlds) {
  const TabularWorld w = TabularWorld::Generate(Config(4, 9, 8, 2));
  const AggregationSpec specs[] = {Spec(VectorXd::Constant(2, 0.5), 1.0, 1.0)};
  EXPECT_THROW(SolveConsensus(w, specs, Quick()), std::invalid_argument);
}

TEST(MalfareOracleTest, SingleGroupEqualsConsensus) {
  const TabularWorld w = TabularWorld::Generate(Config(5));
  const AggregationSpec spec = Spec(VectorXd::Constant(2, 0.5), 0.5, 1.4);
  const AggregationSpec specs[] = {spec};
  const double consensus = SolveConsensus(w, specs, Quick()).value;
  EXPECT_NEAR(SolveMalfare(w, MultiGroupSpec::Uniform({spec}), Quick()).value, consensus, 1e-6);
}

TEST(MalfareOracleTest, DegenerateWeightIsSingleGroup) {
  const TabularWorld w = TabularWorld::Generate(Config(6));
  VectorXd a1(2), a2(2);
  a1 << 0.8, 0.2;
  a2 << 0.2, 0.8;
  const AggregationSpec g1 = Spec(a1, 0.5, 1.3), g2 = Spec(a2, 0.5, 1.3);
  MultiGroupSpec mg = MultiGroupSpec::Uniform({g1, g2});
  mg.zeta << 1.0 - 1e-9, 1e-9;
  const AggregationSpec only[] = {g1};
  EXPECT_NEAR(SolveMalfare(w, mg, Quick()).value, SolveConsensus(w, only, Quick()).value, 1e-3);
}

TEST(MalfareOracleTest, HigherQIsNoSmaller) {
  const TabularWorld w = TabularWorld::Generate(Config(7));
  VectorXd a1(2), a2(2);
  a1 << 0.8, 0.2;
  a2 << 0.2, 0.8;
  MultiGroupSpec mg = MultiGroupSpec::Uniform({Spec(a1, 0.5, 1.3), Spec(a2, -1.0, 1.2)});
  const double q1 = SolveMalfare(w, mg, Quick()).value;
  mg.q = 2;
  EXPECT_GE(SolveMalfare(w, mg, Quick()).value, q1 - 1e-9);
}

TEST(MaxMinOracleTest, SingleObjectiveMatchesClosedForm) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularWorld w = TabularWorld::Generate(Config(seed, 2, 4, 1));
    const double closed = OptimalLinearValue(w, w.true_rewards(), VectorXd::Ones(1));
    EXPECT_NEAR(SolveMaxMin(w, Quick()).value, closed, 1e-4);
  }
}

TEST(MaxMinOracleTest, SymmetricWorldBalancesObjectives) {
  // Objective 1 is objective 0 with responses 0 <-> 1 and 2 <-> 3 swapped.
  const TabularWorld base = TabularWorld::Generate(Config(8, 1, 4, 1));
  MatrixXd swapped = base.features(0);
  swapped.row(0).swap(swapped.row(1));
  swapped.row(2).swap(swapped.row(3));
  const Policy u = Policy::Uniform(1, 4);
  const TabularWorld w(base.rho(), {base.features(0), swapped},
                       {base.theta_star()[0], base.theta_star()[0]}, base.beta(), u, u,
                       base.reward_bound());
  const OracleResult r = SolveMaxMin(w, Quick());
  const VectorXd s = ExpectedRewardVector(w, r.pi_star, w.true_rewards());
  EXPECT_NEAR(s[0], s[1], 1e-3);
  EXPECT_NEAR(std::min(s[0], s[1]), r.value, 1e-9);
}

TEST(MaxMinOracleTest, NearbyTargetKeepsMinimumValue) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const TabularWorld w = TabularWorld::Generate(Config(seed, 1, 4, 2));
    const double c_star = SolveMaxMin(w, Quick()).value;
    for (double delta : {0.05, 0.1}) {
      const AggregationSpec specs[] = {Spec(VectorXd::Constant(2, 0.5), kNegInf, c_star - delta)};
      const OracleResult r = SolveConsensus(w, specs, Quick());
      const VectorXd s = ExpectedRewardVector(w, r.pi_star, w.true_rewards());
      EXPECT_GE(s.minCoeff(), c_star - (std::sqrt(2.0) + 1.0) * delta - 2e-3);
    }
  }
}

TEST(OracleCertificateTest, RestartsAreStable) {
  const TabularWorld w = TabularWorld::Generate(Config(9, 1, 4, 2));
  const AggregationSpec specs[] = {Spec(VectorXd::Constant(2, 0.5), 0.5, 1.5)};
  const OracleResult r = SolveConsensus(w, specs, OracleBudget{});
  EXPECT_LE(r.certificate.spread, kTolOracleSpread);
  EXPECT_FALSE(r.multimodal);
  EXPECT_EQ(r.certificate.restart_values.size(), 32u);
}

TEST(SupportFunctionTest, BoundAtOraclePolicy) {
  // min_{x in W} <theta, x> <= <theta, S(pi*)> + D(pi*) for unit theta >= 0.
  Gen gen(10);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const TabularWorld w = TabularWorld::Generate(Config(seed, 1, 4, 2));
    for (double p : {1.0, kNegInf}) {
      const AggregationSpec spec = Spec(gen.Simplex(2, 0.2), p, 1.6);
      const AggregationSpec specs[] = {spec};
      const OracleResult r = SolveConsensus(w, specs, Quick());
      const VectorXd s = ExpectedRewardVector(w, r.pi_star, w.true_rewards());
      for (int k = 0; k < 50; ++k) {
        const VectorXd theta = gen.Box(2, 0.0, 1.0).normalized();
        // Support function of W in closed form.
        double support = 0.0;
        if (p == 1.0) {
          support = std::min(theta[0] / spec.alpha[0], theta[1] / spec.alpha[1]) * spec.c;
        } else {
          support = spec.c * theta.sum();
        }
        EXPECT_LE(support, theta.dot(s) + r.value + 1e-9);
      }
    }
  }
}

TEST(OracleMethodTest, Names) {
  EXPECT_EQ(OracleMethodName(OracleMethod::kMultistartGd), "multistart-gd");
  EXPECT_EQ(OracleMethodName(OracleMethod::kDenseGrid), "dense-grid");
}

}  // namespace
}  // namespace mopo

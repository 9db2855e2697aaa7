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

#include "mopo/geometry.h"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "mopo/errors.h"
#include "test_oracles.h"

namespace mopo {
namespace {

using ::Eigen::Vector2d;
using ::Eigen::VectorXd;
using testing::Gen;

VectorXd V(std::initializer_list<double> values) {
  VectorXd v(values.size());
  int i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

AggregationSpec Spec(VectorXd alpha, double p, double c) {
  return AggregationSpec{std::move(alpha), p, c};
}

TEST(AggregateTest, ArithmeticMean) {
  EXPECT_DOUBLE_EQ(Aggregate(Spec(V({0.5, 0.5}), 1.0, 0.0), V({2, 4})), 3.0);
}

TEST(AggregateTest, MinimumAtNegInf) {
  EXPECT_DOUBLE_EQ(Aggregate(Spec(V({0.5, 0.5}), kNegInf, 0.0), V({2, 4})), 2.0);
}

TEST(AggregateTest, SquareRootMean) {
  EXPECT_NEAR(Aggregate(Spec(V({0.3, 0.7}), 0.5, 0.0), V({1, 4})), 2.89, 1e-12);
}

TEST(AggregateTest, MatchesReferenceAcrossP) {
  Gen gen(11);
  for (double p : {-20.0, -2.0, -0.5, 0.0, 0.3, 0.5, 1.0, kNegInf}) {
    for (int k = 0; k < 50; ++k) {
      const VectorXd alpha = gen.Simplex(3);
      const VectorXd z = gen.Box(3, 0.01, 5.0);
      EXPECT_NEAR(Aggregate(Spec(alpha, p, 0.0), z), testing::RefPowerMean(alpha, p, z),
                  1e-10)
          << "p=" << p;
    }
  }
}

TEST(AggregateTest, ZeroCoordinateGivesZeroForNonpositiveP) {
  EXPECT_EQ(Aggregate(Spec(V({0.5, 0.5}), -1.0, 0.0), V({0, 3})), 0.0);
  EXPECT_EQ(Aggregate(Spec(V({0.5, 0.5}), 0.0, 0.0), V({0, 3})), 0.0);
}

TEST(AggregateTest, RejectsNegativeInput) {
  EXPECT_THROW(Aggregate(Spec(V({0.5, 0.5}), 0.5, 0.0), V({-1, 3})), DomainError);
}

TEST(SpecTest, ValidateRejectsBadFields) {
  EXPECT_THROW(Spec(V({0.6, 0.6}), 1.0, 1.0).Validate(), std::invalid_argument);
  EXPECT_THROW(Spec(V({0.5, 0.5}), 1.5, 1.0).Validate(), std::invalid_argument);
  EXPECT_THROW(Spec(V({0.5, 0.5}), 1.0, -1.0).Validate(), std::invalid_argument);
  EXPECT_THROW(Spec(V({1.2, -0.2}), 1.0, 1.0).Validate(), std::invalid_argument);
  EXPECT_NO_THROW(Spec(V({0.5, 0.5}), kNegInf, 1.0).Validate());
}

TEST(ContainsTest, Examples) {
  EXPECT_TRUE(Contains(Spec(V({0.5, 0.5}), 1.0, 1.0), V({1, 1})));
  EXPECT_FALSE(Contains(Spec(V({0.5, 0.5}), kNegInf, 1.0), V({0.5, 3})));
  EXPECT_FALSE(Contains(Spec(V({0.5, 0.5}), 0.5, 0.5), V({0.25, 0.25})));
  EXPECT_FALSE(Contains(Spec(V({0.5, 0.5}), 1.0, 0.0), V({-0.1, 3})));
}

TEST(ProjectTest, BoxAtNegInf) {
  const VectorXd z = Project(Spec(V({0.5, 0.5}), kNegInf, 1.0), V({0.2, 3}));
  EXPECT_NEAR(z[0], 1.0, 1e-12);
  EXPECT_NEAR(z[1], 3.0, 1e-12);
}

TEST(ProjectTest, HalfSpace) {
  const VectorXd z = Project(Spec(V({0.5, 0.5}), 1.0, 1.0), V({0, 0}));
  EXPECT_NEAR(z[0], 1.0, 1e-12);
  EXPECT_NEAR(z[1], 1.0, 1e-12);
  EXPECT_NEAR(Distance(Spec(V({0.5, 0.5}), 1.0, 1.0), V({0, 0})), std::sqrt(2.0), 1e-12);
}

TEST(ProjectTest, SquareRootMeanMatchesGrid) {
  const AggregationSpec spec = Spec(V({0.5, 0.5}), 0.5, 0.5);
  const VectorXd v = V({0.1, 0.1});
  const VectorXd z = Project(spec, v);
  const VectorXd ref = testing::RefProjectGrid2d(spec.alpha, spec.p, spec.c, v);
  EXPECT_NEAR((z - ref).norm(), 0.0, 1e-3);
  EXPECT_NEAR(z[0], 0.5, 1e-6);
  EXPECT_NEAR(z[1], 0.5, 1e-6);
}

TEST(ProjectTest, InsidePointIsFixed) {
  const AggregationSpec spec = Spec(V({0.3, 0.7}), -2.0, 1.0);
  const VectorXd v = V({3, 4});
  EXPECT_EQ(Project(spec, v), v);
  EXPECT_EQ(Distance(spec, v), 0.0);
}

TEST(ProjectTest, LinearDistanceClosedForm) {
  Gen gen(3);
  int checked = 0;
  while (checked < 100) {
    const AggregationSpec spec = Spec(gen.Simplex(3), 1.0, gen.Uniform(1.0, 3.0));
    const VectorXd v = gen.Box(3, 0.0, 1.0);
    const double gap = spec.c - spec.alpha.dot(v);
    const VectorXd hyper = v + gap * spec.alpha / spec.alpha.squaredNorm();
    if (gap <= 0 || hyper.minCoeff() <= 0) continue;
    EXPECT_NEAR(Distance(spec, v), gap / spec.alpha.norm(), 1e-12);
    ++checked;
  }
}

TEST(ProjectTest, LinearMatchesActiveSetEnumeration) {
  Gen gen(5);
  for (int k = 0; k < 200; ++k) {
    const int m = gen.Int(2, 4);
    const AggregationSpec spec = Spec(gen.Simplex(m, 0.01), 1.0, gen.Uniform(0.1, 2.0));
    const VectorXd v = gen.Box(m, -2.0, 2.0);
    const VectorXd ref = testing::RefProjectLinear({spec.alpha}, {spec.c}, v);
    EXPECT_LT((Project(spec, v) - ref).norm(), kTolProjExact);
  }
}

TEST(ProjectTest, GeneralPMatchesGrid) {
  Gen gen(8);
  for (double p : {-20.0, -2.0, -0.5, 0.0, 0.5, 0.9}) {
    for (int k = 0; k < 6; ++k) {
      const AggregationSpec spec = Spec(gen.Simplex(2), p, gen.Uniform(0.3, 2.0));
      const VectorXd v = gen.Box(2, -1.0, 2.5);
      const VectorXd ref = testing::RefProjectGrid2d(spec.alpha, p, spec.c, v);
      EXPECT_LT((Project(spec, v) - ref).norm(), 1e-3) << "p=" << p;
    }
  }
}

TEST(ProjectTest, ZeroWeightCoordinateIsOnlyClamped) {
  const AggregationSpec spec = Spec(V({1.0, 0.0}), kNegInf, 1.0);
  const VectorXd z = Project(spec, V({0.2, -3.0}));
  EXPECT_NEAR(z[0], 1.0, 1e-12);
  EXPECT_NEAR(z[1], 0.0, 1e-12);
}

class ProjectionPropertyTest : public ::testing::TestWithParam<double> {};

TEST_P(ProjectionPropertyTest, IdempotentObtuseNonexpansive) {
  const double p = GetParam();
  const double tol = (p == 1.0 || std::isinf(p)) ? kTolProjExact : kTolProjGeneral;
  Gen gen(100 + static_cast<int>(std::isinf(p) ? 99 : 10 * p));
  for (int k = 0; k < 40; ++k) {
    const int m = gen.Int(2, 4);
    const AggregationSpec spec = Spec(gen.Simplex(m), p, gen.Uniform(0.2, 2.0));
    const VectorXd v = gen.Box(m, -1.0, 3.0);
    const VectorXd z = Project(spec, v);
    EXPECT_GE(z.minCoeff(), -tol);
    EXPECT_GE(Aggregate(spec, z.cwiseMax(0.0)), spec.c - tol);
    EXPECT_LE((Project(spec, z) - z).norm(), 2 * tol);
    for (int s = 0; s < 200; ++s) {
      VectorXd w = gen.Box(m, 0.0, 6.0);
      if (!Contains(spec, w)) w = Project(spec, w);
      EXPECT_LE((v - z).dot(w - z), tol * (1.0 + (w - z).norm()));
    }
    const VectorXd v2 = v + gen.Box(m, -0.5, 0.5);
    EXPECT_LE((Project(spec, v2) - z).norm(), (v2 - v).norm() + 2 * tol);
  }
}

INSTANTIATE_TEST_SUITE_P(AllP, ProjectionPropertyTest,
                         ::testing::Values(kNegInf, -20.0, -2.0, -0.5, 0.0, 0.5, 1.0));

TEST(IntersectionTest, SingleSpecEqualsProject) {
  const AggregationSpec spec = Spec(V({0.3, 0.7}), 0.5, 1.0);
  const AggregationSpec specs[] = {spec};
  const VectorXd v = V({0.1, 0.2});
  EXPECT_LT((ProjectIntersection(specs, v) - Project(spec, v)).norm(), 1e-7);
}

TEST(IntersectionTest, InsideAllSetsIsFixed) {
  const AggregationSpec specs[] = {Spec(V({0.3, 0.7}), 0.5, 1.0), Spec(V({0.8, 0.2}), -1.0, 1.0)};
  const VectorXd v = V({3, 3});
  EXPECT_EQ(ProjectIntersection(specs, v), v);
}

TEST(IntersectionTest, TwoHalfSpacesMatchQp) {
  Gen gen(21);
  for (int k = 0; k < 50; ++k) {
    const AggregationSpec a = Spec(gen.Simplex(2), 1.0, gen.Uniform(0.5, 2.0));
    const AggregationSpec b = Spec(gen.Simplex(2), 1.0, gen.Uniform(0.5, 2.0));
    const AggregationSpec specs[] = {a, b};
    const VectorXd v = gen.Box(2, -1.0, 1.0);
    const VectorXd ref = testing::RefProjectLinear({a.alpha, b.alpha}, {a.c, b.c}, v);
    EXPECT_LT((ProjectIntersection(specs, v) - ref).norm(), 1e-6);
  }
}

TEST(DirectionTest, FarBelowHalfSpacePointsAlongAlpha) {
  const AggregationSpec specs[] = {Spec(V({0.3, 0.7}), 1.0, 50.0)};
  const Direction d = DirectionConsensus(specs, V({0.5, 0.5}));
  ASSERT_EQ(d.kind, NormKind::kEuclideanUnit);
  EXPECT_NEAR((d.d - V({0.3, 0.7}).normalized()).norm(), 0.0, 1e-12);
  const Direction l1 = d.L1Normalized();
  EXPECT_EQ(l1.kind, NormKind::kL1Normalized);
  EXPECT_NEAR(l1.d[0], 0.3, 1e-12);
  EXPECT_NEAR(l1.d[1], 0.7, 1e-12);
}

TEST(DirectionTest, InsideGivesZero) {
  const AggregationSpec specs[] = {Spec(V({0.3, 0.7}), 1.0, 1.0)};
  EXPECT_TRUE(DirectionConsensus(specs, V({2, 2})).is_zero());
  EXPECT_TRUE(DirectionConsensus(specs, V({2, 2})).L1Normalized().is_zero());
}

TEST(DirectionTest, NonnegativeEverywhere) {
  Gen gen(31);
  for (int k = 0; k < 200; ++k) {
    const std::vector<AggregationSpec> specs = {
        Spec(gen.Simplex(3), gen.Uniform(-3.0, 1.0), gen.Uniform(0.2, 2.0)),
        Spec(gen.Simplex(3), 1.0, gen.Uniform(0.2, 2.0))};
    const VectorXd v = gen.Box(3, -1.0, 3.0);
    const Direction d = DirectionConsensus(specs, v);
    EXPECT_GE(d.d.minCoeff(), -1e-12);
    MultiGroupSpec mg = MultiGroupSpec::Uniform(specs);
    mg.q = gen.Int(1, 3);
    EXPECT_GE(DirectionMalfare(mg, v).raw.minCoeff(), -1e-12);
  }
}

TEST(MalfareTest, SingleGroupCollapsesToConsensus) {
  const AggregationSpec spec = Spec(V({0.4, 0.6}), 0.5, 1.5);
  const AggregationSpec specs[] = {spec};
  for (int q : {1, 2, 3}) {
    MultiGroupSpec mg = MultiGroupSpec::Uniform({spec});
    mg.q = q;
    const VectorXd v = V({0.2, 0.4});
    const MalfareDirection md = DirectionMalfare(mg, v);
    EXPECT_LT((md.raw - DirectionConsensus(specs, v).d).norm(), 1e-9);
    EXPECT_NEAR(Malfare(mg, v), Distance(spec, v), 1e-12);
  }
}

TEST(MalfareTest, SymmetricSetsGiveSymmetricDirection) {
  MultiGroupSpec mg = MultiGroupSpec::Uniform(
      {Spec(V({0.3, 0.7}), 0.5, 1.0), Spec(V({0.7, 0.3}), 0.5, 1.0)});
  const VectorXd d = DirectionMalfare(mg, V({0.2, 0.2})).raw;
  EXPECT_NEAR(d[0], d[1], 1e-9);
}

TEST(MalfareTest, HandExpandedTwoHalfSpaces) {
  // Two half-spaces whose projections of v stay positive: unit directions
  // are alpha_n / |alpha_n| and distances (c_n - alpha_n . v) / |alpha_n|.
  const Vector2d a1(0.2, 0.8), a2(0.6, 0.4), v(0.1, 0.2);
  const double c1 = 1.0, c2 = 2.0;
  const double d1 = (c1 - a1.dot(v)) / a1.norm();
  const double d2 = (c2 - a2.dot(v)) / a2.norm();
  const double denom = std::sqrt(0.5 * d1 * d1 + 0.5 * d2 * d2);
  const Vector2d expected = (a1.normalized() * 0.5 * d1 + a2.normalized() * 0.5 * d2) / denom;
  MultiGroupSpec mg = MultiGroupSpec::Uniform({Spec(a1, 1.0, c1), Spec(a2, 1.0, c2)});
  mg.zeta = V({0.5, 0.5});
  const MalfareDirection md = DirectionMalfare(mg, v);
  EXPECT_NEAR(md.raw[0], expected[0], 1e-9);
  EXPECT_NEAR(md.raw[1], expected[1], 1e-9);
  EXPECT_NEAR(md.normalized.d.sum(), 1.0, 1e-12);
  EXPECT_NEAR(Malfare(mg, v), denom, 1e-12);
}

TEST(MalfareTest, AllInsideGivesZero) {
  MultiGroupSpec mg = MultiGroupSpec::Uniform({Spec(V({0.5, 0.5}), 1.0, 1.0)});
  const MalfareDirection md = DirectionMalfare(mg, V({4, 4}));
  EXPECT_TRUE(md.normalized.is_zero());
  EXPECT_EQ(md.raw.norm(), 0.0);
}

TEST(RestrictedDistanceTest, EqualSetsGiveZero) {
  const AggregationSpec a = Spec(V({0.4, 0.6}), 0.5, 1.0);
  EXPECT_EQ(RestrictedSetDistance(a, a, 3.0, 500, 1).value, 0.0);
}

TEST(RestrictedDistanceTest, NestedBoxesReachCorner) {
  const AggregationSpec a = Spec(V({0.5, 0.5}), kNegInf, 1.0);
  const AggregationSpec b = Spec(V({0.5, 0.5}), kNegInf, 1.5);
  const double value = RestrictedSetDistance(a, b, 3.0, 10000, 2).value;
  EXPECT_GE(value, 0.9 * 0.5 * std::sqrt(2.0));
  EXPECT_LE(value, 0.5 * std::sqrt(2.0) + 1e-9);
  EXPECT_EQ(value, RestrictedSetDistance(a, b, 3.0, 10000, 2).value);
}

TEST(RestrictedDistanceTest, WeightPerturbationBoundHolds) {
  Gen gen(41);
  for (double p : {-2.0, -0.5, 0.5, 1.0}) {
    for (int k = 0; k < 5; ++k) {
      const AggregationSpec a = Spec(gen.Simplex(2, 0.2), p, gen.Uniform(0.5, 1.5));
      VectorXd alpha = a.alpha + gen.Box(2, -0.05, 0.05);
      alpha = alpha.cwiseMax(0.01);
      alpha /= alpha.sum();
      const AggregationSpec b = Spec(alpha, p, a.c);
      const AggregationSpec pair[] = {a, b};
      const double b1 = ProjectionBound(pair, 2.0);
      const double est = RestrictedSetDistance(a, b, b1, 1000, k).value;
      EXPECT_LE(est, WeightPerturbationBound(a, b, b1)) << "p=" << p;
    }
  }
}

TEST(BoundsTest, ProjectionOfBoundedPointStaysInB1) {
  Gen gen(51);
  for (int k = 0; k < 300; ++k) {
    const int m = gen.Int(2, 3);
    const double bound = gen.Uniform(0.5, 3.0);
    std::vector<AggregationSpec> specs;
    for (int n = 0; n < gen.Int(1, 3); ++n) {
      specs.push_back(Spec(gen.Simplex(m), gen.Uniform(-3.0, 1.0), gen.Uniform(0.1, 2.0)));
    }
    const VectorXd v = gen.Box(m, -bound, bound);
    const VectorXd z = ProjectIntersection(specs, v);
    EXPECT_LE(z.lpNorm<Eigen::Infinity>(), ProjectionBound(specs, bound));
  }
}

TEST(BoundsTest, DistanceOfProjections) {
  Gen gen(61);
  for (double p : {-2.0, -0.5, 0.5, 1.0}) {
    for (int k = 0; k < 25; ++k) {
      const AggregationSpec a = Spec(gen.Simplex(2, 0.1), p, gen.Uniform(0.5, 1.5));
      VectorXd alpha = (a.alpha + gen.Box(2, -0.03, 0.03)).cwiseMax(0.01);
      alpha /= alpha.sum();
      const AggregationSpec b = Spec(alpha, p, a.c);
      const AggregationSpec pair[] = {a, b};
      const double bound = 2.0;
      const double b1 = ProjectionBound(pair, bound);
      const double d_b = std::max(RestrictedSetDistance(a, b, b1, 300, k).value,
                                  WeightPerturbationBound(a, b, b1));
      const VectorXd x = gen.Box(2, 0.0, bound);
      const double lhs = (Project(a, x) - Project(b, x)).squaredNorm();
      EXPECT_LE(lhs, 4 * Distance(a, x) * d_b + 2 * d_b * d_b + 1e-12);
    }
  }
}

TEST(BoundsTest, LinearReductionGivesAlpha) {
  Gen gen(71);
  for (int k = 0; k < 100; ++k) {
    const int m = gen.Int(2, 4);
    const VectorXd alpha = gen.Simplex(m);
    const AggregationSpec specs[] = {Spec(alpha, 1.0, 100.0)};
    const VectorXd v = gen.Box(m, 0.0, 2.0);
    const Direction d = DirectionConsensus(specs, v).L1Normalized();
    EXPECT_LT((d.d - alpha).lpNorm<Eigen::Infinity>(), 1e-9);
  }
}

TEST(SimplexTest, ProjectionLandsOnSimplex) {
  Gen gen(81);
  for (int k = 0; k < 100; ++k) {
    const VectorXd y = gen.Box(4, -2.0, 2.0);
    const VectorXd z = ProjectToSimplex(y);
    EXPECT_NEAR(z.sum(), 1.0, 1e-12);
    EXPECT_GE(z.minCoeff(), 0.0);
    for (int s = 0; s < 20; ++s) {
      const VectorXd w = gen.Simplex(4, 0.0);
      EXPECT_LE((y - z).dot(w - z), 1e-12);
    }
  }
}

}  // namespace
}  // namespace mopo

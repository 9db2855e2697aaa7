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

// Target sets for multi-objective alignment.
//
// A group's preferences over m objectives are summarized by a weighted power
// mean of the per-objective rewards,
//
//   agg(z) = (sum_i alpha_i z_i^p)^(1/p),   p <= 1,
//
// with the usual limits at p = 0 (weighted geometric mean) and p = -inf
// (minimum over the objectives with positive weight). The group is satisfied
// by reward vectors in W = {z >= 0 : agg(z) >= c}. W is convex and upward
// closed, so the Euclidean projection onto W never decreases a coordinate and
// the direction from a point toward W is componentwise nonnegative.

#ifndef MOPO_GEOMETRY_H_
#define MOPO_GEOMETRY_H_

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "Eigen/Core"

namespace mopo {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Solver tolerances shared by the geometry routines.
inline constexpr double kTolProjExact = 1e-9;    // p in {1, -inf}
inline constexpr double kTolProjGeneral = 1e-7;  // every other p
inline constexpr double kTolInside = 1e-8;
inline constexpr double kTolContain = 1e-10;
inline constexpr int kMaxProjectionIters = 10000;
inline constexpr int kMaxDykstraSweeps = 5000;

// One group's aggregation rule: weights, fairness exponent and threshold.
struct AggregationSpec {
  Eigen::VectorXd alpha;
  double p = 1.0;
  double c = 0.0;

  int dim() const { return static_cast<int>(alpha.size()); }
  bool is_min() const { return std::isinf(p) && p < 0; }

  // Throws std::invalid_argument when a field violates its invariant.
  void Validate() const;
};

struct MultiGroupSpec {
  std::vector<AggregationSpec> groups;
  Eigen::VectorXd zeta;
  int q = 1;

  int num_groups() const { return static_cast<int>(groups.size()); }
  int dim() const { return groups.empty() ? 0 : groups.front().dim(); }
  void Validate() const;

  // Equal group weights, q = 1.
  static MultiGroupSpec Uniform(std::vector<AggregationSpec> groups);
};

enum class NormKind { kEuclideanUnit, kL1Normalized, kZero };

struct Direction {
  Eigen::VectorXd d;
  NormKind kind = NormKind::kZero;

  bool is_zero() const { return kind == NormKind::kZero; }
  // Rescales to unit l1 norm. A zero direction stays zero.
  Direction L1Normalized() const;

  static Direction Zero(int dim);
};

// Euclidean projection onto the probability simplex.
Eigen::VectorXd ProjectToSimplex(const Eigen::VectorXd& y);

// Weighted power mean. Throws DomainError if z has a negative component.
double Aggregate(const AggregationSpec& spec, const Eigen::VectorXd& z);

// True iff z >= 0 and Aggregate(spec, z) >= c - kTolContain.
bool Contains(const AggregationSpec& spec, const Eigen::VectorXd& z);

// Euclidean projection onto W. Throws SolverError if the inner solver does
// not reach kTolProjGeneral.
Eigen::VectorXd Project(const AggregationSpec& spec, const Eigen::VectorXd& v);

double Distance(const AggregationSpec& spec, const Eigen::VectorXd& v);

// Euclidean projection onto the intersection of the sets, by Dykstra's
// alternating projections.
Eigen::VectorXd ProjectIntersection(std::span<const AggregationSpec> specs,
                                    const Eigen::VectorXd& v);

double DistanceToIntersection(std::span<const AggregationSpec> specs,
                              const Eigen::VectorXd& v);

// Unit vector from v toward its projection on the intersection; zero when v
// is within kTolInside of the intersection.
Direction DirectionConsensus(std::span<const AggregationSpec> specs,
                             const Eigen::VectorXd& v);

struct MalfareDirection {
  // sum_n u_n zeta_n dist_n^(2q-1) / (sum_n zeta_n dist_n^(2q))^((2q-1)/2q),
  // where u_n is the unit direction toward group n. This is the negative
  // gradient of the malfare at v.
  Eigen::VectorXd raw;
  Direction normalized;  // l1-normalized copy of raw, or zero
};

MalfareDirection DirectionMalfare(const MultiGroupSpec& mg,
                                  const Eigen::VectorXd& v);

// (sum_n zeta_n dist_n^(2q))^(1/2q).
double Malfare(const MultiGroupSpec& mg, const Eigen::VectorXd& v);

struct BoundedSetDistance {
  double value = 0.0;
  double b1 = 0.0;
};

// Sampling estimate of the Hausdorff-type distance between two target sets
// restricted to the box [0, b1]^m. The estimate only evaluates points that
// lie in the sets, so it never exceeds the true restricted distance.
BoundedSetDistance RestrictedSetDistance(const AggregationSpec& a,
                                         const AggregationSpec& b, double b1,
                                         int n_samples, std::uint64_t seed);

// 2 sqrt(m) (B + max_n c_n): bounds the projection of any point with
// |x|_inf <= B onto the intersection of the sets.
double ProjectionBound(std::span<const AggregationSpec> specs,
                       double reward_bound);

// m^(3/2) b1 |alpha - alpha'|_inf / |p|: bound on the restricted distance
// between two sets that differ only in their weights.
double WeightPerturbationBound(const AggregationSpec& a,
                               const AggregationSpec& b, double b1);

}  // namespace mopo

#endif  // MOPO_GEOMETRY_H_

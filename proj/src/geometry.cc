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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mopo/errors.h"

namespace mopo {
namespace {

using ::Eigen::VectorXd;

// Exponents below this are rejected: z^p underflows for ordinary rewards.
constexpr double kMinExponent = -20.0;
constexpr double kEpsilon = std::numeric_limits<double>::epsilon();

double ProjectionTolerance(const AggregationSpec& spec) {
  return (spec.is_min() || spec.p == 1.0) ? kTolProjExact : kTolProjGeneral;
}

void CheckDim(const AggregationSpec& spec, const VectorXd& z) {
  if (z.size() != spec.alpha.size()) {
    throw std::invalid_argument("vector has dimension " +
                                std::to_string(z.size()) + ", expected " +
                                std::to_string(spec.alpha.size()));
  }
}

// Root of z - scale * |p| z^(p-1) = v on (0, inf). The left side is strictly
// increasing in z, runs from -inf to +inf, so the root is unique.
double StationaryCoordinate(double v, double scale, double p) {
  if (scale <= 0.0) return std::max(v, 0.0);
  if (p == 0.0) return 0.5 * (v + std::sqrt(v * v + 4.0 * scale));
  const double k = scale * std::abs(p);
  auto h = [&](double z) { return z - k * std::pow(z, p - 1.0) - v; };
  // h(max(1, v + k)) >= 0 because z^(p-1) <= 1 there.
  double hi = std::max(1.0, v + k);
  double lo = hi;
  for (int i = 0; i < 4000 && h(lo) >= 0.0; ++i) {
    hi = lo;
    lo *= 0.5;
  }
  double z = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double pull = k * std::pow(z, p - 1.0);
    const double hz = z - pull - v;
    // Stop once the residual is at rounding level of its terms.
    if (std::abs(hz) <= 4.0 * kEpsilon * (z + pull + std::abs(v))) return z;
    if (hz > 0.0) {
      hi = z;
    } else {
      lo = z;
    }
    if (hi - lo <= 4.0 * kEpsilon * hi) return z;
    const double slope = 1.0 + (1.0 - p) * pull / z;
    double next = z - hz / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - z) <= 4.0 * kEpsilon * z) return next;
    z = next;
  }
  return z;
}

VectorXd ProjectMin(const AggregationSpec& spec, const VectorXd& v) {
  VectorXd z(v.size());
  for (int i = 0; i < v.size(); ++i) {
    z[i] = spec.alpha[i] > 0.0 ? std::max(v[i], spec.c) : std::max(v[i], 0.0);
  }
  return z;
}

// Projection onto {z >= 0 : alpha.z >= c} by walking the breakpoints of the
// piecewise-linear map lambda -> alpha.max(v + lambda alpha, 0).
VectorXd ProjectHalfSpace(const AggregationSpec& spec, const VectorXd& v) {
  const int m = static_cast<int>(v.size());
  std::vector<int> order;
  std::vector<double> breakpoint(m, 0.0);
  for (int i = 0; i < m; ++i) {
    if (spec.alpha[i] > 0.0) {
      breakpoint[i] = -v[i] / spec.alpha[i];
      order.push_back(i);
    }
  }
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return breakpoint[a] < breakpoint[b]; });
  double offset = 0.0;  // sum alpha_i v_i over active coordinates
  double slope = 0.0;   // sum alpha_i^2 over active coordinates
  size_t k = 0;
  for (; k < order.size() && breakpoint[order[k]] <= 0.0; ++k) {
    offset += spec.alpha[order[k]] * v[order[k]];
    slope += spec.alpha[order[k]] * spec.alpha[order[k]];
  }
  double lambda = 0.0;
  double segment_start = 0.0;
  while (true) {
    const double next = k < order.size()
                            ? breakpoint[order[k]]
                            : std::numeric_limits<double>::infinity();
    if (slope > 0.0) {
      const double candidate = (spec.c - offset) / slope;
      if (candidate <= next) {
        lambda = std::max(candidate, segment_start);
        break;
      }
    }
    if (k == order.size()) {
      throw SolverError("half-space projection found no multiplier",
                        spec.c - offset);
    }
    offset += spec.alpha[order[k]] * v[order[k]];
    slope += spec.alpha[order[k]] * spec.alpha[order[k]];
    segment_start = next;
    ++k;
  }
  VectorXd z(m);
  for (int i = 0; i < m; ++i) {
    z[i] = std::max(v[i] + lambda * spec.alpha[i], 0.0);
  }
  return z;
}

// Minimizes |c u / agg(u) - v|^2 over the simplex of active coordinates by
// projected gradient. Every point c u / agg(u) lies on the boundary of W
// because agg is positively homogeneous.
VectorXd ProjectRadial(const AggregationSpec& spec, const VectorXd& v);

VectorXd ProjectGeneral(const AggregationSpec& spec, const VectorXd& v) {
  const int m = static_cast<int>(v.size());
  auto point = [&](double lambda) {
    VectorXd z(m);
    for (int i = 0; i < m; ++i) {
      z[i] = StationaryCoordinate(v[i], lambda * spec.alpha[i], spec.p);
    }
    return z;
  };
  auto gap = [&](double lambda) { return Aggregate(spec, point(lambda)) - spec.c; };

  double lo = 0.0;
  double hi = 1.0;
  double g_lo = -spec.c;
  double g_hi = 0.0;
  bool bracketed = false;
  for (int i = 0; i < 1000; ++i) {
    g_hi = gap(hi);
    if (std::isnan(g_hi)) break;
    if (g_hi >= 0.0) {
      bracketed = true;
      break;
    }
    lo = hi;
    g_lo = g_hi;
    hi *= 2.0;
  }
  if (!bracketed) return ProjectRadial(spec, v);
  // Illinois false position on the increasing map lambda -> gap(lambda),
  // keeping gap(hi) >= 0.
  const double gap_tol = 1e-3 * kTolProjGeneral * std::max(1.0, spec.c);
  int side = 0;
  double hi_residual = g_hi;
  for (int iter = 0; iter < kMaxProjectionIters && hi_residual > gap_tol; ++iter) {
    double mid = hi - g_hi * (hi - lo) / (g_hi - g_lo);
    if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double g = gap(mid);
    if (g >= 0.0) {
      hi = mid;
      g_hi = g;
      hi_residual = g;
      if (side == 1) g_lo *= 0.5;
      side = 1;
    } else {
      lo = mid;
      g_lo = g;
      if (side == -1) g_hi *= 0.5;
      side = -1;
    }
  }
  VectorXd z = point(hi);
  const double residual = std::abs(Aggregate(spec, z) - spec.c);
  if (residual > kTolProjGeneral * std::max(1.0, spec.c)) {
    return ProjectRadial(spec, v);
  }
  return z;
}

VectorXd SimplexProjection(const VectorXd& y) {
  VectorXd sorted = y;
  std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (int i = 0; i < sorted.size(); ++i) {
    cumsum += sorted[i];
    const double t = (cumsum - 1.0) / (i + 1);
    if (sorted[i] - t > 0.0) tau = t;
  }
  return (y.array() - tau).cwiseMax(0.0).matrix();
}

VectorXd ProjectRadial(const AggregationSpec& spec, const VectorXd& v) {
  const int m = static_cast<int>(v.size());
  std::vector<int> active;
  for (int i = 0; i < m; ++i) {
    if (spec.alpha[i] > 0.0) active.push_back(i);
  }
  const int k = static_cast<int>(active.size());
  constexpr double kFloor = 1e-12;
  auto embed = [&](const VectorXd& u) {
    VectorXd full = v.cwiseMax(0.0);
    VectorXd x = VectorXd::Zero(m);
    for (int j = 0; j < k; ++j) x[active[j]] = u[j];
    const double scale = spec.c / Aggregate(spec, x);
    for (int j = 0; j < k; ++j) full[active[j]] = scale * u[j];
    return full;
  };
  auto objective = [&](const VectorXd& u) { return (embed(u) - v).squaredNorm(); };
  auto gradient = [&](const VectorXd& u) {
    VectorXd g(k);
    const double h = 1e-7;
    for (int j = 0; j < k; ++j) {
      VectorXd up = u;
      VectorXd dn = u;
      up[j] += h;
      dn[j] = std::max(dn[j] - h, kFloor);
      g[j] = (objective(up) - objective(dn)) / (up[j] - dn[j]);
    }
    return g;
  };
  VectorXd u = VectorXd::Constant(k, 1.0 / k);
  double f = objective(u);
  double step = 1.0;
  double residual = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < kMaxProjectionIters; ++iter) {
    const VectorXd g = gradient(u);
    residual = (u - SimplexProjection(u - g).cwiseMax(kFloor)).norm();
    if (residual <= kTolProjGeneral * 1e-2) break;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      VectorXd trial = SimplexProjection(u - step * g).cwiseMax(kFloor);
      trial /= trial.sum();
      const double ft = objective(trial);
      if (ft <= f + 1e-4 * g.dot(trial - u)) {
        u = trial;
        f = ft;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    step *= 2.0;
  }
  if (residual > kTolProjGeneral) {
    throw SolverError("radial projection did not converge", residual);
  }
  return embed(u);
}

}  // namespace

VectorXd ProjectToSimplex(const VectorXd& y) { return SimplexProjection(y); }

void AggregationSpec::Validate() const {
  if (alpha.size() == 0) throw std::invalid_argument("alpha is empty");
  for (int i = 0; i < alpha.size(); ++i) {
    if (!std::isfinite(alpha[i]) || alpha[i] < 0.0) {
      throw std::invalid_argument("alpha must be finite and nonnegative");
    }
  }
  if (std::abs(alpha.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("alpha must sum to 1");
  }
  if (std::isnan(p) || p > 1.0 || (!is_min() && p < kMinExponent)) {
    throw std::invalid_argument("p must be -inf or lie in [-20, 1]");
  }
  if (!std::isfinite(c) || c < 0.0) {
    throw std::invalid_argument("c must be finite and nonnegative");
  }
}

void MultiGroupSpec::Validate() const {
  if (groups.empty()) throw std::invalid_argument("no groups");
  for (const AggregationSpec& g : groups) {
    g.Validate();
    if (g.dim() != groups.front().dim()) {
      throw std::invalid_argument("groups disagree on the number of objectives");
    }
  }
  if (zeta.size() != num_groups()) {
    throw std::invalid_argument("zeta must have one entry per group");
  }
  for (int n = 0; n < zeta.size(); ++n) {
    if (!(zeta[n] > 0.0)) throw std::invalid_argument("zeta must be positive");
  }
  if (std::abs(zeta.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("zeta must sum to 1");
  }
  if (q < 1) throw std::invalid_argument("q must be a positive integer");
}

MultiGroupSpec MultiGroupSpec::Uniform(std::vector<AggregationSpec> groups) {
  MultiGroupSpec mg;
  const int n = static_cast<int>(groups.size());
  mg.groups = std::move(groups);
  mg.zeta = Eigen::VectorXd::Constant(n, 1.0 / std::max(n, 1));
  mg.q = 1;
  return mg;
}

Direction Direction::L1Normalized() const {
  if (kind == NormKind::kZero) return *this;
  const double l1 = d.lpNorm<1>();
  if (!(l1 > 0.0)) return Zero(static_cast<int>(d.size()));
  return Direction{d / l1, NormKind::kL1Normalized};
}

Direction Direction::Zero(int dim) {
  return Direction{Eigen::VectorXd::Zero(dim), NormKind::kZero};
}

double Aggregate(const AggregationSpec& spec, const VectorXd& z) {
  CheckDim(spec, z);
  for (int i = 0; i < z.size(); ++i) {
    if (!(z[i] >= 0.0)) {
      throw DomainError("aggregation requires nonnegative rewards");
    }
  }
  const VectorXd& a = spec.alpha;
  if (spec.is_min()) {
    double lowest = std::numeric_limits<double>::infinity();
    for (int i = 0; i < z.size(); ++i) {
      if (a[i] > 0.0) lowest = std::min(lowest, z[i]);
    }
    return lowest;
  }
  if (spec.p == 1.0) return a.dot(z);
  if (spec.p <= 0.0) {
    for (int i = 0; i < z.size(); ++i) {
      if (a[i] > 0.0 && z[i] == 0.0) return 0.0;
    }
  }
  if (spec.p == 0.0) {
    double log_mean = 0.0;
    for (int i = 0; i < z.size(); ++i) {
      if (a[i] > 0.0) log_mean += a[i] * std::log(z[i]);
    }
    return std::exp(log_mean);
  }
  double total = 0.0;
  for (int i = 0; i < z.size(); ++i) {
    if (a[i] > 0.0) total += a[i] * std::pow(z[i], spec.p);
  }
  return std::pow(total, 1.0 / spec.p);
}

bool Contains(const AggregationSpec& spec, const VectorXd& z) {
  CheckDim(spec, z);
  if ((z.array() < 0.0).any() || z.hasNaN()) return false;
  return Aggregate(spec, z) >= spec.c - kTolContain;
}

VectorXd Project(const AggregationSpec& spec, const VectorXd& v) {
  CheckDim(spec, v);
  const VectorXd clamped = v.cwiseMax(0.0);
  if (spec.c <= 0.0 || Aggregate(spec, clamped) >= spec.c) return clamped;
  if (spec.is_min()) return ProjectMin(spec, v);
  if (spec.p == 1.0) return ProjectHalfSpace(spec, v);
  return ProjectGeneral(spec, v);
}

double Distance(const AggregationSpec& spec, const VectorXd& v) {
  return (Project(spec, v) - v).norm();
}

VectorXd ProjectIntersection(std::span<const AggregationSpec> specs,
                             const VectorXd& v) {
  if (specs.empty()) throw std::invalid_argument("no sets to intersect");
  if (specs.size() == 1) return Project(specs.front(), v);
  bool inside = true;
  double tol = kTolProjExact;
  for (const AggregationSpec& s : specs) {
    CheckDim(s, v);
    inside = inside && !(v.array() < 0.0).any() && Aggregate(s, v.cwiseMax(0.0)) >= s.c;
    tol = std::max(tol, ProjectionTolerance(s));
  }
  if (inside) return v;

  const int n = static_cast<int>(specs.size());
  std::vector<VectorXd> increments(n, VectorXd::Zero(v.size()));
  VectorXd x = v;
  double residual = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < kMaxDykstraSweeps; ++sweep) {
    const VectorXd start = x;
    double increment_change = 0.0;
    for (int k = 0; k < n; ++k) {
      const VectorXd y = x + increments[k];
      x = Project(specs[k], y);
      const VectorXd updated = y - x;
      increment_change += (updated - increments[k]).squaredNorm();
      increments[k] = updated;
    }
    const double step = std::sqrt((x - start).squaredNorm() + increment_change);
    if (step <= 1e-3 * tol) {
      residual = 0.0;
      for (const AggregationSpec& s : specs) {
        residual = std::max(residual, Distance(s, x));
      }
      if (residual <= tol) return x;
    }
  }
  throw SolverError("Dykstra projection did not converge", residual);
}

double DistanceToIntersection(std::span<const AggregationSpec> specs,
                              const VectorXd& v) {
  return (ProjectIntersection(specs, v) - v).norm();
}

Direction DirectionConsensus(std::span<const AggregationSpec> specs,
                             const VectorXd& v) {
  const VectorXd diff = ProjectIntersection(specs, v) - v;
  const double dist = diff.norm();
  if (dist < kTolInside) return Direction::Zero(static_cast<int>(v.size()));
  VectorXd d = (diff / dist).cwiseMax(0.0);
  return Direction{d / d.norm(), NormKind::kEuclideanUnit};
}

MalfareDirection DirectionMalfare(const MultiGroupSpec& mg, const VectorXd& v) {
  const int m = static_cast<int>(v.size());
  const int n = mg.num_groups();
  std::vector<VectorXd> toward(n);
  VectorXd dist(n);
  for (int k = 0; k < n; ++k) {
    toward[k] = Project(mg.groups[k], v) - v;
    dist[k] = toward[k].norm();
  }
  MalfareDirection out{VectorXd::Zero(m), Direction::Zero(m)};
  const double largest = dist.maxCoeff();
  if (largest < kTolInside) return out;
  // Both numerator and denominator are homogeneous of degree 2q-1 in the
  // distances, so scaling by the largest one avoids overflow for big q.
  const int two_q = 2 * mg.q;
  double denom = 0.0;
  for (int k = 0; k < n; ++k) {
    denom += mg.zeta[k] * std::pow(dist[k] / largest, two_q);
  }
  denom = std::pow(denom, (two_q - 1.0) / two_q);
  for (int k = 0; k < n; ++k) {
    if (dist[k] < kTolInside) continue;
    const VectorXd unit = (toward[k] / dist[k]).cwiseMax(0.0);
    out.raw += unit * mg.zeta[k] * std::pow(dist[k] / largest, two_q - 1) / denom;
  }
  const double l1 = out.raw.lpNorm<1>();
  if (l1 > 0.0) out.normalized = Direction{out.raw / l1, NormKind::kL1Normalized};
  return out;
}

double Malfare(const MultiGroupSpec& mg, const VectorXd& v) {
  const int n = mg.num_groups();
  VectorXd dist(n);
  for (int k = 0; k < n; ++k) dist[k] = Distance(mg.groups[k], v);
  const double largest = dist.maxCoeff();
  if (largest <= 0.0) return 0.0;
  const int two_q = 2 * mg.q;
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    total += mg.zeta[k] * std::pow(dist[k] / largest, two_q);
  }
  return largest * std::pow(total, 1.0 / two_q);
}

BoundedSetDistance RestrictedSetDistance(const AggregationSpec& a,
                                         const AggregationSpec& b, double b1,
                                         int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(0.0, b1);
  const int m = a.dim();
  BoundedSetDistance out{0.0, b1};
  VectorXd x(m);
  const AggregationSpec* sides[2][2] = {{&a, &b}, {&b, &a}};
  for (int s = 0; s < n_samples; ++s) {
    for (int i = 0; i < m; ++i) x[i] = coord(rng);
    for (const auto& side : sides) {
      // Points outside the source set are pulled onto it; the result is kept
      // only if it stays inside the box.
      const VectorXd inside = Contains(*side[0], x) ? x : Project(*side[0], x);
      if (inside.maxCoeff() > b1 || !Contains(*side[0], inside)) continue;
      out.value = std::max(out.value, Distance(*side[1], inside));
    }
  }
  return out;
}

double ProjectionBound(std::span<const AggregationSpec> specs,
                       double reward_bound) {
  double max_c = 0.0;
  for (const AggregationSpec& s : specs) max_c = std::max(max_c, s.c);
  const int m = specs.empty() ? 0 : specs.front().dim();
  return 2.0 * std::sqrt(static_cast<double>(m)) * (reward_bound + max_c);
}

double WeightPerturbationBound(const AggregationSpec& a,
                               const AggregationSpec& b, double b1) {
  if (a.is_min() || a.p == 0.0) return std::numeric_limits<double>::infinity();
  const double m = a.dim();
  const double diff = (a.alpha - b.alpha).lpNorm<Eigen::Infinity>();
  return std::pow(m, 1.5) * b1 * diff / std::abs(a.p);
}

}  // namespace mopo

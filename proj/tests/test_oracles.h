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

// Independent reference computations for the tests. Everything here is
// written with plain loops and brute force so it shares no code path with
// the library.

#ifndef MOPO_TESTS_TEST_ORACLES_H_
#define MOPO_TESTS_TEST_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "Eigen/Dense"
#include "mopo/world.h"

namespace mopo::testing {

// Seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double Uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  int Int(int lo, int hi) {  // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(rng_);
  }
  double Normal() { return std::normal_distribution<double>()(rng_); }

  Eigen::VectorXd Box(int m, double lo, double hi) {
    Eigen::VectorXd v(m);
    for (int i = 0; i < m; ++i) v[i] = Uniform(lo, hi);
    return v;
  }
  // Interior simplex point with every weight at least `floor`.
  Eigen::VectorXd Simplex(int m, double floor = 0.05) {
    Eigen::VectorXd w(m);
    for (int i = 0; i < m; ++i) w[i] = -std::log(Uniform(1e-12, 1.0));
    w /= w.sum();
    return (w * (1.0 - m * floor)).array() + floor;
  }
  Policy RandomPolicy(int prompts, int responses, double scale = 1.0) {
    Policy pi{Eigen::MatrixXd(prompts, responses)};
    for (int x = 0; x < prompts; ++x) {
      double z = 0.0;
      for (int y = 0; y < responses; ++y) z += pi.probs(x, y) = std::exp(scale * Normal());
      pi.probs.row(x) /= z;
    }
    return pi;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Weighted power mean with the limits at p = 0 and p = -inf.
inline double RefPowerMean(const Eigen::VectorXd& alpha, double p,
                           const Eigen::VectorXd& z) {
  if (std::isinf(p)) {
    double lo = std::numeric_limits<double>::infinity();
    for (int i = 0; i < z.size(); ++i) {
      if (alpha[i] > 0) lo = std::min(lo, z[i]);
    }
    return lo;
  }
  if (p == 0.0) {
    double log_sum = 0.0;
    for (int i = 0; i < z.size(); ++i) {
      if (alpha[i] == 0) continue;
      if (z[i] == 0) return 0.0;
      log_sum += alpha[i] * std::log(z[i]);
    }
    return std::exp(log_sum);
  }
  double s = 0.0;
  for (int i = 0; i < z.size(); ++i) {
    if (alpha[i] == 0) continue;
    if (p < 0 && z[i] == 0) return 0.0;
    s += alpha[i] * std::pow(z[i], p);
  }
  return std::pow(s, 1.0 / p);
}

// Projection onto {z : a_k . z >= b_k for all k} by enumerating active sets.
// Exact for small polyhedra; the best feasible face projection is optimal.
inline Eigen::VectorXd RefProjectPolyhedron(const Eigen::MatrixXd& a,
                                            const Eigen::VectorXd& b,
                                            const Eigen::VectorXd& v) {
  const int k = static_cast<int>(a.rows());
  const int m = static_cast<int>(v.size());
  Eigen::VectorXd best = v;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << k); ++mask) {
    std::vector<int> active;
    for (int j = 0; j < k; ++j) {
      if (mask & (1 << j)) active.push_back(j);
    }
    if (static_cast<int>(active.size()) > m) continue;
    Eigen::VectorXd z = v;
    if (!active.empty()) {
      Eigen::MatrixXd as(active.size(), m);
      Eigen::VectorXd bs(active.size());
      for (size_t r = 0; r < active.size(); ++r) {
        as.row(r) = a.row(active[r]);
        bs[r] = b[active[r]];
      }
      const Eigen::MatrixXd gram = as * as.transpose();
      Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
      if (lu.rank() < static_cast<int>(active.size())) continue;
      z = v + as.transpose() * lu.solve(bs - as * v);
    }
    bool feasible = true;
    for (int j = 0; j < k; ++j) feasible &= a.row(j).dot(z) >= b[j] - 1e-12;
    if (!feasible) continue;
    const double dist = (z - v).norm();
    if (dist < best_dist) {
      best_dist = dist;
      best = z;
    }
  }
  return best;
}

// Projection onto {z >= 0 : alpha_n . z >= c_n for every n}.
inline Eigen::VectorXd RefProjectLinear(const std::vector<Eigen::VectorXd>& alphas,
                                        const std::vector<double>& cs,
                                        const Eigen::VectorXd& v) {
  const int m = static_cast<int>(v.size());
  const int n = static_cast<int>(alphas.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + m, m);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + m);
  for (int j = 0; j < n; ++j) {
    a.row(j) = alphas[j].transpose();
    b[j] = cs[j];
  }
  for (int i = 0; i < m; ++i) a(n + i, i) = 1.0;
  return RefProjectPolyhedron(a, b, v);
}

// Projection onto the two-dimensional set {z >= 0 : agg(z) >= c} by a dense
// sweep over the boundary curve, parametrized by angle, followed by golden
// section refinement. The axis rays that belong to the boundary when p > 0
// are handled in closed form.
inline Eigen::VectorXd RefProjectGrid2d(const Eigen::VectorXd& alpha, double p,
                                        double c, const Eigen::VectorXd& v) {
  Eigen::VectorXd vp = v;
  if (vp.minCoeff() >= 0 && RefPowerMean(alpha, p, vp) >= c) return v;
  auto curve = [&](double phi) {
    Eigen::VectorXd u(2);
    u << std::cos(phi), std::sin(phi);
    const double g = RefPowerMean(alpha, p, u);
    if (!(g > 0)) return Eigen::VectorXd(Eigen::VectorXd::Constant(2, 1e300));
    return Eigen::VectorXd(c * u / g);
  };
  auto dist = [&](double phi) { return (curve(phi) - v).norm(); };
  const int n = 200000;
  const double half_pi = std::acos(0.0);
  int best_k = 1;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 1; k < n; ++k) {
    const double d = dist(half_pi * k / n);
    if (d < best) {
      best = d;
      best_k = k;
    }
  }
  double lo = half_pi * (best_k - 1) / n;
  double hi = half_pi * (best_k + 1) / n;
  const double r = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 200; ++it) {
    const double m1 = hi - r * (hi - lo);
    const double m2 = lo + r * (hi - lo);
    if (dist(m1) < dist(m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  Eigen::VectorXd z = curve(0.5 * (lo + hi));
  double z_dist = (z - v).norm();
  if (p > 0) {
    for (int i = 0; i < 2; ++i) {
      Eigen::VectorXd ray = Eigen::VectorXd::Zero(2);
      ray[i] = std::max(v[i], c * std::pow(alpha[i], -1.0 / p));
      if ((ray - v).norm() < z_dist) {
        z = ray;
        z_dist = (ray - v).norm();
      }
    }
  }
  return z;
}

// pi(y|x) ~ pi_ref(y|x) exp(sum_i d_i r_i(x,y) / beta), by explicit loops.
inline Eigen::MatrixXd RefLinearPolicy(const TabularWorld& w, const Eigen::VectorXd& d,
                                       const RewardTables& r) {
  Eigen::MatrixXd out(w.num_prompts(), w.num_responses());
  for (int x = 0; x < w.num_prompts(); ++x) {
    double z = 0.0;
    for (int y = 0; y < w.num_responses(); ++y) {
      double s = 0.0;
      for (int i = 0; i < w.num_objectives(); ++i) s += d[i] * r[i](x, y);
      out(x, y) = w.pi_ref().probs(x, y) * std::exp(s / w.beta());
      z += out(x, y);
    }
    for (int y = 0; y < w.num_responses(); ++y) out(x, y) /= z;
  }
  return out;
}

inline double RefKl(const TabularWorld& w, const Eigen::MatrixXd& pi) {
  double kl = 0.0;
  for (int x = 0; x < w.num_prompts(); ++x) {
    for (int y = 0; y < w.num_responses(); ++y) {
      if (pi(x, y) > 0) {
        kl += w.rho()[x] * pi(x, y) * std::log(pi(x, y) / w.pi_ref().probs(x, y));
      }
    }
  }
  return kl;
}

// S_i(pi) = E[r_i] - beta KL.
inline Eigen::VectorXd RefRewardVector(const TabularWorld& w, const Eigen::MatrixXd& pi,
                                       const RewardTables& r) {
  const double kl = RefKl(w, pi);
  Eigen::VectorXd s(w.num_objectives());
  for (int i = 0; i < w.num_objectives(); ++i) {
    double e = 0.0;
    for (int x = 0; x < w.num_prompts(); ++x) {
      for (int y = 0; y < w.num_responses(); ++y) e += w.rho()[x] * pi(x, y) * r[i](x, y);
    }
    s[i] = e - w.beta() * kl;
  }
  return s;
}

// Rewards <theta_i, phi_i(x, y)> summed coordinate by coordinate.
inline RewardTables RefRewards(const TabularWorld& w, const Parameters& theta) {
  RewardTables out;
  for (int i = 0; i < w.num_objectives(); ++i) {
    Eigen::MatrixXd t(w.num_prompts(), w.num_responses());
    for (int x = 0; x < w.num_prompts(); ++x) {
      for (int y = 0; y < w.num_responses(); ++y) {
        double s = 0.0;
        for (int k = 0; k < w.feature_dim(); ++k) {
          s += theta[i][k] * w.features(i)(x * w.num_responses() + y, k);
        }
        t(x, y) = s;
      }
    }
    out.push_back(t);
  }
  return out;
}

inline double RefTotalVariation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double worst = 0.0;
  for (int x = 0; x < a.rows(); ++x) {
    worst = std::max(worst, 0.5 * (a.row(x) - b.row(x)).cwiseAbs().sum());
  }
  return worst;
}

inline double Sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace mopo::testing

#endif  // MOPO_TESTS_TEST_ORACLES_H_

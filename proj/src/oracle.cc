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
#include <limits>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mopo/errors.h"

namespace mopo {
namespace {

using ::Eigen::MatrixXd;
using ::Eigen::VectorXd;

constexpr double kArmijo = 1e-4;
constexpr double kGradTol = 1e-11;

class PolicyObjective {
 public:
  PolicyObjective(const TabularWorld& world, const RewardVectorObjective& phi)
      : world_(world),
        phi_(phi),
        log_ref_(world.pi_ref().probs.array().log().matrix()) {}

  static Policy Softmax(const MatrixXd& logits) {
    Policy out{MatrixXd(logits.rows(), logits.cols())};
    for (int x = 0; x < logits.rows(); ++x) {
      const double top = logits.row(x).maxCoeff();
      out.probs.row(x) = (logits.row(x).array() - top).exp();
      out.probs.row(x) /= out.probs.row(x).sum();
    }
    return out;
  }

  double operator()(const MatrixXd& logits, MatrixXd* grad) const {
    const int nx = world_.num_prompts();
    const int ny = world_.num_responses();
    const int m = world_.num_objectives();
    const double beta = world_.beta();
    MatrixXd log_pi(nx, ny);
    for (int x = 0; x < nx; ++x) {
      const double top = logits.row(x).maxCoeff();
      const double lse =
          top + std::log((logits.row(x).array() - top).exp().sum());
      log_pi.row(x) = logits.row(x).array() - lse;
    }
    const MatrixXd pi = log_pi.array().exp();
    const MatrixXd log_ratio = log_pi - log_ref_;
    double kl = 0.0;
    for (int x = 0; x < nx; ++x) {
      kl += world_.rho()[x] * pi.row(x).dot(log_ratio.row(x));
    }
    VectorXd s(m);
    for (int i = 0; i < m; ++i) {
      double total = 0.0;
      for (int x = 0; x < nx; ++x) {
        total += world_.rho()[x] * pi.row(x).dot(world_.true_rewards()[i].row(x));
      }
      s[i] = total - beta * kl;
    }
    VectorXd g = VectorXd::Zero(m);
    const double value = phi_(s, grad != nullptr ? &g : nullptr);
    if (grad != nullptr) {
      MatrixXd a = -(g.sum() * beta) * log_ratio;
      for (int i = 0; i < m; ++i) a += g[i] * world_.true_rewards()[i];
      grad->resize(nx, ny);
      for (int x = 0; x < nx; ++x) {
        const double mean = pi.row(x).dot(a.row(x));
        grad->row(x) = world_.rho()[x] *
                       pi.row(x).array() * (a.row(x).array() - mean);
      }
    }
    return value;
  }

  // Objective at a policy table that may contain zeros.
  double AtPolicy(const Policy& pi) const {
    return phi_(ExpectedRewardVector(world_, pi, world_.true_rewards()), nullptr);
  }

 private:
  const TabularWorld& world_;
  const RewardVectorObjective& phi_;
  MatrixXd log_ref_;
};

struct LocalResult {
  MatrixXd logits;
  double value;
  bool converged;
};

LocalResult GradientDescent(const PolicyObjective& f, MatrixXd z, int max_iters) {
  MatrixXd grad;
  double value = f(z, &grad);
  double step = 1.0;
  int stalled = 0;
  for (int iter = 0; iter < max_iters; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() <= kGradTol || stalled >= 50) {
      return {z, value, true};
    }
    MatrixXd trial;
    MatrixXd trial_grad;
    double trial_value = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      trial = z - step * grad;
      trial_value = f(trial, &trial_grad);
      if (trial_value <= value - kArmijo * step * grad.squaredNorm()) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return {z, value, true};
    const MatrixXd s = trial - z;
    const MatrixXd y = trial_grad - grad;
    const double sy = (s.array() * y.array()).sum();
    step = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * step;
    step = std::clamp(step, 1e-8, 1e8);
    stalled = value - trial_value <= 1e-15 * (1.0 + std::abs(value)) ? stalled + 1 : 0;
    z = std::move(trial);
    grad = std::move(trial_grad);
    value = trial_value;
  }
  return {z, value, grad.lpNorm<Eigen::Infinity>() <= kGradTol};
}

// Derivative-free polish over the flattened logits.
LocalResult NelderMead(const PolicyObjective& f, const MatrixXd& start, int max_iters) {
  const int rows = static_cast<int>(start.rows());
  const int cols = static_cast<int>(start.cols());
  const int n = rows * cols;
  auto eval = [&](const VectorXd& v) {
    return f(Eigen::Map<const MatrixXd>(v.data(), rows, cols), nullptr);
  };
  std::vector<VectorXd> simplex(n + 1, start.reshaped());
  for (int k = 0; k < n; ++k) simplex[k + 1][k] += 0.05;
  std::vector<double> values(n + 1);
  for (int k = 0; k <= n; ++k) values[k] = eval(simplex[k]);
  std::vector<int> order(n + 1);
  for (int iter = 0; iter < max_iters; ++iter) {
    for (int k = 0; k <= n; ++k) order[k] = k;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return values[a] < values[b]; });
    const int best = order.front();
    const int worst = order.back();
    const int second = order[n - 1];
    if (values[worst] - values[best] <= 1e-14 * (1.0 + std::abs(values[best]))) break;
    VectorXd centroid = VectorXd::Zero(n);
    for (int k = 0; k <= n; ++k) {
      if (k != worst) centroid += simplex[k];
    }
    centroid /= n;
    const VectorXd reflect = centroid + (centroid - simplex[worst]);
    const double fr = eval(reflect);
    if (fr < values[best]) {
      const VectorXd expand = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = eval(expand);
      if (fe < fr) {
        simplex[worst] = expand;
        values[worst] = fe;
      } else {
        simplex[worst] = reflect;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = reflect;
      values[worst] = fr;
      continue;
    }
    const VectorXd contract = centroid + 0.5 * (simplex[worst] - centroid);
    const double fc = eval(contract);
    if (fc < values[worst]) {
      simplex[worst] = contract;
      values[worst] = fc;
      continue;
    }
    for (int k = 0; k <= n; ++k) {
      if (k == best) continue;
      simplex[k] = simplex[best] + 0.5 * (simplex[k] - simplex[best]);
      values[k] = eval(simplex[k]);
    }
  }
  const int best = static_cast<int>(
      std::min_element(values.begin(), values.end()) - values.begin());
  return {Eigen::Map<const MatrixXd>(simplex[best].data(), rows, cols),
          values[best], true};
}

// Best point of the simplex grid with the given number of steps, for a
// single prompt.
std::pair<Policy, double> GridSearch(const PolicyObjective& f, int responses,
                                     int steps) {
  Policy pi{MatrixXd::Zero(1, responses)};
  Policy best = pi;
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<int> counts(responses, 0);
  // Enumerates compositions of `steps` into `responses` parts.
  std::function<void(int, int)> recurse = [&](int k, int left) {
    if (k == responses - 1) {
      counts[k] = left;
      for (int j = 0; j < responses; ++j) {
        pi.probs(0, j) = static_cast<double>(counts[j]) / steps;
      }
      const double value = f.AtPolicy(pi);
      if (value < best_value) {
        best_value = value;
        best = pi;
      }
      return;
    }
    for (int c = 0; c <= left; ++c) {
      counts[k] = c;
      recurse(k + 1, left - c);
    }
  };
  recurse(0, steps);
  return {best, best_value};
}

void CheckSize(const TabularWorld& world) {
  if (world.num_prompts() * world.num_responses() > kMaxOracleCells) {
    throw std::invalid_argument("oracle supports at most 64 prompt-response cells");
  }
}

}  // namespace

std::string OracleMethodName(OracleMethod method) {
  return method == OracleMethod::kDenseGrid ? "dense-grid" : "multistart-gd";
}

OracleResult MinimizeOverPolicies(const TabularWorld& world,
                                  const RewardVectorObjective& phi,
                                  const OracleBudget& budget) {
  CheckSize(world);
  if (budget.restarts < 1) throw std::invalid_argument("need at least one restart");
  const PolicyObjective f(world, phi);
  const MatrixXd log_ref = world.pi_ref().probs.array().log().matrix();
  std::mt19937_64 rng(budget.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<LocalResult> locals;
  for (int r = 0; r < budget.restarts; ++r) {
    MatrixXd z = log_ref;
    // Restart 0 starts at the reference policy; the others are dispersed
    // with increasing spread.
    if (r > 0) {
      const double spread = 0.5 + 3.0 * r / budget.restarts;
      for (int k = 0; k < z.size(); ++k) z.data()[k] += spread * gauss(rng);
    }
    locals.push_back(GradientDescent(f, z, budget.max_iters));
  }
  std::vector<double> values;
  for (const auto& l : locals) values.push_back(l.value);
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const size_t best_index = static_cast<size_t>(
      std::min_element(values.begin(), values.end()) - values.begin());
  LocalResult best = locals[best_index];

  OracleResult result;
  result.budget_exhausted = !best.converged;
  if (budget.polish_iters > 0) {
    LocalResult polished = NelderMead(f, best.logits, budget.polish_iters);
    if (polished.value < best.value) {
      polished = GradientDescent(f, polished.logits, budget.max_iters);
      if (polished.value < best.value) best = polished;
    }
  }
  result.method = OracleMethod::kMultistartGd;
  if (budget.use_grid && world.num_prompts() == 1 && world.num_responses() <= 5) {
    const int steps = static_cast<int>(std::lround(1.0 / budget.grid_resolution));
    auto [grid_pi, grid_value] = GridSearch(f, world.num_responses(), steps);
    result.certificate.grid_value = grid_value;
    const MatrixXd z = grid_pi.probs.cwiseMax(1e-9).array().log().matrix();
    LocalResult refined = GradientDescent(f, z, budget.max_iters);
    if (refined.value < best.value - 1e-12) {
      best = refined;
      result.method = OracleMethod::kDenseGrid;
    }
  }
  result.pi_star = PolicyObjective::Softmax(best.logits);
  result.value = best.value;
  result.certificate.best = best.value;
  result.certificate.restart_values = values;
  const size_t top = std::min<size_t>(3, sorted.size());
  result.certificate.spread = sorted[top - 1] - sorted[0];
  result.multimodal = result.certificate.spread > kTolOracleSpread;
  result.world_hash = WorldHash(world);
  return result;
}

OracleResult SolveConsensus(const TabularWorld& world,
                            std::span<const AggregationSpec> specs,
                            const OracleBudget& budget) {
  if (specs.empty()) throw std::invalid_argument("no target sets");
  for (const auto& spec : specs) {
    spec.Validate();
    if (spec.dim() != world.num_objectives()) {
      throw std::invalid_argument("target set dimension differs from the world");
    }
  }
  const std::vector<AggregationSpec> owned(specs.begin(), specs.end());
  const RewardVectorObjective phi = [&owned](const VectorXd& s, VectorXd* grad) {
    const VectorXd proj = ProjectIntersection(owned, s);
    const double dist = (s - proj).norm();
    if (grad != nullptr) {
      *grad = dist > 0.0 ? VectorXd((s - proj) / dist) : VectorXd::Zero(s.size());
    }
    return dist;
  };
  return MinimizeOverPolicies(world, phi, budget);
}

OracleResult SolveMalfare(const TabularWorld& world, const MultiGroupSpec& mg,
                          const OracleBudget& budget) {
  mg.Validate();
  if (mg.dim() != world.num_objectives()) {
    throw std::invalid_argument("target set dimension differs from the world");
  }
  const RewardVectorObjective phi = [&mg](const VectorXd& s, VectorXd* grad) {
    if (grad != nullptr) *grad = -DirectionMalfare(mg, s).raw;
    return Malfare(mg, s);
  };
  return MinimizeOverPolicies(world, phi, budget);
}

OracleResult SolveMaxMin(const TabularWorld& world, const OracleBudget& budget) {
  CheckSize(world);
  // Annealed soft minimum: tau log sum exp(-S_i / tau) approaches -min_i S_i
  // from above with error at most tau log m.
  const double taus[] = {0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5};
  OracleResult result;
  std::vector<double> restart_values;
  const MatrixXd log_ref = world.pi_ref().probs.array().log().matrix();
  std::mt19937_64 rng(budget.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<MatrixXd> starts;
  for (int r = 0; r < budget.restarts; ++r) {
    MatrixXd z = log_ref;
    if (r > 0) {
      const double spread = 0.5 + 3.0 * r / budget.restarts;
      for (int k = 0; k < z.size(); ++k) z.data()[k] += spread * gauss(rng);
    }
    starts.push_back(z);
  }
  const RewardVectorObjective exact_min = [](const VectorXd& s, VectorXd*) {
    return -s.minCoeff();
  };
  const PolicyObjective exact(world, exact_min);
  double best_value = std::numeric_limits<double>::infinity();
  MatrixXd best_logits;
  bool exhausted = false;
  for (size_t r = 0; r < starts.size(); ++r) {
    MatrixXd z = starts[r];
    bool converged = true;
    for (const double tau : taus) {
      const RewardVectorObjective soft = [tau](const VectorXd& s, VectorXd* grad) {
        const VectorXd scaled = -s / tau;
        const double top = scaled.maxCoeff();
        const VectorXd w = (scaled.array() - top).exp();
        const double total = w.sum();
        if (grad != nullptr) *grad = -w / total;
        return tau * (top + std::log(total));
      };
      const PolicyObjective f(world, soft);
      const LocalResult local = GradientDescent(f, z, budget.max_iters);
      z = local.logits;
      converged = local.converged;
    }
    const double value = exact(z, nullptr);
    restart_values.push_back(-value);
    if (value < best_value) {
      best_value = value;
      best_logits = z;
      exhausted = !converged;
    }
  }
  std::vector<double> sorted = restart_values;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const size_t top = std::min<size_t>(3, sorted.size());
  result.pi_star = PolicyObjective::Softmax(best_logits);
  result.value = -best_value;
  result.method = OracleMethod::kMultistartGd;
  result.certificate.best = result.value;
  result.certificate.restart_values = restart_values;
  result.certificate.spread = sorted[0] - sorted[top - 1];
  if (budget.use_grid && world.num_prompts() == 1 && world.num_responses() <= 5) {
    const int steps = static_cast<int>(std::lround(1.0 / budget.grid_resolution));
    const auto grid = GridSearch(exact, world.num_responses(), steps);
    result.certificate.grid_value = -grid.second;
  }
  result.multimodal = result.certificate.spread > kTolOracleSpread;
  result.budget_exhausted = exhausted;
  result.world_hash = WorldHash(world);
  return result;
}

}  // namespace mopo

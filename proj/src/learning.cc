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

#include "mopo/learning.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "mopo/errors.h"
#include "mopo/geometry.h"

namespace mopo {
namespace {

using ::Eigen::MatrixXd;
using ::Eigen::VectorXd;

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;

double Softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double Sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                  : std::exp(z) / (1.0 + std::exp(z));
}

double LogSumExp(const Eigen::Ref<const VectorXd>& v) {
  const double top = v.maxCoeff();
  return top + std::log((v.array() - top).exp().sum());
}

double ResolveBound(const TabularWorld& world, const FitOptions& options) {
  return options.param_bound < 0.0 ? world.reward_bound() + 1.0
                                   : options.param_bound;
}

void CheckDirection(const TabularWorld& world, const VectorXd& d) {
  if (d.size() != world.num_objectives()) {
    throw std::invalid_argument("direction has wrong size");
  }
  if ((d.array() < 0.0).any() || std::abs(d.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("direction must lie on the simplex");
  }
}

// Comparison data of one objective as feature differences with counts.
struct DiffData {
  MatrixXd diff;  // K x dim, phi(x, y_w) - phi(x, y_l)
  VectorXd count;
};

DiffData BuildDiff(const TabularWorld& world, int i,
                   std::span<const PreferenceDatum> data) {
  const PairCounts counts(world, data);
  DiffData out{MatrixXd(counts.entries().size(), world.feature_dim()),
               VectorXd(counts.entries().size())};
  for (size_t k = 0; k < counts.entries().size(); ++k) {
    const auto& e = counts.entries()[k];
    out.diff.row(k) = world.feature(i, e.x, e.y_w) - world.feature(i, e.x, e.y_l);
    out.count[k] = e.count;
  }
  return out;
}

double DiffNll(const DiffData& data, const VectorXd& theta) {
  const VectorXd margin = data.diff * theta;
  double total = 0.0;
  for (int k = 0; k < margin.size(); ++k) {
    total += data.count[k] * Softplus(-margin[k]);
  }
  return total;
}

VectorXd DiffNllGradient(const DiffData& data, const VectorXd& theta) {
  const VectorXd margin = data.diff * theta;
  VectorXd weights(margin.size());
  for (int k = 0; k < margin.size(); ++k) {
    weights[k] = -data.count[k] * Sigmoid(-margin[k]);
  }
  return data.diff.transpose() * weights;
}

// Soft value and its gradient evaluated together from flat reward vectors.
double SoftValueAndGradient(const TabularWorld& world, const Parameters& theta,
                            const VectorXd& d, Parameters* gradient) {
  const int m = world.num_objectives();
  const int nx = world.num_prompts();
  const int ny = world.num_responses();
  const double beta = world.beta();
  VectorXd logits = world.pi_ref().probs.transpose().reshaped().array().log();
  for (int i = 0; i < m; ++i) {
    if (d[i] != 0.0) logits += (d[i] / beta) * (world.features(i) * theta[i]);
  }
  double value = 0.0;
  VectorXd weights(nx * ny);
  for (int x = 0; x < nx; ++x) {
    const auto seg = logits.segment(x * ny, ny);
    const double lse = LogSumExp(seg);
    value += world.rho()[x] * beta * lse;
    weights.segment(x * ny, ny) =
        world.rho()[x] * (seg.array() - lse).exp().matrix();
  }
  if (gradient != nullptr) {
    gradient->resize(m);
    for (int i = 0; i < m; ++i) {
      (*gradient)[i] = d[i] * (world.features(i).transpose() * weights);
    }
  }
  return value;
}

// The fit objective divided by a data-dependent scale so that gradients are
// of order one regardless of the dataset size.
class FitProblem {
 public:
  FitProblem(const TabularWorld& world, std::span<const Dataset> datasets,
             const VectorXd& d, FitMode mode, double eta, double bound)
      : world_(world), d_(d), mode_(mode), eta_(eta), bound_(bound) {
    if (static_cast<int>(datasets.size()) != world.num_objectives()) {
      throw std::invalid_argument("need one dataset per objective");
    }
    double total = 0.0;
    for (int i = 0; i < world.num_objectives(); ++i) {
      diffs_.push_back(BuildDiff(world, i, datasets[i]));
      total += diffs_.back().count.sum();
    }
    const double loss_weight = mode == FitMode::kMle ? 1.0 : eta;
    scale_ = std::max(1.0, loss_weight * total);
    loss_weight_ = loss_weight / scale_;
    value_weight_ = (mode == FitMode::kPessimistic   ? 1.0
                     : mode == FitMode::kOptimistic ? -1.0
                                                    : 0.0) /
                    scale_;
  }

  double Evaluate(const Parameters& theta, Parameters* gradient) const {
    const int m = world_.num_objectives();
    double value = 0.0;
    Parameters value_grad;
    if (value_weight_ != 0.0) {
      value = value_weight_ *
              SoftValueAndGradient(world_, theta, d_,
                                   gradient != nullptr ? &value_grad : nullptr);
    }
    if (gradient != nullptr) gradient->resize(m);
    for (int i = 0; i < m; ++i) {
      value += loss_weight_ * DiffNll(diffs_[i], theta[i]);
      if (gradient != nullptr) {
        (*gradient)[i] = loss_weight_ * DiffNllGradient(diffs_[i], theta[i]);
        if (value_weight_ != 0.0) (*gradient)[i] += value_weight_ * value_grad[i];
      }
    }
    return value;
  }

  Parameters Project(const Parameters& theta) const {
    Parameters out(theta.size());
    for (size_t i = 0; i < theta.size(); ++i) {
      out[i] = ProjectToParameterSet(world_, static_cast<int>(i), theta[i], bound_);
    }
    return out;
  }

  double scale() const { return scale_; }

 private:
  const TabularWorld& world_;
  VectorXd d_;
  FitMode mode_;
  double eta_;
  double bound_;
  std::vector<DiffData> diffs_;
  double scale_ = 1.0;
  double loss_weight_ = 1.0;
  double value_weight_ = 0.0;
};

double Dot(const Parameters& a, const Parameters& b) {
  double total = 0.0;
  for (size_t i = 0; i < a.size(); ++i) total += a[i].dot(b[i]);
  return total;
}

Parameters Axpy(const Parameters& x, double s, const Parameters& g) {
  Parameters out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] + s * g[i];
  return out;
}

Parameters Subtract(const Parameters& a, const Parameters& b) {
  return Axpy(a, -1.0, b);
}

RewardFit RunProjectedGradient(const FitProblem& problem, Parameters theta,
                               FitMode mode, const FitOptions& options) {
  RewardFit fit;
  fit.mode = mode;
  fit.eta = options.eta;
  theta = problem.Project(theta);
  Parameters grad;
  double value = problem.Evaluate(theta, &grad);
  if (options.record_trace) fit.objective_trace.push_back(value * problem.scale());
  double step = 1.0;
  double residual = std::sqrt(
      Dot(Subtract(theta, problem.Project(Axpy(theta, -1.0, grad))),
          Subtract(theta, problem.Project(Axpy(theta, -1.0, grad)))));
  int iter = 0;
  for (; iter < options.max_iters && residual > options.tol; ++iter) {
    Parameters trial;
    Parameters trial_grad;
    double trial_value = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < kMaxBacktracks; ++ls) {
      trial = problem.Project(Axpy(theta, -step, grad));
      trial_value = problem.Evaluate(trial, &trial_grad);
      const double decrease = Dot(grad, Subtract(trial, theta));
      if (trial_value <= value + kArmijo * decrease +
                             1e-15 * (1.0 + std::abs(value))) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Parameters s = Subtract(trial, theta);
    const Parameters y = Subtract(trial_grad, grad);
    const double sy = Dot(s, y);
    step = sy > 0.0 ? Dot(s, s) / sy : 2.0 * step;
    step = std::clamp(step, 1e-10, 1e10);
    theta = std::move(trial);
    grad = std::move(trial_grad);
    value = trial_value;
    if (options.record_trace) {
      fit.objective_trace.push_back(value * problem.scale());
    }
    const Parameters gap = Subtract(theta, problem.Project(Axpy(theta, -1.0, grad)));
    residual = std::sqrt(Dot(gap, gap));
  }
  fit.theta = std::move(theta);
  fit.residual = residual;
  fit.iterations = iter;
  if (residual > options.tol) {
    throw SolverError("reward fit did not converge", residual);
  }
  return fit;
}

Policy SingleObjectivePolicy(const TabularWorld& world, int i,
                             const VectorXd& theta) {
  const RewardTable r = RewardTableFor(world, i, theta);
  MatrixXd logits = world.pi_ref().probs.array().log().matrix() + r / world.beta();
  Policy out{MatrixXd(logits.rows(), logits.cols())};
  for (int x = 0; x < logits.rows(); ++x) {
    const double lse = LogSumExp(logits.row(x).transpose());
    out.probs.row(x) = (logits.row(x).array() - lse).exp();
  }
  return out;
}

}  // namespace

std::string FitModeName(FitMode mode) {
  switch (mode) {
    case FitMode::kMle:
      return "mle";
    case FitMode::kPessimistic:
      return "pessimistic";
    case FitMode::kOptimistic:
      return "optimistic";
  }
  return "unknown";
}

FitMode ParseFitMode(const std::string& name) {
  if (name == "mle") return FitMode::kMle;
  if (name == "pessimistic") return FitMode::kPessimistic;
  if (name == "optimistic") return FitMode::kOptimistic;
  throw std::invalid_argument("unknown fit mode: " + name);
}

PairCounts::PairCounts(int prompts, int responses)
    : prompts_(prompts),
      responses_(responses),
      slot_(static_cast<size_t>(prompts) * responses * responses, -1) {}

PairCounts::PairCounts(const TabularWorld& world,
                       std::span<const PreferenceDatum> data)
    : PairCounts(world.num_prompts(), world.num_responses()) {
  for (const PreferenceDatum& datum : data) Add(datum);
}

void PairCounts::Add(const PreferenceDatum& datum, double weight) {
  if (datum.x < 0 || datum.x >= prompts_ || datum.y_w < 0 ||
      datum.y_w >= responses_ || datum.y_l < 0 || datum.y_l >= responses_ ||
      datum.y_w == datum.y_l) {
    throw std::invalid_argument("invalid preference datum");
  }
  const size_t cell =
      (static_cast<size_t>(datum.x) * responses_ + datum.y_w) * responses_ +
      datum.y_l;
  if (slot_[cell] < 0) {
    slot_[cell] = static_cast<int>(entries_.size());
    entries_.push_back(Entry{datum.x, datum.y_w, datum.y_l, 0.0});
  }
  entries_[slot_[cell]].count += weight;
  total_ += weight;
}

double NegLogLikelihood(const TabularWorld& world, int i, const VectorXd& theta,
                        std::span<const PreferenceDatum> data) {
  return DiffNll(BuildDiff(world, i, data), theta);
}

VectorXd NegLogLikelihoodGradient(const TabularWorld& world, int i,
                                  const VectorXd& theta,
                                  std::span<const PreferenceDatum> data) {
  return DiffNllGradient(BuildDiff(world, i, data), theta);
}

double SoftValue(const TabularWorld& world, const Parameters& theta,
                 const VectorXd& d) {
  CheckDirection(world, d);
  return SoftValueAndGradient(world, theta, d, nullptr);
}

Parameters SoftValueGradient(const TabularWorld& world, const Parameters& theta,
                             const VectorXd& d) {
  CheckDirection(world, d);
  Parameters gradient;
  SoftValueAndGradient(world, theta, d, &gradient);
  return gradient;
}

VectorXd ProjectToParameterSet(const TabularWorld& world, int i,
                               const VectorXd& theta, double bound) {
  const VectorXd& g = world.base_feature_mean(i);
  const double c = world.baseline(i);
  const double gg = g.squaredNorm();
  VectorXd center = VectorXd::Zero(theta.size());
  VectorXd out = theta;
  if (gg > 0.0) {
    out -= ((g.dot(theta) - c) / gg) * g;
    center = (c / gg) * g;
  }
  const double radius_sq = bound * bound - center.squaredNorm();
  if (radius_sq < 0.0) {
    throw DomainError("parameter ball misses the baseline hyperplane");
  }
  const VectorXd offset = out - center;
  const double radius = std::sqrt(radius_sq);
  if (offset.norm() > radius) out = center + (radius / offset.norm()) * offset;
  return out;
}

double FitObjective(const TabularWorld& world, const Parameters& theta,
                    std::span<const Dataset> datasets, const VectorXd& d,
                    FitMode mode, double eta) {
  double loss = 0.0;
  for (int i = 0; i < world.num_objectives(); ++i) {
    loss += NegLogLikelihood(world, i, theta[i], datasets[i]);
  }
  switch (mode) {
    case FitMode::kMle:
      return loss;
    case FitMode::kPessimistic:
      return SoftValue(world, theta, d) + eta * loss;
    case FitMode::kOptimistic:
      return -SoftValue(world, theta, d) + eta * loss;
  }
  return loss;
}

RewardFit FitTheta(const TabularWorld& world, std::span<const Dataset> datasets,
                   const VectorXd& d, FitMode mode, const FitOptions& options) {
  CheckDirection(world, d);
  if (mode != FitMode::kMle && !(options.eta > 0.0)) {
    throw std::invalid_argument("eta must be positive");
  }
  const double bound = ResolveBound(world, options);
  const FitProblem problem(world, datasets, d, mode, options.eta, bound);
  Parameters init;
  if (options.init.has_value()) {
    init = *options.init;
    if (static_cast<int>(init.size()) != world.num_objectives()) {
      throw std::invalid_argument("initial parameters have wrong size");
    }
  } else if (mode == FitMode::kMle) {
    init.assign(world.num_objectives(), VectorXd::Zero(world.feature_dim()));
  } else {
    FitOptions mle_options = options;
    mle_options.record_trace = false;
    init = FitTheta(world, datasets, d, FitMode::kMle, mle_options).theta;
  }
  return RunProjectedGradient(problem, std::move(init), mode, options);
}

double RewardFreeLogLikelihood(const TabularWorld& world, int i,
                               const VectorXd& theta,
                               std::span<const PreferenceDatum> data) {
  const Policy own = SingleObjectivePolicy(world, i, theta);
  const MatrixXd& ref = world.pi_ref().probs;
  const double beta = world.beta();
  double total = 0.0;
  for (const PreferenceDatum& datum : data) {
    const double win = beta * std::log(own.probs(datum.x, datum.y_w) /
                                       ref(datum.x, datum.y_w));
    const double lose = beta * std::log(own.probs(datum.x, datum.y_l) /
                                        ref(datum.x, datum.y_l));
    total -= Softplus(-(win - lose));
  }
  return total;
}

double RewardFreeObjective(const TabularWorld& world, const Parameters& theta,
                           std::span<const Dataset> datasets, const VectorXd& d,
                           double eta) {
  const Policy pi = OptimalPolicyLinear(world, d, RewardTablesFor(world, theta));
  if ((pi.probs.array() <= 0.0).any()) {
    throw DomainError("policy has a zero probability");
  }
  double base_term = 0.0;
  for (int x = 0; x < world.num_prompts(); ++x) {
    base_term += world.rho()[x] *
                 world.pi_base().probs.row(x).dot(
                     pi.probs.row(x).array().log().matrix());
  }
  double fit_term = 0.0;
  for (int i = 0; i < world.num_objectives(); ++i) {
    fit_term += RewardFreeLogLikelihood(world, i, theta[i], datasets[i]);
  }
  return world.beta() * base_term - eta * fit_term;
}

IndexData::IndexData(const TabularWorld& world, const Parameters& theta,
                     std::span<const PreferenceDatum> data) {
  const int m = world.num_objectives();
  const int ny = world.num_responses();
  const RewardTables rewards = RewardTablesFor(world, theta);
  std::vector<int> slot(static_cast<size_t>(world.num_prompts()) * ny * ny, -1);
  std::vector<VectorXd> gap_rows;
  std::vector<VectorXd> count_rows;
  for (const PreferenceDatum& datum : data) {
    if (datum.index < 0 || datum.index >= m) {
      throw std::invalid_argument("reported objective index out of range");
    }
    const int lo = std::min(datum.y_w, datum.y_l);
    const int hi = std::max(datum.y_w, datum.y_l);
    const size_t cell = (static_cast<size_t>(datum.x) * ny + lo) * ny + hi;
    if (slot[cell] < 0) {
      slot[cell] = static_cast<int>(gap_rows.size());
      gap_rows.push_back(RewardGaps(rewards, datum.x, lo, hi));
      count_rows.push_back(VectorXd::Zero(m));
    }
    count_rows[slot[cell]][datum.index] += 1.0;
    total_ += 1.0;
  }
  gaps_.resize(gap_rows.size(), m);
  counts_.resize(gap_rows.size(), m);
  for (size_t k = 0; k < gap_rows.size(); ++k) {
    gaps_.row(k) = gap_rows[k].transpose();
    counts_.row(k) = count_rows[k].transpose();
  }
}

double IndexLogLikelihood(const IndexData& data, const VectorXd& alpha) {
  double total = 0.0;
  for (int k = 0; k < data.gaps().rows(); ++k) {
    const VectorXd logits = alpha.cwiseProduct(data.gaps().row(k).transpose());
    total += data.counts().row(k).dot(logits) -
             data.counts().row(k).sum() * LogSumExp(logits);
  }
  return total;
}

VectorXd IndexLogLikelihoodGradient(const IndexData& data,
                                    const VectorXd& alpha) {
  VectorXd grad = VectorXd::Zero(alpha.size());
  for (int k = 0; k < data.gaps().rows(); ++k) {
    const VectorXd gaps = data.gaps().row(k).transpose();
    const VectorXd probs = IndexProbabilities(alpha, gaps);
    const VectorXd counts = data.counts().row(k).transpose();
    grad += (counts - counts.sum() * probs).cwiseProduct(gaps);
  }
  return grad;
}

WeightEstimate FitAlpha(const IndexData& data, const AlphaFitOptions& options) {
  if (data.total() <= 0.0) {
    throw std::invalid_argument("weight estimation needs at least one datum");
  }
  const int m = static_cast<int>(data.gaps().cols());
  VectorXd alpha = options.init.value_or(VectorXd::Constant(m, 1.0 / m));
  if (alpha.size() != m) throw std::invalid_argument("initial alpha has wrong size");
  alpha = alpha.cwiseMax(1e-300);
  alpha /= alpha.sum();
  const double scale = data.total();
  auto residual_at = [&](const VectorXd& a, const VectorXd& g) {
    return (a - ProjectToSimplex(a + g)).norm();
  };
  double value = IndexLogLikelihood(data, alpha) / scale;
  VectorXd grad = IndexLogLikelihoodGradient(data, alpha) / scale;
  double residual = residual_at(alpha, grad);
  double step = 1.0;
  int iter = 0;
  for (; iter < options.max_iters && residual > options.tol; ++iter) {
    bool accepted = false;
    VectorXd trial;
    double trial_value = 0.0;
    for (int ls = 0; ls < kMaxBacktracks; ++ls) {
      trial = (alpha.array() * (step * (grad.array() - grad.maxCoeff())).exp())
                  .matrix()
                  .cwiseMax(1e-300);
      trial /= trial.sum();
      trial_value = IndexLogLikelihood(data, trial) / scale;
      if (trial_value >= value + kArmijo * grad.dot(trial - alpha) -
                             1e-15 * (1.0 + std::abs(value))) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // Multiplicative steps cannot reach a face of the simplex; finish with
      // Euclidean projected steps, which can.
      double pg_step = 1.0;
      for (int ls = 0; ls < kMaxBacktracks && !accepted; ++ls, pg_step *= 0.5) {
        trial = ProjectToSimplex(alpha + pg_step * grad);
        trial_value = IndexLogLikelihood(data, trial) / scale;
        accepted = trial_value >= value + kArmijo * grad.dot(trial - alpha) -
                                      1e-15 * (1.0 + std::abs(value));
      }
      if (!accepted) break;
      step = 1.0;
    }
    const VectorXd next_grad = IndexLogLikelihoodGradient(data, trial) / scale;
    const VectorXd ds = trial - alpha;
    // Barzilai-Borwein estimate in the metric diag(1 / alpha) that the
    // multiplicative update approximates to first order.
    const double curvature = -ds.dot(next_grad - grad);
    const double metric = (ds.array().square() / alpha.array()).sum();
    step = curvature > 0.0 ? metric / curvature : 2.0 * step;
    step = std::clamp(step, 1e-8, 1e8);
    alpha = trial;
    value = trial_value;
    grad = next_grad;
    residual = residual_at(alpha, grad);
  }
  if (residual > options.tol) {
    throw SolverError("weight estimate did not converge", residual);
  }
  WeightEstimate out;
  out.alpha_hat = alpha;
  out.loglik = value * scale;
  out.running_mean = alpha;
  out.residual = residual;
  out.iterations = iter;
  return out;
}

VectorXd RunningMean(const VectorXd& previous, const VectorXd& estimate, int t) {
  if (t < 1) throw std::invalid_argument("running mean needs t >= 1");
  return ((t - 1) * previous + estimate) / static_cast<double>(t);
}

MopStepResult MopStep(const TabularWorld& world,
                      std::span<const Dataset> datasets, const VectorXd& d_bar,
                      const MopStepOptions& options,
                      std::span<const VectorXd> group_alphas,
                      std::mt19937_64* rng) {
  CheckDirection(world, d_bar);
  MopStepResult result;
  if (options.injected_theta.has_value()) {
    result.fit.theta = *options.injected_theta;
    result.fit.mode = options.mode;
    result.fit.eta = options.fit.eta;
  } else {
    result.fit = FitTheta(world, datasets, d_bar, options.mode, options.fit);
  }
  result.policy =
      OptimalPolicyLinear(world, d_bar, RewardTablesFor(world, result.fit.theta));
  if (options.online) {
    if (rng == nullptr) throw std::invalid_argument("online step needs an rng");
    const int x = SamplePrompt(world, *rng);
    const int y1 = SampleResponse(result.policy, x, *rng);
    const int y2 = SampleDistinctResponse(result.policy, x, y1, *rng);
    for (size_t n = 0; n < group_alphas.size(); ++n) {
      const int index = IndexSample(world, group_alphas[n], x, y1, y2, *rng);
      const auto [w, l] = BtSample(world.true_rewards()[index], x, y1, y2, *rng);
      result.data.push_back(
          PreferenceDatum{x, w, l, static_cast<int>(n), index});
    }
  }
  return result;
}

}  // namespace mopo

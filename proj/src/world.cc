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

#include "mopo/world.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mopo/errors.h"

namespace mopo {
namespace {

using ::Eigen::MatrixXd;
using ::Eigen::VectorXd;

void CheckSimplexDirection(const VectorXd& d, int m) {
  if (d.size() != m) throw std::invalid_argument("direction has wrong size");
  if ((d.array() < 0.0).any() || std::abs(d.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("direction must lie on the simplex");
  }
}

// Row-wise softmax of a table of logits.
Policy SoftmaxRows(const MatrixXd& logits) {
  Policy out{MatrixXd(logits.rows(), logits.cols())};
  for (int x = 0; x < logits.rows(); ++x) {
    const double top = logits.row(x).maxCoeff();
    out.probs.row(x) = (logits.row(x).array() - top).exp();
    out.probs.row(x) /= out.probs.row(x).sum();
  }
  return out;
}

int SampleCategorical(const Eigen::Ref<const Eigen::RowVectorXd>& weights,
                      std::mt19937_64& rng) {
  const double total = weights.sum();
  std::uniform_real_distribution<double> unif(0.0, total);
  const double u = unif(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (int k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    last_positive = k;
    acc += weights[k];
    if (u < acc) return k;
  }
  return last_positive;
}

double Sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

void Policy::Validate() const {
  if (probs.rows() == 0 || probs.cols() == 0) {
    throw std::invalid_argument("policy table is empty");
  }
  if ((probs.array() < 0.0).any() || probs.hasNaN()) {
    throw std::invalid_argument("policy has negative entries");
  }
  for (int x = 0; x < probs.rows(); ++x) {
    if (std::abs(probs.row(x).sum() - 1.0) > 1e-12) {
      throw std::invalid_argument("policy row " + std::to_string(x) +
                                  " does not sum to 1");
    }
  }
}

Policy Policy::Uniform(int prompts, int responses) {
  return Policy{MatrixXd::Constant(prompts, responses, 1.0 / responses)};
}

TabularWorld::TabularWorld(VectorXd rho, std::vector<MatrixXd> features,
                           Parameters theta_star, double beta, Policy pi_ref,
                           Policy pi_base, double reward_bound)
    : rho_(std::move(rho)),
      features_(std::move(features)),
      theta_star_(std::move(theta_star)),
      beta_(beta),
      pi_ref_(std::move(pi_ref)),
      pi_base_(std::move(pi_base)),
      reward_bound_(reward_bound) {
  const int nx = static_cast<int>(rho_.size());
  if (nx == 0) throw std::invalid_argument("world has no prompts");
  if ((rho_.array() < 0.0).any() || std::abs(rho_.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("prompt distribution must lie on the simplex");
  }
  if (!(beta_ > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!(reward_bound_ >= 0.0)) {
    throw std::invalid_argument("reward bound must be nonnegative");
  }
  pi_ref_.Validate();
  pi_base_.Validate();
  if ((pi_ref_.probs.array() <= 0.0).any()) {
    throw std::invalid_argument("pi_ref must be strictly positive");
  }
  const int ny = pi_ref_.num_responses();
  if (pi_ref_.num_prompts() != nx || pi_base_.num_prompts() != nx ||
      pi_base_.num_responses() != ny) {
    throw std::invalid_argument("policy shapes disagree with the world");
  }
  if (ny < 2) throw std::invalid_argument("need at least two responses");
  if (features_.empty() || features_.size() != theta_star_.size()) {
    throw std::invalid_argument("need one feature map and parameter per objective");
  }
  const int dim = static_cast<int>(features_.front().cols());
  const int m = static_cast<int>(features_.size());
  baselines_ = VectorXd::Zero(m);
  for (int i = 0; i < m; ++i) {
    const MatrixXd& phi = features_[i];
    if (phi.rows() != nx * ny || phi.cols() != dim ||
        theta_star_[i].size() != dim) {
      throw std::invalid_argument("feature or parameter shape mismatch");
    }
    for (int row = 0; row < phi.rows(); ++row) {
      if (phi.row(row).norm() > 1.0 + 1e-12) {
        throw std::invalid_argument("feature vectors must have norm <= 1");
      }
    }
    if (theta_star_[i].norm() > reward_bound_ + 1e-12) {
      throw std::invalid_argument("true parameter exceeds the reward bound");
    }
    const VectorXd flat = phi * theta_star_[i];
    RewardTable table(nx, ny);
    VectorXd mean = VectorXd::Zero(dim);
    for (int x = 0; x < nx; ++x) {
      for (int y = 0; y < ny; ++y) {
        const double r = flat[x * ny + y];
        if (r < -1e-12 || r > reward_bound_ + 1e-12) {
          throw std::invalid_argument("true reward outside [0, B]");
        }
        table(x, y) = r;
        const double w = rho_[x] * pi_base_.probs(x, y);
        baselines_[i] += w * r;
        mean += w * phi.row(x * ny + y).transpose();
      }
    }
    true_rewards_.push_back(std::move(table));
    base_feature_means_.push_back(std::move(mean));
  }
}

TabularWorld TabularWorld::Generate(const WorldConfig& config) {
  if (config.prompts < 1 || config.responses < 2 || config.objectives < 1 ||
      config.feature_dim < 2) {
    throw std::invalid_argument("world dimensions are too small");
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int nx = config.prompts;
  const int ny = config.responses;
  const int dim = config.feature_dim;
  auto random_unit = [&](int n) {
    VectorXd u(n);
    do {
      for (int k = 0; k < n; ++k) u[k] = gauss(rng);
    } while (u.norm() < 1e-8);
    return VectorXd(u / u.norm());
  };

  VectorXd rho(nx);
  for (int x = 0; x < nx; ++x) rho[x] = std::exp(0.3 * gauss(rng));
  rho /= rho.sum();
  MatrixXd ref_logits(nx, ny);
  for (int x = 0; x < nx; ++x) {
    for (int y = 0; y < ny; ++y) ref_logits(x, y) = 0.5 * gauss(rng);
  }
  Policy pi_ref = SoftmaxRows(ref_logits);

  constexpr double kDirectionalScale = 0.8;
  constexpr double kBiasFeature = 0.6;
  std::vector<MatrixXd> features;
  Parameters theta_star;
  for (int i = 0; i < config.objectives; ++i) {
    MatrixXd phi(nx * ny, dim);
    for (int row = 0; row < nx * ny; ++row) {
      phi.row(row).head(dim - 1) = kDirectionalScale * random_unit(dim - 1);
      phi(row, dim - 1) = kBiasFeature;
    }
    // |w| = 0.6 B keeps the spread of rewards below 0.96 B and, after the
    // shift, |theta| <= B.
    VectorXd theta = VectorXd::Zero(dim);
    theta.head(dim - 1) = 0.6 * config.reward_bound * random_unit(dim - 1);
    const VectorXd raw = phi * theta;
    theta[dim - 1] = -raw.minCoeff() / kBiasFeature;
    features.push_back(std::move(phi));
    theta_star.push_back(std::move(theta));
  }
  Policy pi_base = pi_ref;
  return TabularWorld(std::move(rho), std::move(features), std::move(theta_star),
                      config.beta, std::move(pi_ref), std::move(pi_base),
                      config.reward_bound);
}

double Reward(const TabularWorld& world, int i, int x, int y) {
  return world.feature(i, x, y).dot(world.theta_star()[i]);
}

RewardTable RewardTableFor(const TabularWorld& world, int i,
                           const VectorXd& theta) {
  const VectorXd flat = world.features(i) * theta;
  const int ny = world.num_responses();
  RewardTable table(world.num_prompts(), ny);
  for (int x = 0; x < world.num_prompts(); ++x) {
    table.row(x) = flat.segment(x * ny, ny).transpose();
  }
  return table;
}

RewardTables RewardTablesFor(const TabularWorld& world, const Parameters& theta) {
  RewardTables out;
  out.reserve(theta.size());
  for (int i = 0; i < static_cast<int>(theta.size()); ++i) {
    out.push_back(RewardTableFor(world, i, theta[i]));
  }
  return out;
}

std::pair<int, int> BtSample(const RewardTable& rewards, int x, int y1, int y2,
                             std::mt19937_64& rng) {
  const double p_first = Sigmoid(rewards(x, y1) - rewards(x, y2));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return unif(rng) < p_first ? std::make_pair(y1, y2) : std::make_pair(y2, y1);
}

VectorXd IndexProbabilities(const VectorXd& alpha, const VectorXd& gaps) {
  VectorXd logits = alpha.cwiseProduct(gaps);
  logits.array() -= logits.maxCoeff();
  VectorXd p = logits.array().exp();
  return p / p.sum();
}

VectorXd RewardGaps(const RewardTables& rewards, int x, int y_w, int y_l) {
  VectorXd gaps(rewards.size());
  for (size_t i = 0; i < rewards.size(); ++i) {
    gaps[i] = std::abs(rewards[i](x, y_w) - rewards[i](x, y_l));
  }
  return gaps;
}

int IndexSample(const TabularWorld& world, const VectorXd& alpha, int x,
                int y_w, int y_l, std::mt19937_64& rng) {
  const VectorXd probs =
      IndexProbabilities(alpha, RewardGaps(world.true_rewards(), x, y_w, y_l));
  return SampleCategorical(probs.transpose(), rng);
}

int SamplePrompt(const TabularWorld& world, std::mt19937_64& rng) {
  return SampleCategorical(world.rho().transpose(), rng);
}

int SampleResponse(const Policy& policy, int x, std::mt19937_64& rng) {
  return SampleCategorical(policy.probs.row(x), rng);
}

int SampleDistinctResponse(const Policy& policy, int x, int other,
                           std::mt19937_64& rng) {
  Eigen::RowVectorXd weights = policy.probs.row(x);
  weights[other] = 0.0;
  if (!(weights.sum() > 0.0)) {
    throw DomainError("policy puts all mass on a single response");
  }
  return SampleCategorical(weights, rng);
}

Policy OptimalPolicyLinear(const TabularWorld& world, const VectorXd& d,
                           const RewardTables& rewards) {
  CheckSimplexDirection(d, static_cast<int>(rewards.size()));
  MatrixXd logits = world.pi_ref().probs.array().log().matrix();
  for (size_t i = 0; i < rewards.size(); ++i) {
    if (d[i] != 0.0) logits += (d[i] / world.beta()) * rewards[i];
  }
  return SoftmaxRows(logits);
}

Policy ModCombine(std::span<const Policy> policies, const VectorXd& d) {
  if (policies.empty()) throw std::invalid_argument("no policies to combine");
  CheckSimplexDirection(d, static_cast<int>(policies.size()));
  const auto& first = policies.front().probs;
  MatrixXd logits = MatrixXd::Zero(first.rows(), first.cols());
  for (size_t i = 0; i < policies.size(); ++i) {
    if ((policies[i].probs.array() <= 0.0).any()) {
      throw DomainError("policy combination needs strictly positive policies");
    }
    if (d[i] != 0.0) logits += d[i] * policies[i].probs.array().log().matrix();
  }
  return SoftmaxRows(logits);
}

double KlToReference(const TabularWorld& world, const Policy& pi) {
  const MatrixXd& ref = world.pi_ref().probs;
  double kl = 0.0;
  for (int x = 0; x < pi.num_prompts(); ++x) {
    double row = 0.0;
    for (int y = 0; y < pi.num_responses(); ++y) {
      const double p = pi.probs(x, y);
      if (p <= 0.0) continue;
      if (ref(x, y) <= 0.0) throw DomainError("policy leaves the reference support");
      row += p * std::log(p / ref(x, y));
    }
    kl += world.rho()[x] * row;
  }
  return kl;
}

VectorXd ExpectedRewardVector(const TabularWorld& world, const Policy& pi,
                              const RewardTables& rewards) {
  const double penalty = world.beta() * KlToReference(world, pi);
  VectorXd s(rewards.size());
  for (size_t i = 0; i < rewards.size(); ++i) {
    double total = 0.0;
    for (int x = 0; x < pi.num_prompts(); ++x) {
      total += world.rho()[x] * pi.probs.row(x).dot(rewards[i].row(x));
    }
    s[i] = total - penalty;
  }
  return s;
}

VectorXd RewardFreeValue(const TabularWorld& world,
                         std::span<const Policy> objective_policies,
                         const Policy& pi) {
  const MatrixXd& ref = world.pi_ref().probs;
  const MatrixXd& base = world.pi_base().probs;
  VectorXd v(objective_policies.size());
  for (size_t i = 0; i < objective_policies.size(); ++i) {
    const MatrixXd& own = objective_policies[i].probs;
    if ((own.array() <= 0.0).any()) {
      throw DomainError("objective policy has a zero probability");
    }
    double base_term = 0.0;
    double own_term = 0.0;
    for (int x = 0; x < world.num_prompts(); ++x) {
      double row_base = 0.0;
      double row_own = 0.0;
      for (int y = 0; y < world.num_responses(); ++y) {
        row_base += base(x, y) * std::log(own(x, y) / ref(x, y));
        const double p = pi.probs(x, y);
        if (p > 0.0) row_own += p * std::log(own(x, y) / p);
      }
      base_term += world.rho()[x] * row_base;
      own_term += world.rho()[x] * row_own;
    }
    v[i] = world.baseline(static_cast<int>(i)) - world.beta() * base_term +
           world.beta() * own_term;
  }
  return v;
}

double LinearObjective(const TabularWorld& world, const RewardTables& rewards,
                       const VectorXd& d, const Policy& pi) {
  const VectorXd s = ExpectedRewardVector(world, pi, rewards);
  // S already carries one KL penalty per coordinate, so d.S matches J.
  return d.dot(s);
}

double OptimalLinearValue(const TabularWorld& world, const RewardTables& rewards,
                          const VectorXd& d) {
  CheckSimplexDirection(d, static_cast<int>(rewards.size()));
  const double beta = world.beta();
  double value = 0.0;
  for (int x = 0; x < world.num_prompts(); ++x) {
    Eigen::RowVectorXd logits =
        world.pi_ref().probs.row(x).array().log().matrix();
    for (size_t i = 0; i < rewards.size(); ++i) {
      logits += (d[i] / beta) * rewards[i].row(x);
    }
    const double top = logits.maxCoeff();
    value += world.rho()[x] * beta *
             (top + std::log((logits.array() - top).exp().sum()));
  }
  return value;
}

double MeasureGap(const TabularWorld& world, const Policy& pi_star) {
  const int m = world.num_objectives();
  double gamma = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    const RewardTable& r = world.true_rewards()[i];
    double total = 0.0;
    for (int x = 0; x < world.num_prompts(); ++x) {
      double row = 0.0;
      for (int y1 = 0; y1 < world.num_responses(); ++y1) {
        for (int y2 = 0; y2 < world.num_responses(); ++y2) {
          row += pi_star.probs(x, y1) * world.pi_ref().probs(x, y2) *
                 std::abs(r(x, y1) - r(x, y2));
        }
      }
      total += world.rho()[x] * row;
    }
    gamma = std::min(gamma, total);
  }
  return gamma;
}

double TotalVariation(const Policy& a, const Policy& b) {
  double worst = 0.0;
  for (int x = 0; x < a.num_prompts(); ++x) {
    worst = std::max(worst, 0.5 * (a.probs.row(x) - b.probs.row(x)).lpNorm<1>());
  }
  return worst;
}

Policy MixturePolicy(std::span<const Policy> policies) {
  if (policies.empty()) throw std::invalid_argument("empty mixture");
  MatrixXd sum = MatrixXd::Zero(policies.front().probs.rows(),
                                policies.front().probs.cols());
  for (const Policy& p : policies) sum += p.probs;
  return Policy{sum / static_cast<double>(policies.size())};
}

std::vector<std::vector<PreferenceDatum>> GenerateOfflineData(
    const TabularWorld& world, int per_objective, std::mt19937_64& rng) {
  std::vector<std::vector<PreferenceDatum>> data(world.num_objectives());
  for (int i = 0; i < world.num_objectives(); ++i) {
    data[i].reserve(per_objective);
    for (int k = 0; k < per_objective; ++k) {
      const int x = SamplePrompt(world, rng);
      const int y1 = SampleResponse(world.pi_ref(), x, rng);
      const int y2 = SampleDistinctResponse(world.pi_ref(), x, y1, rng);
      const auto [w, l] = BtSample(world.true_rewards()[i], x, y1, y2, rng);
      data[i].push_back(PreferenceDatum{x, w, l, 0, i});
    }
  }
  return data;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void HashBytes(const void* data, size_t size, std::uint64_t* h) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (size_t k = 0; k < size; ++k) {
    *h ^= bytes[k];
    *h *= kFnvPrime;
  }
}

void HashMatrix(const MatrixXd& a, std::uint64_t* h) {
  const std::int64_t shape[2] = {a.rows(), a.cols()};
  HashBytes(shape, sizeof(shape), h);
  HashBytes(a.data(), sizeof(double) * a.size(), h);
}

}  // namespace

std::uint64_t WorldHash(const TabularWorld& world) {
  std::uint64_t h = kFnvOffset;
  HashMatrix(world.rho(), &h);
  for (int i = 0; i < world.num_objectives(); ++i) {
    HashMatrix(world.features(i), &h);
    HashMatrix(world.theta_star()[i], &h);
  }
  const double scalars[2] = {world.beta(), world.reward_bound()};
  HashBytes(scalars, sizeof(scalars), &h);
  HashMatrix(world.pi_ref().probs, &h);
  HashMatrix(world.pi_base().probs, &h);
  return h;
}

}  // namespace mopo

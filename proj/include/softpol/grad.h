#pragma once

// Estimators of the per-context policy gradient
//
//   grad_theta E_{a ~ pi_theta(.|x)} [ r(a, x) ]
//
// for the linear softmax policy of core.h. All four return a reward-ascent
// direction; optimizers handle the sign.
//
//  * exact_gradient            - enumerates E[r * grad log pi] over the catalog.
//  * exact_covariance_gradient - enumerates Cov[r, grad f] over the catalog.
//  * reinforce_mc_gradient     - Monte-Carlo REINFORCE with exact policy samples.
//  * snis_covariance_gradient  - self-normalized importance sampling of the
//                                covariance form under a mixture proposal;
//                                never computes the partition function.
//
// grad_theta f(a, x) = x beta_a^T, so every estimator reduces to x v^T with v
// an L-vector; the L x L matrix is formed once at the end.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "softpol/core.h"
#include "softpol/proposal.h"
#include "softpol/rewards.h"

namespace softpol {

enum class EstimatorKind { kExactReinforce, kExactCovariance, kReinforceMonteCarlo, kSnisCovariance };

// How reinforce_mc_gradient draws exact samples from pi_theta.
enum class PolicySampler {
  kGumbelMax,   // argmax_a f(a) + G_a per draw, O(S * P)
  kInverseCdf,  // one O(P) cumulative table, then O(log P) per draw
};

inline constexpr std::size_t kDefaultEnumerationGuard = 100000;

struct GradientEstimate {
  Matrix grad;
  EstimatorKind kind = EstimatorKind::kExactReinforce;
  std::size_t samples = 0;
  // Estimate of E_pi[r] produced along the way.
  double reward_estimate = 0.0;
  // SNIS diagnostics: 1 / sum(w_bar^2) and max(w_bar). NaN for other kinds.
  double effective_sample_size = std::numeric_limits<double>::quiet_NaN();
  double max_weight = std::numeric_limits<double>::quiet_NaN();
};

GradientEstimate exact_gradient(const PolicyParams& theta, const ConstVectorRef& x, const ItemEmbeddings& beta,
                                const RewardFn& reward, std::size_t max_catalog = kDefaultEnumerationGuard);

GradientEstimate exact_covariance_gradient(const PolicyParams& theta, const ConstVectorRef& x,
                                           const ItemEmbeddings& beta, const RewardFn& reward,
                                           std::size_t max_catalog = kDefaultEnumerationGuard);

// Sum_a pi(a|x) r(a, x), by enumeration.
double expected_reward_exact(const PolicyParams& theta, const ConstVectorRef& x, const ItemEmbeddings& beta,
                             const RewardFn& reward, std::size_t max_catalog = kDefaultEnumerationGuard);

GradientEstimate reinforce_mc_gradient(const PolicyParams& theta, const ConstVectorRef& x,
                                       const ItemEmbeddings& beta, const RewardFn& reward, std::size_t samples,
                                       Rng& rng, PolicySampler sampler = PolicySampler::kGumbelMax);

GradientEstimate snis_covariance_gradient(const PolicyParams& theta, const ConstVectorRef& x,
                                          const ItemEmbeddings& beta, const RewardFn& reward,
                                          const MixtureProposal& proposal, std::size_t samples, Rng& rng);

// exp(l - max l) / sum, i.e. self-normalized weights from log-weights.
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

}  // namespace softpol

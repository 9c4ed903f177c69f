#include "softpol/grad.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "softpol/errors.h"
#include "softpol/probe.h"

namespace softpol {
namespace {

void enforce_guard(const ItemEmbeddings& beta, std::size_t max_catalog) {
  if (beta.num_items() > max_catalog) {
    throw ConfigError("exact enumeration refused: catalog of " + std::to_string(beta.num_items()) +
                      " exceeds the guard of " + std::to_string(max_catalog));
  }
}

// Exact policy over the catalog together with the rewards of every action.
struct Enumeration {
  std::vector<double> pi;
  std::vector<double> rewards;
  Vector mean_beta;  // E_pi[beta_a]
};

Enumeration enumerate(const PolicyParams& theta, const ConstVectorRef& x, const ItemEmbeddings& beta,
                      const RewardFn& reward) {
  const Vector scores = all_scores(theta, x, beta);
  Enumeration e;
  e.pi = stable_softmax(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())));
  e.rewards.resize(beta.num_items());
  for (std::size_t a = 0; a < e.rewards.size(); ++a) e.rewards[a] = reward(static_cast<ActionId>(a));
  probe::add_rewards(e.rewards.size());
  const Eigen::Map<const Vector> pi(e.pi.data(), static_cast<Eigen::Index>(e.pi.size()));
  e.mean_beta = beta.matrix().transpose() * pi;
  return e;
}

void require_finite(const Matrix& g, const char* what) {
  if (!g.allFinite()) throw NumericError(std::string(what) + " produced a non-finite gradient");
}

}  // namespace

GradientEstimate exact_gradient(const PolicyParams& theta, const ConstVectorRef& x, const ItemEmbeddings& beta,
                                const RewardFn& reward, std::size_t max_catalog) {
  enforce_guard(beta, max_catalog);
  const Enumeration e = enumerate(theta, x, beta, reward);
  // grad log pi(a|x) = x (beta_a - E_pi[beta])^T
  Vector v = Vector::Zero(static_cast<Eigen::Index>(beta.dim()));
  double expected = 0.0;
  for (std::size_t a = 0; a < e.pi.size(); ++a) {
    const double w = e.pi[a] * e.rewards[a];
    expected += w;
    if (w != 0.0) v += w * (beta.row(static_cast<ActionId>(a)) - e.mean_beta);
  }
  GradientEstimate out;
  out.kind = EstimatorKind::kExactReinforce;
  out.grad = x * v.transpose();
  out.reward_estimate = expected;
  require_finite(out.grad, "exact_gradient");
  return out;
}

GradientEstimate exact_covariance_gradient(const PolicyParams& theta, const ConstVectorRef& x,
                                           const ItemEmbeddings& beta, const RewardFn& reward,
                                           std::size_t max_catalog) {
  enforce_guard(beta, max_catalog);
  const Enumeration e = enumerate(theta, x, beta, reward);
  double mean_reward = 0.0;
  for (std::size_t a = 0; a < e.pi.size(); ++a) mean_reward += e.pi[a] * e.rewards[a];
  // Cov[r, grad f] = E[(r - E r)(grad f - E grad f)] with grad f = x beta^T.
  Vector v = Vector::Zero(static_cast<Eigen::Index>(beta.dim()));
  for (std::size_t a = 0; a < e.pi.size(); ++a) {
    const double centered = e.rewards[a] - mean_reward;
    if (centered != 0.0) v += (e.pi[a] * centered) * (beta.row(static_cast<ActionId>(a)) - e.mean_beta);
  }
  GradientEstimate out;
  out.kind = EstimatorKind::kExactCovariance;
  out.grad = x * v.transpose();
  out.reward_estimate = mean_reward;
  require_finite(out.grad, "exact_covariance_gradient");
  return out;
}

double expected_reward_exact(const PolicyParams& theta, const ConstVectorRef& x, const ItemEmbeddings& beta,
                             const RewardFn& reward, std::size_t max_catalog) {
  enforce_guard(beta, max_catalog);
  const Vector scores = all_scores(theta, x, beta);
  const std::vector<double> pi =
      stable_softmax(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())));
  double total = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a) total += pi[a] * reward(static_cast<ActionId>(a));
  probe::add_rewards(pi.size());
  return total;
}

GradientEstimate reinforce_mc_gradient(const PolicyParams& theta, const ConstVectorRef& x,
                                       const ItemEmbeddings& beta, const RewardFn& reward, std::size_t samples,
                                       Rng& rng, PolicySampler sampler) {
  if (samples < 1) throw ConfigError("REINFORCE needs S >= 1");
  const Vector scores = all_scores(theta, x, beta);
  const auto p = static_cast<std::size_t>(scores.size());
  const double hi = scores.maxCoeff();
  if (!std::isfinite(hi)) throw NumericError("REINFORCE: non-finite policy score");

  // Unnormalized weights exp(f - max f) and their running sum; the sum is Z up to exp(max f).
  std::vector<double> cumulative(p);
  Vector weights(static_cast<Eigen::Index>(p));
  double z = 0.0;
  for (std::size_t a = 0; a < p; ++a) {
    const double w = std::exp(scores[static_cast<Eigen::Index>(a)] - hi);
    weights[static_cast<Eigen::Index>(a)] = w;
    z += w;
    cumulative[a] = z;
  }

  std::vector<ActionId> drawn(samples);
  if (sampler == PolicySampler::kGumbelMax) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& out : drawn) {
      ActionId best = 0;
      double best_key = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < p; ++a) {
        const double u = unit(rng);
        const double key = scores[static_cast<Eigen::Index>(a)] - std::log(-std::log(u));
        if (key > best_key) {
          best_key = key;
          best = static_cast<ActionId>(a);
        }
      }
      out = best;
    }
  } else {
    std::uniform_real_distribution<double> unit(0.0, z);
    for (auto& out : drawn) {
      const double t = unit(rng);
      const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), t);
      out = static_cast<ActionId>(std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), p - 1));
    }
  }

  // grad log pi(a|x) = x (beta_a - E_pi[beta])^T, with the exact normalizer.
  const Vector mean_beta = beta.matrix().transpose() * weights / z;
  Vector v = Vector::Zero(static_cast<Eigen::Index>(beta.dim()));
  double reward_sum = 0.0;
  for (ActionId a : drawn) {
    const double r = reward(a);
    reward_sum += r;
    if (r != 0.0) v += r * (beta.row(a) - mean_beta);
  }
  probe::add_rewards(samples);
  const double inv_s = 1.0 / static_cast<double>(samples);

  GradientEstimate out;
  out.kind = EstimatorKind::kReinforceMonteCarlo;
  out.samples = samples;
  out.grad = x * (inv_s * v).transpose();
  out.reward_estimate = reward_sum * inv_s;
  require_finite(out.grad, "reinforce_mc_gradient");
  return out;
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  std::vector<double> w(log_weights.size());
  if (w.empty()) return w;
  const double hi = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(hi)) throw NumericError("non-finite importance log-weight");
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_weights[i] - hi);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

GradientEstimate snis_covariance_gradient(const PolicyParams& theta, const ConstVectorRef& x,
                                          const ItemEmbeddings& beta, const RewardFn& reward,
                                          const MixtureProposal& proposal, std::size_t samples, Rng& rng) {
  if (samples < 2) throw ConfigError("SNIS covariance gradient needs S >= 2");
  if (proposal.catalog_size() != beta.num_items()) {
    throw ConfigError("proposal catalog size does not match the item embeddings");
  }
  const Vector h = theta.user_embedding(x);
  if (static_cast<std::size_t>(h.size()) != beta.dim()) throw ConfigError("policy and embedding dimensions differ");

  std::vector<ActionId> drawn(samples);
  std::vector<double> log_w(samples);
  std::vector<double> rewards(samples);
  // Draw everything first so the embedding rows can be fetched ahead of use.
  for (std::size_t s = 0; s < samples; ++s) {
    drawn[s] = proposal.draw(rng);
    const double* row = beta.row(drawn[s]).data();
    __builtin_prefetch(row);
    __builtin_prefetch(row + beta.dim() - 1);
  }
  for (std::size_t s = 0; s < samples; ++s) {
    const ActionId a = drawn[s];
    const double f = h.dot(beta.row(a));
    if (!std::isfinite(f)) {
      throw NumericError("SNIS: non-finite score for action " + std::to_string(a) + " at sample " +
                         std::to_string(s));
    }
    // log w_s = f(a_s, x) - log q(a_s); exp is deferred to the normalization.
    log_w[s] = f - proposal.log_prob(a);
    rewards[s] = reward(a);
  }
  probe::add_scores(samples);
  probe::add_rewards(samples);

  const std::vector<double> w = normalize_log_weights(log_w);

  // Covariance is shift invariant; centering on the first reward makes a
  // constant reward give exactly zero.
  const double shift = rewards[0];
  double mean_reward = 0.0;
  double sum_sq = 0.0;
  double max_w = 0.0;
  Vector mean_beta = Vector::Zero(static_cast<Eigen::Index>(beta.dim()));
  for (std::size_t s = 0; s < samples; ++s) {
    mean_reward += w[s] * (rewards[s] - shift);
    mean_beta += w[s] * beta.row(drawn[s]);
    sum_sq += w[s] * w[s];
    max_w = std::max(max_w, w[s]);
  }
  Vector v = Vector::Zero(static_cast<Eigen::Index>(beta.dim()));
  for (std::size_t s = 0; s < samples; ++s) {
    const double centered = (rewards[s] - shift) - mean_reward;
    if (centered != 0.0) v += (w[s] * centered) * (beta.row(drawn[s]) - mean_beta);
  }

  GradientEstimate out;
  out.kind = EstimatorKind::kSnisCovariance;
  out.samples = samples;
  out.grad = x * v.transpose();
  out.reward_estimate = shift + mean_reward;
  out.effective_sample_size = 1.0 / sum_sq;
  out.max_weight = max_w;
  if (out.effective_sample_size < 0.01 * static_cast<double>(samples)) probe::add_low_ess();
  if (!out.grad.allFinite()) {
    throw NumericError("SNIS produced a non-finite gradient (ESS " + std::to_string(out.effective_sample_size) +
                       ")");
  }
  return out;
}

}  // namespace softpol

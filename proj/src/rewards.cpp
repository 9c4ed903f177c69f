#include "softpol/rewards.h"

#include <algorithm>
#include <string>

#include "softpol/errors.h"

namespace softpol {
namespace {

void check_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("clipping factor tau must lie in [0, 1]");
}

}  // namespace

double indicator_reward(ActionId a, std::span<const ActionId> labels) {
  return std::binary_search(labels.begin(), labels.end(), a) ? 1.0 : 0.0;
}

double ips_clipped_reward(ActionId a, const LoggedBanditRecord& rec, double tau) {
  check_tau(tau);
  if (a != rec.action) return 0.0;
  return rec.reward / std::max(tau, rec.propensity);
}

double dr_clipped_reward(ActionId a, const LoggedBanditRecord& rec, double tau, const RewardModel& model) {
  check_tau(tau);
  const double predicted = model(a, rec.context);
  if (a != rec.action) return predicted;
  return (rec.reward - predicted) / std::max(tau, rec.propensity) + predicted;
}

RewardModel zero_reward_model() {
  return [](ActionId, const ConstVectorRef&) { return 0.0; };
}

RewardEstimator RewardEstimator::indicator() { return RewardEstimator(Kind::kIndicator, 0.0); }

RewardEstimator RewardEstimator::ips_clipped(double tau) {
  check_tau(tau);
  return RewardEstimator(Kind::kIpsClipped, tau);
}

RewardEstimator RewardEstimator::dr_clipped(double tau, RewardModel model) {
  check_tau(tau);
  if (!model) throw ConfigError("doubly robust estimator needs a reward model");
  RewardEstimator r(Kind::kDrClipped, tau);
  r.model_ = std::move(model);
  return r;
}

RewardEstimator RewardEstimator::custom(std::function<double(ActionId, const RewardContext&)> fn) {
  if (!fn) throw ConfigError("custom reward estimator needs a callable");
  RewardEstimator r(Kind::kCustom, 0.0);
  r.custom_ = std::move(fn);
  return r;
}

double RewardEstimator::operator()(ActionId a, const RewardContext& ctx) const {
  switch (kind_) {
    case Kind::kIndicator:
      return indicator_reward(a, ctx.labels);
    case Kind::kIpsClipped:
    case Kind::kDrClipped:
      if (ctx.record == nullptr) throw ConfigError("IPS/DR rewards need a logged bandit record");
      return kind_ == Kind::kIpsClipped ? ips_clipped_reward(a, *ctx.record, tau_)
                                        : dr_clipped_reward(a, *ctx.record, tau_, model_);
    case Kind::kCustom:
      return custom_(a, ctx);
  }
  return 0.0;
}

RewardFn RewardEstimator::bind(const RewardContext& ctx) const {
  if (kind_ == Kind::kIndicator) {
    return [labels = ctx.labels](ActionId a) { return indicator_reward(a, labels); };
  }
  return [this, ctx](ActionId a) { return (*this)(a, ctx); };
}

}  // namespace softpol

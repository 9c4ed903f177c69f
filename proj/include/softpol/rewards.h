#pragma once

// Reward estimators r(a, x). The optimizer only ever sees a RewardFn bound to
// one context, evaluated lazily on the actions it samples.

#include <functional>
#include <span>
#include <vector>

#include "softpol/core.h"

namespace softpol {

using RewardFn = std::function<double(ActionId)>;
// r_M(a, x) for the doubly robust estimator.
using RewardModel = std::function<double(ActionId, const ConstVectorRef&)>;

// 1 if a is in `labels` (sorted ascending), else 0.
double indicator_reward(ActionId a, std::span<const ActionId> labels);

// r / max(tau, p) on the logged action, 0 elsewhere. tau = 0 is plain IPS.
double ips_clipped_reward(ActionId a, const LoggedBanditRecord& rec, double tau);

// (r - r_M) / max(tau, p) + r_M on the logged action, r_M elsewhere.
double dr_clipped_reward(ActionId a, const LoggedBanditRecord& rec, double tau, const RewardModel& model);

// r_M == 0.
RewardModel zero_reward_model();

// Everything one context can contribute to a reward estimate.
struct RewardContext {
  std::span<const ActionId> labels;           // indicator
  const LoggedBanditRecord* record = nullptr;  // ips / dr
};

class RewardEstimator {
 public:
  enum class Kind { kIndicator, kIpsClipped, kDrClipped, kCustom };

  static RewardEstimator indicator();
  static RewardEstimator ips_clipped(double tau);
  static RewardEstimator dr_clipped(double tau, RewardModel model);
  // `fn(a, ctx)` for any other offline metric.
  static RewardEstimator custom(std::function<double(ActionId, const RewardContext&)> fn);

  Kind kind() const { return kind_; }
  double tau() const { return tau_; }

  double operator()(ActionId a, const RewardContext& ctx) const;

  // Binds a context. The returned function references `ctx` storage, which
  // must outlive it.
  RewardFn bind(const RewardContext& ctx) const;

 private:
  RewardEstimator(Kind kind, double tau) : kind_(kind), tau_(tau) {}

  Kind kind_;
  double tau_;
  RewardModel model_;
  std::function<double(ActionId, const RewardContext&)> custom_;
};

}  // namespace softpol

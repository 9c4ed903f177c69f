#pragma once

// Mixture proposal over the catalog:
//
//   q(a) = eps / P + (1 - eps) * kappa(a)   if a is in the retrieved top-K set
//   q(a) = eps / P                          otherwise
//
// where kappa is the softmax of the retrieved scores restricted to the top-K
// set. eps > 0 keeps every action in the support, which the importance
// weights need.

#include <cstddef>
#include <span>
#include <vector>

#include "softpol/core.h"
#include "softpol/mips.h"

namespace softpol {

inline constexpr double kMinProposalEpsilon = 1e-6;

class MixtureProposal {
 public:
  // Uniform proposal (eps = 1). Never consults a top-K set.
  static MixtureProposal uniform(std::size_t catalog_size);

  double epsilon() const { return epsilon_; }
  std::size_t catalog_size() const { return catalog_size_; }
  // Top-K ids in retrieval order and their kappa weights.
  std::span<const ActionId> support() const { return ids_; }
  std::span<const double> kappa() const { return kappa_; }

  // Exact q(a). Throws IndexError for a >= P.
  double prob(ActionId a) const;
  double log_prob(ActionId a) const;

  // S i.i.d. draws; S >= 2.
  std::vector<ActionId> sample(std::size_t count, Rng& rng) const;
  ActionId draw(Rng& rng) const;

 private:
  friend MixtureProposal build_proposal(const TopKSet& topk, double epsilon, std::size_t catalog_size);
  MixtureProposal() = default;

  double epsilon_ = 1.0;
  std::size_t catalog_size_ = 0;
  std::vector<ActionId> ids_;
  std::vector<double> kappa_;
  // Membership lookup: ids sorted ascending with their q values.
  std::vector<ActionId> sorted_ids_;
  std::vector<double> sorted_prob_;
  std::vector<double> sorted_log_prob_;
  double log_floor_ = 0.0;
  // Walker alias table over kappa.
  std::vector<double> alias_cut_;
  std::vector<std::uint32_t> alias_other_;
};

// Throws ConfigError unless kMinProposalEpsilon <= eps <= 1 and the top-K
// scores are finite with distinct ids < P. With eps == 1 the top-K set is ignored.
MixtureProposal build_proposal(const TopKSet& topk, double epsilon, std::size_t catalog_size);

}  // namespace softpol

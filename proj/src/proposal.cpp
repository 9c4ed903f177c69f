#include "softpol/proposal.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "softpol/errors.h"

namespace softpol {
namespace {

double unit_double(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Multiply-shift reduction of one 64-bit draw onto [0, n).
std::size_t bounded(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

}  // namespace

MixtureProposal MixtureProposal::uniform(std::size_t catalog_size) {
  if (catalog_size == 0) throw ConfigError("proposal over an empty catalog");
  MixtureProposal q;
  q.epsilon_ = 1.0;
  q.catalog_size_ = catalog_size;
  q.log_floor_ = -std::log(static_cast<double>(catalog_size));
  return q;
}

MixtureProposal build_proposal(const TopKSet& topk, double epsilon, std::size_t catalog_size) {
  if (!(epsilon >= kMinProposalEpsilon && epsilon <= 1.0)) {
    throw ConfigError("proposal epsilon must lie in [1e-6, 1], got " + std::to_string(epsilon));
  }
  if (epsilon == 1.0) return MixtureProposal::uniform(catalog_size);
  if (catalog_size == 0) throw ConfigError("proposal over an empty catalog");
  if (topk.empty()) throw ConfigError("mixture proposal with eps < 1 needs a non-empty top-K set");

  MixtureProposal q;
  q.epsilon_ = epsilon;
  q.catalog_size_ = catalog_size;
  const std::size_t k = topk.size();
  q.ids_.resize(k);
  std::vector<double> scores(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (topk[i].id >= catalog_size) throw IndexError("top-K id out of range");
    if (!std::isfinite(topk[i].score)) throw ConfigError("top-K score is not finite");
    q.ids_[i] = topk[i].id;
    scores[i] = topk[i].score;
  }
  q.kappa_ = stable_softmax(scores);

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return q.ids_[a] < q.ids_[b]; });
  const double floor_mass = epsilon / static_cast<double>(catalog_size);
  q.sorted_ids_.resize(k);
  q.sorted_prob_.resize(k);
  q.sorted_log_prob_.resize(k);
  q.log_floor_ = std::log(floor_mass);
  for (std::size_t i = 0; i < k; ++i) {
    q.sorted_ids_[i] = q.ids_[order[i]];
    q.sorted_prob_[i] = floor_mass + (1.0 - epsilon) * q.kappa_[order[i]];
    q.sorted_log_prob_[i] = std::log(q.sorted_prob_[i]);
    if (i > 0 && q.sorted_ids_[i] == q.sorted_ids_[i - 1]) throw ConfigError("duplicate id in top-K set");
  }

  // Vose's alias method.
  q.alias_cut_.assign(k, 1.0);
  q.alias_other_.resize(k);
  std::iota(q.alias_other_.begin(), q.alias_other_.end(), 0u);
  std::vector<double> scaled(k);
  std::vector<std::uint32_t> small;
  std::vector<std::uint32_t> large;
  for (std::size_t i = 0; i < k; ++i) {
    scaled[i] = q.kappa_[i] * static_cast<double>(k);
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  while (!small.empty() && !large.empty()) {
    const std::uint32_t s = small.back();
    small.pop_back();
    const std::uint32_t l = large.back();
    q.alias_cut_[s] = scaled[s];
    q.alias_other_[s] = l;
    scaled[l] -= 1.0 - scaled[s];
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  // Leftovers are 1 up to rounding.
  for (std::uint32_t i : small) q.alias_cut_[i] = 1.0;
  for (std::uint32_t i : large) q.alias_cut_[i] = 1.0;
  return q;
}

double MixtureProposal::prob(ActionId a) const {
  if (a >= catalog_size_) {
    throw IndexError("action " + std::to_string(a) + " out of range for proposal over " +
                     std::to_string(catalog_size_) + " actions");
  }
  const double floor_mass = epsilon_ / static_cast<double>(catalog_size_);
  const auto it = std::lower_bound(sorted_ids_.begin(), sorted_ids_.end(), a);
  if (it != sorted_ids_.end() && *it == a) return sorted_prob_[static_cast<std::size_t>(it - sorted_ids_.begin())];
  return floor_mass;
}

double MixtureProposal::log_prob(ActionId a) const {
  if (a >= catalog_size_) {
    throw IndexError("action " + std::to_string(a) + " out of range for proposal over " +
                     std::to_string(catalog_size_) + " actions");
  }
  const auto it = std::lower_bound(sorted_ids_.begin(), sorted_ids_.end(), a);
  if (it != sorted_ids_.end() && *it == a) {
    return sorted_log_prob_[static_cast<std::size_t>(it - sorted_ids_.begin())];
  }
  return log_floor_;
}

ActionId MixtureProposal::draw(Rng& rng) const {
  if (ids_.empty() || unit_double(rng) < epsilon_) return static_cast<ActionId>(bounded(rng, catalog_size_));
  const std::size_t c = bounded(rng, ids_.size());
  return unit_double(rng) < alias_cut_[c] ? ids_[c] : ids_[alias_other_[c]];
}

std::vector<ActionId> MixtureProposal::sample(std::size_t count, Rng& rng) const {
  if (count < 2) throw ConfigError("proposal sampling needs S >= 2");
  std::vector<ActionId> out(count);
  for (auto& a : out) a = draw(rng);
  return out;
}

}  // namespace softpol

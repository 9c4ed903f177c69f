#include "softpol/core.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "softpol/errors.h"
#include "softpol/probe.h"

namespace softpol {

bool all_finite(const Eigen::Ref<const RowMatrix>& m) { return m.allFinite(); }

ItemEmbeddings::ItemEmbeddings(RowMatrix beta) {
  if (beta.rows() == 0 || beta.cols() == 0) {
    throw ConfigError("item embeddings must have at least one row and one column");
  }
  if (!beta.allFinite()) {
    throw ConfigError("item embeddings contain non-finite entries");
  }
  beta_ = std::make_shared<const RowMatrix>(std::move(beta));
}

void ItemEmbeddings::check_action(ActionId a) const {
  if (a >= num_items()) {
    throw IndexError("action " + std::to_string(a) + " out of range for catalog of size " +
                     std::to_string(num_items()));
  }
}

PolicyParams::PolicyParams(Matrix theta) : theta_(std::move(theta)) {
  if (theta_.rows() != theta_.cols() || theta_.rows() == 0) {
    throw ConfigError("policy parameters must be a non-empty square matrix");
  }
  if (!theta_.allFinite()) {
    throw ConfigError("policy parameters contain non-finite entries");
  }
}

Vector PolicyParams::user_embedding(const ConstVectorRef& x) const {
  if (static_cast<std::size_t>(x.size()) != dim()) {
    throw ConfigError("context dimension " + std::to_string(x.size()) + " does not match policy dimension " +
                      std::to_string(dim()));
  }
  return theta_.transpose() * x;
}

ActionDistribution::ActionDistribution(std::vector<double> probabilities) : p_(std::move(probabilities)) {
  double total = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0)) throw NumericError("action distribution has a negative or NaN entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw NumericError("action distribution sums to " + std::to_string(total));
  }
}

void LoggedBanditRecord::validate(std::size_t num_actions) const {
  if (!(propensity > 0.0 && propensity <= 1.0)) {
    throw ConfigError("logged propensity must lie in (0, 1]");
  }
  if (action >= num_actions) {
    throw IndexError("logged action " + std::to_string(action) + " out of range");
  }
}

namespace {

void check_dims(const PolicyParams& theta, const ConstVectorRef& x, const ItemEmbeddings& beta) {
  if (theta.dim() != beta.dim() || static_cast<std::size_t>(x.size()) != beta.dim()) {
    throw ConfigError("dimension mismatch: theta " + std::to_string(theta.dim()) + ", context " +
                      std::to_string(x.size()) + ", embeddings " + std::to_string(beta.dim()));
  }
}

}  // namespace

double relevance_score(const PolicyParams& theta, const ConstVectorRef& x, const ItemEmbeddings& beta,
                       ActionId a) {
  check_dims(theta, x, beta);
  beta.check_action(a);
  probe::add_scores(1);
  return theta.user_embedding(x).dot(beta.row(a));
}

Vector all_scores(const PolicyParams& theta, const ConstVectorRef& x, const ItemEmbeddings& beta) {
  check_dims(theta, x, beta);
  probe::add_full_pass();
  probe::add_scores(beta.num_items());
  return beta.matrix() * theta.user_embedding(x);
}

std::vector<double> stable_softmax(std::span<const double> scores) {
  std::vector<double> out(scores.size());
  if (scores.empty()) return out;
  const double hi = *std::max_element(scores.begin(), scores.end());
  if (!std::isfinite(hi)) throw NumericError("softmax over non-finite scores");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - hi);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

ActionId argmax_lowest(std::span<const double> scores) {
  ActionId best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > best_score) {
      best_score = scores[i];
      best = static_cast<ActionId>(i);
    }
  }
  return best;
}

ActionDistribution policy_probabilities_exact(const PolicyParams& theta, const ConstVectorRef& x,
                                              const ItemEmbeddings& beta) {
  const Vector s = all_scores(theta, x, beta);
  return ActionDistribution(stable_softmax(std::span<const double>(s.data(), s.size())));
}

ActionId policy_argmax_exact(const PolicyParams& theta, const ConstVectorRef& x, const ItemEmbeddings& beta) {
  const Vector s = all_scores(theta, x, beta);
  return argmax_lowest(std::span<const double>(s.data(), s.size()));
}

Matrix score_gradient(const ConstVectorRef& x, const ConstVectorRef& beta_a) { return x * beta_a.transpose(); }

}  // namespace softpol

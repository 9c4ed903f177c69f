#pragma once

// Domain types and exact softmax-policy math.
//
// The policy scores action a in context x with the bilinear form
//   f(a, x) = (theta^T x) . beta_a
// where beta (P x L) is a frozen item-embedding table and theta (L x L) is
// the only learned parameter. Everything here is the O(P) reference path;
// the fast estimators live in grad.h.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace softpol {

using ActionId = std::uint32_t;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstVectorRef = Eigen::Ref<const Vector>;
using Rng = std::mt19937_64;

bool all_finite(const Eigen::Ref<const RowMatrix>& m);

// Frozen P x L item table. Copies share the same storage; the matrix can
// never be mutated once wrapped.
class ItemEmbeddings {
 public:
  explicit ItemEmbeddings(RowMatrix beta);

  std::size_t num_items() const { return static_cast<std::size_t>(beta_->rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(beta_->cols()); }
  const RowMatrix& matrix() const { return *beta_; }

  // Row beta_a as a column vector view.
  auto row(ActionId a) const { return beta_->row(a).transpose(); }

  // Throws IndexError unless a < num_items().
  void check_action(ActionId a) const;

 private:
  std::shared_ptr<const RowMatrix> beta_;
};

// Learned L x L map; h(x) = theta^T x.
class PolicyParams {
 public:
  explicit PolicyParams(std::size_t dim) : theta_(Matrix::Zero(dim, dim)) {}
  explicit PolicyParams(Matrix theta);

  std::size_t dim() const { return static_cast<std::size_t>(theta_.rows()); }
  const Matrix& matrix() const { return theta_; }
  // Only optimizers should write through this.
  Matrix& mutable_matrix() { return theta_; }

  // h(x) = theta^T x. Throws ConfigError on dimension mismatch.
  Vector user_embedding(const ConstVectorRef& x) const;

 private:
  Matrix theta_;
};

class ActionDistribution {
 public:
  explicit ActionDistribution(std::vector<double> probabilities);

  std::size_t size() const { return p_.size(); }
  double operator[](ActionId a) const { return p_[a]; }
  std::span<const double> probabilities() const { return p_; }

 private:
  std::vector<double> p_;
};

struct LoggedBanditRecord {
  Vector context;
  ActionId action = 0;
  double propensity = 1.0;
  double reward = 0.0;

  // Throws ConfigError/IndexError if the record violates 0 < p <= 1 or a < P.
  void validate(std::size_t num_actions) const;
};

// (theta^T x) . beta_a
double relevance_score(const PolicyParams& theta, const ConstVectorRef& x, const ItemEmbeddings& beta,
                       ActionId a);

// All P scores at once. This is a full-catalog pass and is counted by the probe.
Vector all_scores(const PolicyParams& theta, const ConstVectorRef& x, const ItemEmbeddings& beta);

// Max-subtracted softmax of an arbitrary score vector.
std::vector<double> stable_softmax(std::span<const double> scores);

// Lowest index attaining the maximum.
ActionId argmax_lowest(std::span<const double> scores);

ActionDistribution policy_probabilities_exact(const PolicyParams& theta, const ConstVectorRef& x,
                                              const ItemEmbeddings& beta);

ActionId policy_argmax_exact(const PolicyParams& theta, const ConstVectorRef& x, const ItemEmbeddings& beta);

// Closed-form grad_theta f(a, x) = x beta_a^T for the linear user map.
Matrix score_gradient(const ConstVectorRef& x, const ConstVectorRef& beta_a);

}  // namespace softpol

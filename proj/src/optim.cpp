#include "softpol/optim.h"

#include <cmath>
#include <string>

#include "softpol/errors.h"

namespace softpol {

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

Optimizer::Optimizer(const OptimizerConfig& config, std::size_t dim)
    : config_(config),
      m_(Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))),
      v_(Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (config.kind == OptimizerKind::kAdam) {
    if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0)) {
      throw ConfigError("Adam decay rates must lie in [0, 1)");
    }
    if (!(config.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  }
}

void Optimizer::step(PolicyParams& theta, const Matrix& ascent_grad) {
  if (ascent_grad.rows() != m_.rows() || ascent_grad.cols() != m_.cols() ||
      static_cast<Eigen::Index>(theta.dim()) != m_.rows()) {
    throw ConfigError("optimizer step: shape mismatch");
  }
  if (!ascent_grad.allFinite()) throw NumericError("optimizer step rejected: non-finite gradient");
  const Matrix loss_grad = -ascent_grad;
  if (config_.kind == OptimizerKind::kSgd) {
    sgd_step(theta.mutable_matrix(), loss_grad);
  } else {
    adam_step(theta.mutable_matrix(), loss_grad);
  }
}

void Optimizer::sgd_step(Matrix& theta, const Matrix& loss_grad) {
  ++t_;
  theta -= config_.learning_rate * loss_grad;
}

void Optimizer::adam_step(Matrix& theta, const Matrix& loss_grad) {
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  m_ = b1 * m_ + (1.0 - b1) * loss_grad;
  v_ = b2 * v_ + (1.0 - b2) * loss_grad.cwiseProduct(loss_grad);
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  theta.array() -= config_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

}  // namespace softpol

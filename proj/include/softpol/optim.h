#pragma once

// First-order optimizers for PolicyParams.
//
// Gradient estimators return reward-ascent directions. The optimizers
// minimize the negative reward, i.e. they are fed loss_grad = -grad
// internally, so a step always moves theta toward higher reward.

#include <cstddef>
#include <string_view>

#include "softpol/core.h"

namespace softpol {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

OptimizerKind parse_optimizer_kind(std::string_view name);
std::string_view to_string(OptimizerKind kind);

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, std::size_t dim);

  // Applies one update in place. Throws NumericError (leaving theta and the
  // optimizer state untouched) when `ascent_grad` is not finite.
  void step(PolicyParams& theta, const Matrix& ascent_grad);

  const OptimizerConfig& config() const { return config_; }
  std::size_t steps() const { return t_; }
  const Matrix& first_moment() const { return m_; }
  const Matrix& second_moment() const { return v_; }

 private:
  void sgd_step(Matrix& theta, const Matrix& loss_grad);
  void adam_step(Matrix& theta, const Matrix& loss_grad);

  OptimizerConfig config_;
  Matrix m_;
  Matrix v_;
  std::size_t t_ = 0;
};

}  // namespace softpol

#pragma once

// Offline policy training loop, test-time evaluation and run reports.
//
// One optimizer step:
//   draw a minibatch of contexts
//   for every context x in the batch
//     snis:      alpha_K = index.top_k(theta^T x, K); q = mixture(alpha_K, eps);
//                S draws from q; self-normalized covariance gradient
//     reinforce: S exact draws from pi_theta over the full catalog
//     exact:     full enumeration
//   average the per-context gradients; optimizer step
//
// theta starts at zero, so the initial policy is uniform.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "softpol/core.h"
#include "softpol/data.h"
#include "softpol/grad.h"
#include "softpol/mips.h"
#include "softpol/optim.h"
#include "softpol/rewards.h"

namespace softpol {

enum class TrainMethod { kExact, kReinforce, kSnis };

TrainMethod parse_train_method(std::string_view name);
std::string_view to_string(TrainMethod method);
PolicySampler parse_policy_sampler(std::string_view name);
std::string_view to_string(PolicySampler sampler);

struct TrainConfig {
  TrainMethod method = TrainMethod::kSnis;
  double epsilon = 0.8;
  std::size_t topk = 256;
  std::size_t samples = 1000;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer{OptimizerKind::kAdam, 1e-4};
  std::size_t epochs = 50;
  std::uint64_t data_seed = 0;      // minibatch order
  std::uint64_t sampling_seed = 0;  // Monte-Carlo draws
  std::uint64_t init_seed = 0;      // recorded only; theta starts at zero
  PolicySampler reinforce_sampler = PolicySampler::kInverseCdf;
  bool evaluate_each_epoch = true;
  // > 0: stop once this much training time is spent (still capped by
  // `epochs` when that is non-zero) and evaluate every 5% of the budget.
  double budget_seconds = 0.0;
  std::size_t exact_guard = kDefaultEnumerationGuard;

  // Throws ConfigError for missing or out-of-range method parameters.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;           // 1-based
  std::size_t steps = 0;           // optimizer steps so far
  double train_reward = 0.0;       // mean per-context estimate of E_pi[r] during the epoch
  double test_reward = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;       // cumulative training time
  double epoch_seconds = 0.0;
  double ess_mean = std::numeric_limits<double>::quiet_NaN();
};

struct RunReport {
  std::string name;
  TrainConfig config;
  std::vector<EpochRecord> epochs;       // one per completed or budget-cut epoch
  std::vector<EpochRecord> checkpoints;  // budget mode: every 5% of the budget
  double total_seconds = 0.0;
  // T_baseline / T_this from benchmark(); NaN otherwise.
  double speedup = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t low_ess_events = 0;

  // Mean of epoch_seconds; NaN when there are no epochs.
  double mean_epoch_seconds() const;
};

struct TrainResult {
  PolicyParams params;
  RunReport report;
};

// Maps a training row to its reward function.
using RewardSource = std::function<RewardFn(std::size_t row)>;
RewardSource indicator_rewards(const EmbeddedDataset& data);

struct StepInfo {
  std::size_t epoch;
  std::size_t step;  // 0-based global step
  std::span<const std::uint32_t> batch;
  const Matrix& gradient;  // batch-mean ascent direction
};
using StepObserver = std::function<void(const StepInfo&)>;

struct TrainOptions {
  const EmbeddedDataset* test = nullptr;  // evaluated once per epoch when set
  RewardSource rewards;                   // defaults to indicator_rewards(train)
  StepObserver on_step;
};

TrainResult train(const TrainConfig& config, const EmbeddedDataset& train_set, const ItemEmbeddings& beta,
                  const MipsIndex& index, const TrainOptions& options = {});

// Fraction of rows whose top-1 retrieved action (via `index`) is in the labels.
double evaluate(const PolicyParams& theta, const MipsIndex& index, const EmbeddedDataset& test);

// The random stream train() uses for batch slot `slot` of global step `step`.
Rng context_rng(std::uint64_t sampling_seed, std::uint64_t step, std::uint64_t slot);

// The row order train() uses for a given epoch (0-based).
std::vector<std::uint32_t> epoch_order(std::size_t num_rows, std::uint64_t data_seed, std::size_t epoch);

// One context's gradient exactly as train() computes it.
GradientEstimate context_gradient(const TrainConfig& config, const PolicyParams& theta, const ConstVectorRef& x,
                                  const ItemEmbeddings& beta, const MipsIndex& index, const RewardFn& reward,
                                  Rng& rng);

}  // namespace softpol

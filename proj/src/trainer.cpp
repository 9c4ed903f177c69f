#include "softpol/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "softpol/errors.h"
#include "softpol/probe.h"
#include "softpol/proposal.h"
#include "softpol/seeding.h"

namespace softpol {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

TrainMethod parse_train_method(std::string_view name) {
  if (name == "exact") return TrainMethod::kExact;
  if (name == "reinforce") return TrainMethod::kReinforce;
  if (name == "snis") return TrainMethod::kSnis;
  throw ConfigError("unknown training method '" + std::string(name) + "' (expected exact, reinforce or snis)");
}

std::string_view to_string(TrainMethod method) {
  switch (method) {
    case TrainMethod::kExact: return "exact";
    case TrainMethod::kReinforce: return "reinforce";
    case TrainMethod::kSnis: return "snis";
  }
  return "unknown";
}

PolicySampler parse_policy_sampler(std::string_view name) {
  if (name == "gumbel") return PolicySampler::kGumbelMax;
  if (name == "cdf") return PolicySampler::kInverseCdf;
  throw ConfigError("unknown sampler '" + std::string(name) + "' (expected gumbel or cdf)");
}

std::string_view to_string(PolicySampler sampler) {
  return sampler == PolicySampler::kGumbelMax ? "gumbel" : "cdf";
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(optimizer.learning_rate > 0.0) || !std::isfinite(optimizer.learning_rate)) {
    throw ConfigError("learning rate must be positive and finite");
  }
  if (!(budget_seconds >= 0.0) || !std::isfinite(budget_seconds)) {
    throw ConfigError("budget must be a non-negative number of seconds");
  }
  switch (method) {
    case TrainMethod::kExact:
      break;
    case TrainMethod::kReinforce:
      if (samples == 0) throw ConfigError("reinforce needs at least one sample");
      break;
    case TrainMethod::kSnis:
      if (samples < 2) throw ConfigError("snis needs at least two samples");
      if (!(epsilon >= kMinProposalEpsilon && epsilon <= 1.0)) {
        throw ConfigError("epsilon must lie in [1e-6, 1]");
      }
      if (epsilon < 1.0 && topk == 0) throw ConfigError("top-K size must be positive");
      break;
  }
}

double RunReport::mean_epoch_seconds() const {
  if (epochs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& e : epochs) sum += e.epoch_seconds;
  return sum / static_cast<double>(epochs.size());
}

RewardSource indicator_rewards(const EmbeddedDataset& data) {
  return [&data](std::size_t row) -> RewardFn {
    std::span<const ActionId> labels = data.labels[row];
    return [labels](ActionId a) { return indicator_reward(a, labels); };
  };
}

Rng context_rng(std::uint64_t sampling_seed, std::uint64_t step, std::uint64_t slot) {
  return make_rng(sampling_seed, {step, slot});
}

std::vector<std::uint32_t> epoch_order(std::size_t num_rows, std::uint64_t data_seed, std::size_t epoch) {
  std::vector<std::uint32_t> order(num_rows);
  std::iota(order.begin(), order.end(), 0U);
  Rng rng = make_rng(data_seed, {static_cast<std::uint64_t>(epoch)});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

GradientEstimate context_gradient(const TrainConfig& config, const PolicyParams& theta, const ConstVectorRef& x,
                                  const ItemEmbeddings& beta, const MipsIndex& index, const RewardFn& reward,
                                  Rng& rng) {
  switch (config.method) {
    case TrainMethod::kExact:
      return exact_gradient(theta, x, beta, reward, config.exact_guard);
    case TrainMethod::kReinforce:
      return reinforce_mc_gradient(theta, x, beta, reward, config.samples, rng, config.reinforce_sampler);
    case TrainMethod::kSnis: {
      const std::size_t p = beta.num_items();
      if (config.epsilon >= 1.0) {
        return snis_covariance_gradient(theta, x, beta, reward, MixtureProposal::uniform(p), config.samples, rng);
      }
      const Vector h = theta.user_embedding(x);
      const TopKSet topk = index.top_k(h, std::min(config.topk, p));
      probe::add_scores(topk.size());
      const MixtureProposal q = build_proposal(topk, config.epsilon, p);
      return snis_covariance_gradient(theta, x, beta, reward, q, config.samples, rng);
    }
  }
  throw ConfigError("unknown training method");
}

double evaluate(const PolicyParams& theta, const MipsIndex& index, const EmbeddedDataset& test) {
  if (test.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Vector h = theta.user_embedding(test.context(i));
    const TopKSet top = index.top_k(h, 1);
    if (indicator_reward(top.front().id, test.labels[i]) > 0.0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

TrainResult train(const TrainConfig& config, const EmbeddedDataset& train_set, const ItemEmbeddings& beta,
                  const MipsIndex& index, const TrainOptions& options) {
  config.validate();
  const std::size_t dim = beta.dim();
  if (train_set.dim() != dim) throw ConfigError("context dimension does not match the item embeddings");
  if (index.num_items() != beta.num_items() || index.dim() != dim) {
    throw ConfigError("index was built for a different embedding table");
  }
  if (train_set.size() == 0) throw ConfigError("empty training set");

  TrainResult result{PolicyParams(dim), RunReport{}};
  RunReport& report = result.report;
  report.config = config;
  const bool budget_mode = config.budget_seconds > 0.0;
  if (config.epochs == 0 && !budget_mode) return result;

  const RewardSource rewards = options.rewards ? options.rewards : indicator_rewards(train_set);
  Optimizer optimizer(config.optimizer, dim);
  PolicyParams& theta = result.params;
  const std::uint64_t low_ess_before = probe::snapshot().low_ess_events;

  const std::size_t n = train_set.size();
  const double checkpoint_every = config.budget_seconds / 20.0;
  double next_checkpoint = checkpoint_every;
  double trained_seconds = 0.0;
  std::size_t step = 0;
  bool out_of_budget = false;

  for (std::size_t epoch = 0; (config.epochs == 0 || epoch < config.epochs) && !out_of_budget; ++epoch) {
    const std::vector<std::uint32_t> order = epoch_order(n, config.data_seed, epoch);
    double epoch_seconds = 0.0;
    double reward_sum = 0.0;
    double ess_sum = 0.0;
    std::size_t ess_count = 0;
    std::size_t contexts_seen = 0;

    auto record = [&](std::size_t epoch_number, std::vector<EpochRecord>& into) {
      EpochRecord rec;
      rec.epoch = epoch_number;
      rec.steps = step;
      rec.train_reward = contexts_seen ? reward_sum / static_cast<double>(contexts_seen) : 0.0;
      rec.wall_seconds = trained_seconds;
      rec.epoch_seconds = epoch_seconds;
      if (ess_count) rec.ess_mean = ess_sum / static_cast<double>(ess_count);
      if (options.test && config.evaluate_each_epoch) rec.test_reward = evaluate(theta, index, *options.test);
      into.push_back(rec);
    };

    for (std::size_t begin = 0; begin < n; begin += config.batch_size, ++step) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      const std::span<const std::uint32_t> batch(order.data() + begin, end - begin);
      const auto start = Clock::now();

      Matrix grad = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
      for (std::size_t slot = 0; slot < batch.size(); ++slot) {
        const std::uint32_t row = batch[slot];
        Rng rng = context_rng(config.sampling_seed, step, slot);
        GradientEstimate g;
        try {
          g = context_gradient(config, theta, train_set.context(row), beta, index, rewards(row), rng);
        } catch (const NumericError& e) {
          std::ostringstream msg;
          msg << "step " << step << ", context " << row << ": " << e.what();
          throw NumericError(msg.str());
        }
        if (!all_finite(g.grad)) {
          std::ostringstream msg;
          msg << "non-finite gradient at step " << step << ", context " << row << " (ESS "
              << g.effective_sample_size << ", max weight " << g.max_weight << ")";
          throw NumericError(msg.str());
        }
        grad += g.grad;
        reward_sum += g.reward_estimate;
        if (std::isfinite(g.effective_sample_size)) {
          ess_sum += g.effective_sample_size;
          ++ess_count;
        }
        ++contexts_seen;
      }
      grad /= static_cast<double>(batch.size());
      optimizer.step(theta, grad);

      const double elapsed = seconds_since(start);
      epoch_seconds += elapsed;
      trained_seconds += elapsed;
      if (options.on_step) options.on_step(StepInfo{epoch, step, batch, grad});

      if (budget_mode) {
        if (trained_seconds >= config.budget_seconds) {
          out_of_budget = true;
          ++step;
          break;
        }
        if (trained_seconds >= next_checkpoint) {
          record(epoch + 1, report.checkpoints);
          while (next_checkpoint <= trained_seconds) next_checkpoint += checkpoint_every;
        }
      }
    }
    record(epoch + 1, report.epochs);
    if (out_of_budget) report.checkpoints.push_back(report.epochs.back());
  }

  report.total_seconds = trained_seconds;
  report.low_ess_events = probe::snapshot().low_ess_events - low_ess_before;
  return result;
}

}  // namespace softpol

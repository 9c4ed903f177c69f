#pragma once

// Benchmark harness: several training configurations on one dataset and
// index, per-epoch timings, relative speedups and a CSV report.
//
// Bench file format (text, one `key = value` per line, `#` starts a comment):
//
//   format = softpol-bench/1          required, first setting
//   data = prepared/                  prepared dataset dir, relative to this file
//   index = items.idx                 optional; built from the dataset when absent
//   m = 16                            index build settings when `index` is absent
//   ef_construction = 200
//   ef_search = 128
//   baseline = reinforce              run the speedups are relative to (default: first run)
//   budget = 120                      optional fixed time budget in seconds, or
//   budget = anchor:uniform           the anchor run's total training time
//
//   epochs = 5                        run keys before the first section are defaults
//
//   [run reinforce]
//   method = reinforce
//   [run snis-0.8]
//   method = snis
//   epsilon = 0.8
//
// Run keys: method, epsilon, topk, samples, batch, lr, optimizer (sgd|adam),
// epochs, seed (sets all three seeds), data_seed, sampling_seed, init_seed,
// sampler (cdf|gumbel).

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "softpol/data.h"
#include "softpol/mips.h"
#include "softpol/trainer.h"

namespace softpol {

inline constexpr const char* kBenchFormat = "softpol-bench/1";
inline constexpr const char* kReportHeader = "epoch,method,epsilon,topk,samples,reward_test,wall_seconds,ess_mean";
inline constexpr std::size_t kMinTimedEpochs = 5;

struct BenchRun {
  std::string name;
  TrainConfig config;
};

struct BenchSpec {
  std::filesystem::path data;
  std::filesystem::path index;  // empty: build
  MipsConfig index_config;
  std::string baseline;
  double budget_seconds = 0.0;
  std::string budget_anchor;
  std::vector<BenchRun> runs;
};

// Relative paths resolve against `base_dir`. Throws ConfigError with the line number.
BenchSpec parse_bench_spec(std::istream& in, const std::filesystem::path& base_dir = {});
BenchSpec load_bench_spec(const std::filesystem::path& path);

struct BenchmarkOptions {
  const EmbeddedDataset* test = nullptr;
  std::string baseline;            // empty: first run
  double budget_seconds = 0.0;     // > 0: every run trains for this long
  std::string budget_anchor;       // run whose per-epoch total sets the budget for the others
};

// Runs every config in order. Needs >= 2 runs sharing seeds and, outside
// budget mode, >= kMinTimedEpochs epochs each. Fills RunReport::speedup.
std::vector<RunReport> benchmark(const std::vector<BenchRun>& runs, const EmbeddedDataset& train_set,
                                 const ItemEmbeddings& beta, const MipsIndex& index,
                                 const BenchmarkOptions& options = {});

// One row per epoch (budget runs: per checkpoint) of every report.
void write_report_csv(std::ostream& out, const std::vector<RunReport>& reports);
// Human-readable per-run mean epoch time, speedup and final R_test.
void write_summary(std::ostream& out, const std::vector<RunReport>& reports);

}  // namespace softpol

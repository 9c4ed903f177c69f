#include "softpol/bench.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <string_view>

#include "softpol/errors.h"

namespace softpol {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

class LineError {
 public:
  explicit LineError(std::size_t line) : line_(line) {}
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("bench file line " + std::to_string(line_) + ": " + what);
  }

 private:
  std::size_t line_;
};

template <typename T>
T parse_number(std::string_view value, const LineError& err) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) err.fail("bad number '" + std::string(value) + "'");
  return out;
}

void apply_run_key(TrainConfig& c, std::string_view key, std::string_view value, const LineError& err) {
  try {
    if (key == "method") c.method = parse_train_method(value);
    else if (key == "epsilon") c.epsilon = parse_number<double>(value, err);
    else if (key == "topk") c.topk = parse_number<std::size_t>(value, err);
    else if (key == "samples") c.samples = parse_number<std::size_t>(value, err);
    else if (key == "batch") c.batch_size = parse_number<std::size_t>(value, err);
    else if (key == "lr") c.optimizer.learning_rate = parse_number<double>(value, err);
    else if (key == "optimizer") c.optimizer.kind = parse_optimizer_kind(value);
    else if (key == "epochs") c.epochs = parse_number<std::size_t>(value, err);
    else if (key == "seed") c.data_seed = c.sampling_seed = c.init_seed = parse_number<std::uint64_t>(value, err);
    else if (key == "data_seed") c.data_seed = parse_number<std::uint64_t>(value, err);
    else if (key == "sampling_seed") c.sampling_seed = parse_number<std::uint64_t>(value, err);
    else if (key == "init_seed") c.init_seed = parse_number<std::uint64_t>(value, err);
    else if (key == "sampler") c.reinforce_sampler = parse_policy_sampler(value);
    else err.fail("unknown key '" + std::string(key) + "'");
  } catch (const ConfigError& e) {
    if (std::string_view(e.what()).rfind("bench file line", 0) == 0) throw;
    err.fail(e.what());
  }
}

void write_number(std::ostream& out, double v) {
  if (std::isnan(v)) out << "nan";
  else out << v;
}

}  // namespace

BenchSpec parse_bench_spec(std::istream& in, const std::filesystem::path& base_dir) {
  BenchSpec spec;
  TrainConfig defaults;
  bool have_format = false;
  bool in_run = false;
  std::vector<std::vector<std::pair<std::string, std::string>>> run_keys;
  std::vector<std::pair<std::string, std::size_t>> default_keys;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const LineError err(line_no);
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (!have_format) err.fail("'format' must come first");
      if (line.back() != ']') err.fail("unterminated section header");
      const std::string_view inner = trim(line.substr(1, line.size() - 2));
      if (inner.rfind("run", 0) != 0) err.fail("unknown section '" + std::string(inner) + "'");
      const std::string_view name = trim(inner.substr(3));
      if (name.empty()) err.fail("run section needs a name");
      for (const auto& r : spec.runs) {
        if (r.name == name) err.fail("duplicate run '" + std::string(name) + "'");
      }
      spec.runs.push_back(BenchRun{std::string(name), {}});
      run_keys.emplace_back();
      in_run = true;
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) err.fail("expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) err.fail("expected 'key = value'");

    if (!have_format) {
      if (key != "format") err.fail("'format' must come first");
      if (value != kBenchFormat) err.fail("unsupported format '" + std::string(value) + "'");
      have_format = true;
      continue;
    }
    if (in_run) {
      TrainConfig probe;
      apply_run_key(probe, key, value, err);  // validates key and value now
      run_keys.back().emplace_back(key, value);
      continue;
    }
    if (key == "data") spec.data = base_dir / std::string(value);
    else if (key == "index") spec.index = base_dir / std::string(value);
    else if (key == "m") spec.index_config.m = parse_number<std::size_t>(value, err);
    else if (key == "ef_construction") spec.index_config.ef_construction = parse_number<std::size_t>(value, err);
    else if (key == "ef_search") spec.index_config.ef_search = parse_number<std::size_t>(value, err);
    else if (key == "baseline") spec.baseline = value;
    else if (key == "budget") {
      if (value.rfind("anchor:", 0) == 0) {
        spec.budget_anchor = trim(value.substr(7));
        if (spec.budget_anchor.empty()) err.fail("budget anchor needs a run name");
      } else {
        spec.budget_seconds = parse_number<double>(value, err);
        if (!(spec.budget_seconds > 0.0)) err.fail("budget must be positive");
      }
    } else {
      apply_run_key(defaults, key, value, err);
    }
  }
  if (!have_format) throw ConfigError("bench file: missing 'format' line");
  if (spec.data.empty()) throw ConfigError("bench file: missing 'data'");
  if (spec.runs.empty()) throw ConfigError("bench file: no [run ...] sections");

  for (std::size_t r = 0; r < spec.runs.size(); ++r) {
    spec.runs[r].config = defaults;
    for (const auto& [key, value] : run_keys[r]) apply_run_key(spec.runs[r].config, key, value, LineError(0));
  }
  auto known = [&](const std::string& name) {
    for (const auto& r : spec.runs) {
      if (r.name == name) return true;
    }
    return false;
  };
  if (!spec.baseline.empty() && !known(spec.baseline)) {
    throw ConfigError("bench file: baseline '" + spec.baseline + "' is not a run");
  }
  if (!spec.budget_anchor.empty() && !known(spec.budget_anchor)) {
    throw ConfigError("bench file: budget anchor '" + spec.budget_anchor + "' is not a run");
  }
  return spec;
}

BenchSpec load_bench_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open bench file " + path.string());
  return parse_bench_spec(in, path.parent_path());
}

std::vector<RunReport> benchmark(const std::vector<BenchRun>& runs, const EmbeddedDataset& train_set,
                                 const ItemEmbeddings& beta, const MipsIndex& index,
                                 const BenchmarkOptions& options) {
  if (runs.size() < 2) throw ConfigError("benchmark needs at least two runs");
  const bool budget_mode = options.budget_seconds > 0.0 || !options.budget_anchor.empty();
  const TrainConfig& first = runs.front().config;
  std::size_t baseline = 0;
  std::size_t anchor = runs.size();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const TrainConfig& c = runs[i].config;
    if (c.data_seed != first.data_seed || c.sampling_seed != first.sampling_seed || c.init_seed != first.init_seed) {
      throw ConfigError("benchmark runs must share seeds ('" + runs[i].name + "' differs)");
    }
    if (!budget_mode && c.epochs < kMinTimedEpochs) {
      throw ConfigError("run '" + runs[i].name + "' needs at least " + std::to_string(kMinTimedEpochs) +
                        " epochs for timing");
    }
    c.validate();
    if (runs[i].name == options.baseline) baseline = i;
    if (runs[i].name == options.budget_anchor) anchor = i;
  }
  if (!options.baseline.empty() && runs[baseline].name != options.baseline) {
    throw ConfigError("unknown baseline run '" + options.baseline + "'");
  }
  if (!options.budget_anchor.empty() && anchor == runs.size()) {
    throw ConfigError("unknown budget anchor run '" + options.budget_anchor + "'");
  }

  TrainOptions train_options;
  train_options.test = options.test;
  std::vector<RunReport> reports(runs.size());
  double budget = options.budget_seconds;
  if (anchor < runs.size()) {
    reports[anchor] = train(runs[anchor].config, train_set, beta, index, train_options).report;
    reports[anchor].name = runs[anchor].name;
    budget = reports[anchor].total_seconds;
  }
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (i == anchor) continue;
    TrainConfig c = runs[i].config;
    if (budget_mode) {
      c.budget_seconds = budget;
      c.epochs = 0;
    }
    reports[i] = train(c, train_set, beta, index, train_options).report;
    reports[i].name = runs[i].name;
  }

  const double t_base = reports[baseline].mean_epoch_seconds();
  for (auto& r : reports) r.speedup = t_base / r.mean_epoch_seconds();
  return reports;
}

void write_report_csv(std::ostream& out, const std::vector<RunReport>& reports) {
  out << kReportHeader << '\n';
  out << std::setprecision(10);
  for (const auto& r : reports) {
    const auto& rows = r.config.budget_seconds > 0.0 ? r.checkpoints : r.epochs;
    for (const auto& e : rows) {
      out << e.epoch << ',' << to_string(r.config.method) << ',';
      write_number(out, r.config.epsilon);
      out << ',' << r.config.topk << ',' << r.config.samples << ',';
      write_number(out, e.test_reward);
      out << ',';
      write_number(out, e.wall_seconds);
      out << ',';
      write_number(out, e.ess_mean);
      out << '\n';
    }
  }
}

void write_summary(std::ostream& out, const std::vector<RunReport>& reports) {
  out << std::left << std::setw(20) << "run" << std::setw(12) << "method" << std::right << std::setw(14)
      << "epoch_s" << std::setw(10) << "speedup" << std::setw(10) << "R_test" << '\n';
  out << std::fixed;
  for (const auto& r : reports) {
    const double final_reward = r.epochs.empty() ? std::nan("") : r.epochs.back().test_reward;
    out << std::left << std::setw(20) << r.name << std::setw(12) << to_string(r.config.method) << std::right
        << std::setw(14) << std::setprecision(4) << r.mean_epoch_seconds() << std::setw(10) << std::setprecision(2)
        << r.speedup << std::setw(10) << std::setprecision(4) << final_reward << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace softpol

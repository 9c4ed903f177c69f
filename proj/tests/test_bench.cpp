#include <doctest.h>

#include <sstream>

#include "softpol/bench.h"
#include "softpol/errors.h"
#include "softpol/synthetic.h"

using namespace softpol;

namespace {

BenchSpec parse(const std::string& text) {
  std::istringstream in(text);
  return parse_bench_spec(in, "/base");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* kSpec = R"(format = softpol-bench/1
data = prepared   # relative to the bench file
m = 12
ef_search = 300
baseline = rf
lr = 0.01
epochs = 7
seed = 5

[run rf]
method = reinforce
samples = 100

[run fast]
method = snis
epsilon = 0.5
topk = 64
lr = 0.02
)";

}  // namespace

TEST_CASE("bench file: globals, defaults, overrides") {
  const auto spec = parse(kSpec);
  CHECK(spec.data == std::filesystem::path("/base/prepared"));
  CHECK(spec.index.empty());
  CHECK(spec.index_config.m == 12);
  CHECK(spec.index_config.ef_search == 300);
  CHECK(spec.baseline == "rf");
  REQUIRE(spec.runs.size() == 2);
  CHECK(spec.runs[0].name == "rf");
  CHECK(spec.runs[0].config.method == TrainMethod::kReinforce);
  CHECK(spec.runs[0].config.samples == 100);
  CHECK(spec.runs[0].config.optimizer.learning_rate == 0.01);
  CHECK(spec.runs[0].config.epochs == 7);
  CHECK(spec.runs[0].config.sampling_seed == 5);
  CHECK(spec.runs[1].config.method == TrainMethod::kSnis);
  CHECK(spec.runs[1].config.epsilon == 0.5);
  CHECK(spec.runs[1].config.topk == 64);
  CHECK(spec.runs[1].config.optimizer.learning_rate == 0.02);
  CHECK(spec.runs[1].config.data_seed == 5);
}

TEST_CASE("bench file: budget forms") {
  const std::string head = "format = softpol-bench/1\ndata = d\n";
  CHECK(parse(head + "budget = 2.5\n[run a]\n").budget_seconds == 2.5);
  CHECK(parse(head + "budget = anchor:a\n[run a]\n").budget_anchor == "a");
  CHECK(error_of(head + "budget = anchor:zz\n[run a]\n").find("anchor") != std::string::npos);
  CHECK(error_of(head + "budget = -1\n[run a]\n").find("line 3") != std::string::npos);
}

TEST_CASE("bench file: errors carry line numbers") {
  CHECK(error_of("data = x\n").find("line 1") != std::string::npos);
  CHECK(error_of("format = softpol-bench/9\n").find("unsupported") != std::string::npos);
  const std::string head = "format = softpol-bench/1\ndata = d\n";
  CHECK(error_of(head + "[run a]\nmethod = ppo\n").find("line 4") != std::string::npos);
  CHECK(error_of(head + "[run a]\nwidth = 3\n").find("unknown key") != std::string::npos);
  CHECK(error_of(head + "[run a]\nsamples = many\n").find("bad number") != std::string::npos);
  CHECK(error_of(head + "[run a]\n[run a]\n").find("duplicate") != std::string::npos);
  CHECK(error_of(head + "[sweep]\n").find("line 3") != std::string::npos);
  CHECK(error_of(head + "no equals sign\n").find("line 3") != std::string::npos);
  CHECK(error_of(head).find("no [run") != std::string::npos);
  CHECK(error_of(head + "baseline = q\n[run a]\n").find("baseline") != std::string::npos);
}

TEST_CASE("benchmark: report format and equal configurations") {
  const auto task = make_random_task(2000, 6, 128, 20, 3, 1);
  const auto index = MipsIndex::build(task.beta);
  TrainConfig c;
  c.method = TrainMethod::kSnis;
  c.samples = 100;
  c.topk = 32;
  c.batch_size = 16;
  c.epochs = 5;
  c.optimizer.learning_rate = 0.01;
  BenchmarkOptions opts;
  opts.test = &task.test;
  const auto reports = benchmark({{"a", c}, {"b", c}}, task.train, task.beta, index, opts);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].speedup == 1.0);
  CHECK(reports[1].speedup > 0.8);
  CHECK(reports[1].speedup < 1.2);
  CHECK(reports[0].epochs.back().test_reward == reports[1].epochs.back().test_reward);

  std::ostringstream csv;
  write_report_csv(csv, reports);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == kReportHeader);
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 7);
    CHECK(line.find(",snis,") != std::string::npos);
  }
  CHECK(rows == 10);

  std::ostringstream summary;
  write_summary(summary, reports);
  CHECK(summary.str().find("speedup") != std::string::npos);
}

TEST_CASE("benchmark: validation and budget mode") {
  const auto task = make_random_task(500, 4, 64, 10, 2, 2);
  const auto index = MipsIndex::build(task.beta);
  TrainConfig c;
  c.samples = 50;
  c.topk = 16;
  c.batch_size = 16;
  c.epochs = 5;
  CHECK_THROWS_AS(benchmark({{"a", c}}, task.train, task.beta, index), ConfigError);
  TrainConfig other = c;
  other.sampling_seed = 9;
  CHECK_THROWS_AS(benchmark({{"a", c}, {"b", other}}, task.train, task.beta, index), ConfigError);
  TrainConfig short_run = c;
  short_run.epochs = 2;
  CHECK_THROWS_AS(benchmark({{"a", c}, {"b", short_run}}, task.train, task.beta, index), ConfigError);

  BenchmarkOptions opts;
  opts.budget_anchor = "a";
  TrainConfig rf = c;
  rf.method = TrainMethod::kReinforce;
  const auto reports = benchmark({{"a", rf}, {"b", c}}, task.train, task.beta, index, opts);
  CHECK(reports[0].epochs.size() == 5);
  CHECK(reports[1].config.budget_seconds == reports[0].total_seconds);
  CHECK(!reports[1].checkpoints.empty());
  CHECK(reports[1].total_seconds >= reports[0].total_seconds);
}

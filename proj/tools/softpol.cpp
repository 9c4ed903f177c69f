// softpol command-line driver.

#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "softpol/bench.h"
#include "softpol/binary_io.h"
#include "softpol/data.h"
#include "softpol/errors.h"
#include "softpol/mips.h"
#include "softpol/synthetic.h"
#include "softpol/trainer.h"

namespace fs = std::filesystem;
using namespace softpol;

namespace {

void write_csv_file(const fs::path& path, const std::vector<RunReport>& reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_report_csv(out, reports);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline softmax policy learning over large catalogs"};
  app.require_subcommand(1);

  // prepare
  fs::path prep_input, prep_out;
  PrepareOptions prep;
  std::size_t min_interactions = 2;
  auto* prepare = app.add_subcommand("prepare", "Ingest interactions and build embeddings and contexts");
  prepare->add_option("--input", prep_input, "user<TAB>item interactions")->required();
  prepare->add_option("--out", prep_out, "output directory")->required();
  prepare->add_option("--dim", prep.dim, "embedding dimension L")->required();
  prepare->add_option("--seed", prep.seed, "split and SVD seed")->required();
  prepare->add_option("--min-interactions", min_interactions, "drop users with fewer items");
  prepare->add_option("--test-frac", prep.test_fraction, "fraction of users held out for testing");

  // index
  fs::path idx_data, idx_out;
  MipsConfig idx_config;
  std::string idx_variant = "graph";
  auto* index_cmd = app.add_subcommand("index", "Build a MIPS index over the item embeddings");
  index_cmd->add_option("--data", idx_data, "prepared dataset directory")->required();
  index_cmd->add_option("--out", idx_out, "index file")->required();
  index_cmd->add_option("--m", idx_config.m, "graph degree");
  index_cmd->add_option("--ef-construction", idx_config.ef_construction, "build beam width");
  index_cmd->add_option("--ef-search", idx_config.ef_search, "default query beam width");
  index_cmd->add_option("--variant", idx_variant, "graph or exact")->check(CLI::IsMember({"graph", "exact"}));
  index_cmd->add_option("--seed", idx_config.seed, "level assignment seed");

  // train
  fs::path tr_data, tr_index, tr_report, tr_params;
  TrainConfig tr;
  std::string tr_method, tr_optimizer = "adam", tr_sampler = "cdf";
  std::uint64_t tr_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a policy");
  train_cmd->add_option("--data", tr_data, "prepared dataset directory")->required();
  train_cmd->add_option("--index", tr_index, "index file")->required();
  train_cmd->add_option("--method", tr_method, "exact, reinforce or snis")
      ->required()
      ->check(CLI::IsMember({"exact", "reinforce", "snis"}));
  train_cmd->add_option("--epsilon", tr.epsilon, "uniform mixture weight");
  train_cmd->add_option("--topk", tr.topk, "retrieved set size K");
  train_cmd->add_option("--samples", tr.samples, "samples per context S");
  train_cmd->add_option("--batch", tr.batch_size, "contexts per step");
  train_cmd->add_option("--lr", tr.optimizer.learning_rate, "learning rate");
  train_cmd->add_option("--optimizer", tr_optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}));
  train_cmd->add_option("--epochs", tr.epochs, "epochs T");
  train_cmd->add_option("--sampler", tr_sampler, "reinforce policy sampler: cdf or gumbel")
      ->check(CLI::IsMember({"cdf", "gumbel"}));
  train_cmd->add_option("--budget-seconds", tr.budget_seconds, "stop after this much training time");
  train_cmd->add_option("--seed", tr_seed, "data, sampling and init seed")->required();
  train_cmd->add_option("--report", tr_report, "per-epoch CSV")->required();
  train_cmd->add_option("--params-out", tr_params, "where to write theta");

  // eval
  fs::path ev_data, ev_index, ev_params;
  std::size_t ev_ef = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Top-1 hit rate of a trained policy on the test users");
  eval_cmd->add_option("--data", ev_data, "prepared dataset directory")->required();
  eval_cmd->add_option("--index", ev_index, "index file")->required();
  eval_cmd->add_option("--params", ev_params, "theta file")->required();
  eval_cmd->add_option("--ef-search", ev_ef, "override the query beam width");

  // bench
  fs::path bn_spec, bn_report;
  double bn_budget = 0.0;
  auto* bench_cmd = app.add_subcommand("bench", "Run and time several training configurations");
  bench_cmd->add_option("--spec", bn_spec, "bench file")->required();
  bench_cmd->add_option("--report", bn_report, "CSV report")->required();
  bench_cmd->add_option("--budget-seconds", bn_budget, "fixed training time per run");

  // synth
  fs::path sy_out;
  PlantedConfig sy;
  auto* synth_cmd = app.add_subcommand("synth", "Write a planted-topic interaction file");
  synth_cmd->add_option("--out", sy_out, "output TSV")->required();
  synth_cmd->add_option("--users", sy.num_users, "number of users");
  synth_cmd->add_option("--items", sy.num_items, "number of items");
  synth_cmd->add_option("--topics", sy.num_topics, "number of latent topics");
  synth_cmd->add_option("--seed", sy.seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prepare) {
      IngestOptions ingest;
      ingest.min_interactions = min_interactions;
      const InteractionDataset ds = ingest_interactions_file(prep_input, ingest);
      const PreparedDataset data = prepare_dataset(ds, prep, min_interactions);
      save_prepared(data, prep_out);
      std::cout << "users " << ds.num_users() << " (dropped " << ds.dropped_users << "), items " << ds.num_items()
                << ", train " << data.train.size() << ", test " << data.test.size() << '\n';
    } else if (*index_cmd) {
      const PreparedDataset data = load_prepared(idx_data);
      idx_config.variant = idx_variant == "exact" ? MipsVariant::kExact : MipsVariant::kGraph;
      const MipsIndex index = MipsIndex::build(data.beta, idx_config);
      index.save_file(idx_out);
      std::cout << "indexed " << index.num_items() << " items, dim " << index.dim() << '\n';
    } else if (*train_cmd) {
      const PreparedDataset data = load_prepared(tr_data);
      const MipsIndex index = MipsIndex::load_file(tr_index);
      tr.method = parse_train_method(tr_method);
      tr.optimizer.kind = parse_optimizer_kind(tr_optimizer);
      tr.reinforce_sampler = parse_policy_sampler(tr_sampler);
      tr.data_seed = tr.sampling_seed = tr.init_seed = tr_seed;
      TrainOptions options;
      options.test = &data.test;
      TrainResult result = train(tr, data.train, data.beta, index, options);
      result.report.name = tr_method;
      write_csv_file(tr_report, {result.report});
      if (!tr_params.empty()) io::write_matrix_file(tr_params, RowMatrix(result.params.matrix()));
      const auto& epochs = result.report.epochs;
      std::cout << "trained " << epochs.size() << " epochs in " << result.report.total_seconds << " s";
      if (!epochs.empty()) std::cout << ", R_test " << epochs.back().test_reward;
      std::cout << '\n';
    } else if (*eval_cmd) {
      const PreparedDataset data = load_prepared(ev_data);
      MipsIndex index = MipsIndex::load_file(ev_index);
      if (ev_ef > 0) index.set_ef_search(ev_ef);
      const PolicyParams theta{Matrix(io::read_matrix_file(ev_params))};
      std::cout << "R_test " << evaluate(theta, index, data.test) << '\n';
    } else if (*bench_cmd) {
      const BenchSpec spec = load_bench_spec(bn_spec);
      const PreparedDataset data = load_prepared(spec.data);
      const MipsIndex index =
          spec.index.empty() ? MipsIndex::build(data.beta, spec.index_config) : MipsIndex::load_file(spec.index);
      BenchmarkOptions options;
      options.test = &data.test;
      options.baseline = spec.baseline;
      options.budget_seconds = bn_budget > 0.0 ? bn_budget : spec.budget_seconds;
      if (bn_budget <= 0.0) options.budget_anchor = spec.budget_anchor;
      const auto reports = benchmark(spec.runs, data.train, data.beta, index, options);
      write_csv_file(bn_report, reports);
      write_summary(std::cout, reports);
    } else if (*synth_cmd) {
      std::ofstream out(sy_out);
      if (!out) throw std::runtime_error("cannot write " + sy_out.string());
      write_interactions_tsv(out, generate_planted_interactions(sy));
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return EXIT_SUCCESS;
}

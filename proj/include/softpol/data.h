#pragma once

// Session-completion data pipeline:
//
//   interactions -> dense ids -> per-user X/Y split -> user-level train/test
//   -> SVD item embeddings from X_train -> mean-embedding contexts
//
// plus the on-disk layout of a prepared dataset directory:
//
//   meta.json                   shape, seeds, provenance hashes
//   beta.bin                    P x L item embeddings (binary_io.h matrix format)
//   contexts_{train,test}.bin   N_split x L mean-embedding contexts
//   labels_{train,test}.txt     "<user index>: <item> <item> ..." per context row
//   users.txt, items.txt        raw id of each dense index, one per line

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "softpol/core.h"
#include "softpol/rewards.h"

namespace softpol {

using RawInteraction = std::pair<std::uint64_t, std::uint64_t>;  // (user, item)

struct IngestOptions {
  std::size_t min_interactions = 2;
  char delimiter = '\t';
};

struct InteractionDataset {
  // Sorted, duplicate-free dense item ids per dense user.
  std::vector<std::vector<ActionId>> items_by_user;
  std::vector<std::uint64_t> user_ids;  // dense -> raw
  std::vector<std::uint64_t> item_ids;  // dense -> raw
  std::size_t rows_read = 0;
  std::size_t duplicate_rows = 0;
  std::size_t dropped_users = 0;
  // FNV-1a over the parsed (user, item) rows in input order.
  std::uint64_t source_hash = 0;

  std::size_t num_users() const { return items_by_user.size(); }
  std::size_t num_items() const { return item_ids.size(); }
  std::size_t num_interactions() const;
};

// Parses "user<delim>item" rows. A non-numeric first row is treated as a
// header. Throws FormatError (with the line number) on malformed rows and
// when nothing survives the filters.
InteractionDataset ingest_interactions(std::istream& in, const IngestOptions& options = {});
InteractionDataset ingest_interactions_file(const std::filesystem::path& path, const IngestOptions& options = {});
InteractionDataset ingest_pairs(std::span<const RawInteraction> rows, const IngestOptions& options = {});

struct SessionSplit {
  std::vector<std::vector<ActionId>> observed;  // X, sorted
  std::vector<std::vector<ActionId>> held_out;  // Y, sorted
  std::uint64_t seed = 0;

  std::size_t num_users() const { return observed.size(); }
};

// Uniform random partition of every user's items with |X| = ceil(n/2).
SessionSplit session_split(const InteractionDataset& ds, std::uint64_t seed);

struct UserPartition {
  std::vector<std::uint32_t> train;  // sorted user indices
  std::vector<std::uint32_t> test;
};

UserPartition train_test_split(const SessionSplit& split, double test_fraction, std::uint64_t seed);

struct SvdOptions {
  std::size_t oversampling = 10;
  std::size_t power_iterations = 2;
};

struct TruncatedSvd {
  Matrix u;        // rows x rank
  Vector sigma;    // descending
  Matrix v;        // cols x rank
};

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Randomized range finder + small dense SVD. Deterministic given `seed`.
TruncatedSvd randomized_svd(const SparseRowMatrix& a, std::size_t rank, std::uint64_t seed,
                            const SvdOptions& options = {});

// Binary users x items matrix of the observed (X) items of `users`.
SparseRowMatrix observed_matrix(const SessionSplit& split, std::span<const std::uint32_t> users,
                                std::size_t num_items);

// beta = V_L Sigma_L of the observed train matrix, computed as A^T U_L so that
// items absent from X_train get exactly zero rows.
ItemEmbeddings compute_item_embeddings(const SessionSplit& split, std::span<const std::uint32_t> train_users,
                                       std::size_t num_items, std::size_t dim, std::uint64_t seed,
                                       const SvdOptions& options = {});

struct EmbeddedDataset {
  RowMatrix contexts;                         // one row per user
  std::vector<std::vector<ActionId>> labels;  // Y per row, sorted
  std::vector<std::uint32_t> users;           // dense user index per row

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(contexts.cols()); }
  auto context(std::size_t i) const { return contexts.row(static_cast<Eigen::Index>(i)).transpose(); }
  RewardContext reward_context(std::size_t i) const { return {labels[i], nullptr}; }
};

// x_i = mean of beta over X_i.
EmbeddedDataset mean_embedding_contexts(const SessionSplit& split, std::span<const std::uint32_t> users,
                                        const ItemEmbeddings& beta);

struct PrepareOptions {
  std::size_t dim = 32;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  SvdOptions svd;
};

struct PreparedMeta {
  std::size_t num_items = 0;
  std::size_t num_users = 0;
  std::size_t dim = 0;
  std::size_t num_train = 0;
  std::size_t num_test = 0;
  std::size_t dropped_users = 0;
  std::size_t min_interactions = 2;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  std::uint64_t partition_seed = 0;
  std::uint64_t svd_seed = 0;
  std::uint64_t input_hash = 0;
  // Hash of the (user, observed items) lists the embeddings were fitted on.
  std::uint64_t observed_train_hash = 0;
  std::uint64_t beta_hash = 0;
};

struct PreparedDataset {
  PreparedMeta meta;
  ItemEmbeddings beta;
  EmbeddedDataset train;
  EmbeddedDataset test;
  std::vector<std::uint64_t> user_ids;
  std::vector<std::uint64_t> item_ids;
};

PreparedDataset prepare_dataset(const InteractionDataset& ds, const PrepareOptions& options,
                                std::size_t min_interactions = 2);

std::uint64_t hash_observed(const SessionSplit& split, std::span<const std::uint32_t> users);

void save_prepared(const PreparedDataset& data, const std::filesystem::path& dir);
PreparedDataset load_prepared(const std::filesystem::path& dir);

void write_labels(std::ostream& out, const EmbeddedDataset& ds);

}  // namespace softpol

#include "softpol/data.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <sstream>
#include <string_view>

#include <json.hpp>

#include "softpol/binary_io.h"
#include "softpol/errors.h"
#include "softpol/seeding.h"

namespace softpol {
namespace {

bool parse_u64(std::string_view field, std::uint64_t& out) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  if (field.empty()) return false;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

bool parse_row(std::string_view line, char delim, RawInteraction& row) {
  const auto cut = line.find(delim);
  if (cut == std::string_view::npos) return false;
  std::string_view rest = line.substr(cut + 1);
  const auto cut2 = rest.find(delim);
  if (cut2 != std::string_view::npos) rest = rest.substr(0, cut2);
  return parse_u64(line.substr(0, cut), row.first) && parse_u64(rest, row.second);
}

bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

}  // namespace

std::size_t InteractionDataset::num_interactions() const {
  std::size_t n = 0;
  for (const auto& items : items_by_user) n += items.size();
  return n;
}

InteractionDataset ingest_pairs(std::span<const RawInteraction> rows, const IngestOptions& options) {
  if (rows.empty()) throw FormatError("empty interaction dataset");
  if (options.min_interactions < 1) throw ConfigError("min_interactions must be >= 1");

  io::Fnv1a hash;
  std::map<std::uint64_t, std::vector<std::uint64_t>> by_user;
  for (const auto& [user, item] : rows) {
    hash.update_u64(user);
    hash.update_u64(item);
    by_user[user].push_back(item);
  }

  InteractionDataset ds;
  ds.rows_read = rows.size();
  ds.source_hash = hash.digest();
  std::vector<std::uint64_t> kept_items;
  for (auto& [user, items] : by_user) {
    std::sort(items.begin(), items.end());
    const auto last = std::unique(items.begin(), items.end());
    ds.duplicate_rows += static_cast<std::size_t>(items.end() - last);
    items.erase(last, items.end());
    if (items.size() < options.min_interactions) {
      ++ds.dropped_users;
      items.clear();
      continue;
    }
    kept_items.insert(kept_items.end(), items.begin(), items.end());
  }
  std::sort(kept_items.begin(), kept_items.end());
  kept_items.erase(std::unique(kept_items.begin(), kept_items.end()), kept_items.end());
  if (kept_items.empty()) {
    throw FormatError("no user has at least " + std::to_string(options.min_interactions) + " interactions");
  }
  ds.item_ids = kept_items;

  for (const auto& [user, items] : by_user) {
    if (items.empty()) continue;
    ds.user_ids.push_back(user);
    std::vector<ActionId> dense(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      dense[i] = static_cast<ActionId>(std::lower_bound(kept_items.begin(), kept_items.end(), items[i]) -
                                       kept_items.begin());
    }
    ds.items_by_user.push_back(std::move(dense));
  }
  return ds;
}

InteractionDataset ingest_interactions(std::istream& in, const IngestOptions& options) {
  std::vector<RawInteraction> rows;
  std::string line;
  std::size_t line_no = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    RawInteraction row;
    if (parse_row(line, options.delimiter, row)) {
      rows.push_back(row);
    } else if (!seen_content) {
      // header
    } else {
      throw FormatError("line " + std::to_string(line_no) + ": expected '<user id><delim><item id>', got '" + line +
                        "'");
    }
    seen_content = true;
  }
  return ingest_pairs(rows, options);
}

InteractionDataset ingest_interactions_file(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return ingest_interactions(in, options);
}

SessionSplit session_split(const InteractionDataset& ds, std::uint64_t seed) {
  SessionSplit split;
  split.seed = seed;
  split.observed.resize(ds.num_users());
  split.held_out.resize(ds.num_users());
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    std::vector<ActionId> items = ds.items_by_user[u];
    if (items.size() < 2) throw ConfigError("session split needs at least 2 items per user");
    Rng rng = make_rng(seed, {u});
    std::shuffle(items.begin(), items.end(), rng);
    const std::size_t n_observed = (items.size() + 1) / 2;
    split.observed[u].assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_observed));
    split.held_out[u].assign(items.begin() + static_cast<std::ptrdiff_t>(n_observed), items.end());
    std::sort(split.observed[u].begin(), split.observed[u].end());
    std::sort(split.held_out[u].begin(), split.held_out[u].end());
  }
  return split;
}

UserPartition train_test_split(const SessionSplit& split, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");
  const std::size_t n = split.num_users();
  std::vector<std::uint32_t> users(n);
  std::iota(users.begin(), users.end(), 0u);
  Rng rng(splitmix64(seed));
  std::shuffle(users.begin(), users.end(), rng);
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n >= 2) n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  UserPartition part;
  part.test.assign(users.begin(), users.begin() + static_cast<std::ptrdiff_t>(n_test));
  part.train.assign(users.begin() + static_cast<std::ptrdiff_t>(n_test), users.end());
  std::sort(part.test.begin(), part.test.end());
  std::sort(part.train.begin(), part.train.end());
  return part;
}

SparseRowMatrix observed_matrix(const SessionSplit& split, std::span<const std::uint32_t> users,
                                std::size_t num_items) {
  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t r = 0; r < users.size(); ++r) {
    for (ActionId a : split.observed.at(users[r])) {
      if (a >= num_items) throw IndexError("observed item out of range");
      entries.emplace_back(static_cast<int>(r), static_cast<int>(a), 1.0);
    }
  }
  SparseRowMatrix m(static_cast<Eigen::Index>(users.size()), static_cast<Eigen::Index>(num_items));
  m.setFromTriplets(entries.begin(), entries.end());
  return m;
}

ItemEmbeddings compute_item_embeddings(const SessionSplit& split, std::span<const std::uint32_t> train_users,
                                       std::size_t num_items, std::size_t dim, std::uint64_t seed,
                                       const SvdOptions& options) {
  if (dim == 0 || dim > num_items || dim > train_users.size()) {
    throw ConfigError("embedding dimension " + std::to_string(dim) + " must be in [1, min(P=" +
                      std::to_string(num_items) + ", N_train=" + std::to_string(train_users.size()) + ")]");
  }
  const SparseRowMatrix a = observed_matrix(split, train_users, num_items);
  const TruncatedSvd svd = randomized_svd(a, dim, seed, options);
  RowMatrix beta = a.transpose() * svd.u;
  return ItemEmbeddings(std::move(beta));
}

EmbeddedDataset mean_embedding_contexts(const SessionSplit& split, std::span<const std::uint32_t> users,
                                        const ItemEmbeddings& beta) {
  EmbeddedDataset out;
  out.contexts = RowMatrix::Zero(static_cast<Eigen::Index>(users.size()), static_cast<Eigen::Index>(beta.dim()));
  out.labels.resize(users.size());
  out.users.assign(users.begin(), users.end());
  for (std::size_t r = 0; r < users.size(); ++r) {
    const auto& observed = split.observed.at(users[r]);
    if (observed.empty()) throw ConfigError("user with no observed items");
    auto row = out.contexts.row(static_cast<Eigen::Index>(r));
    for (ActionId a : observed) {
      beta.check_action(a);
      row += beta.matrix().row(a);
    }
    row /= static_cast<double>(observed.size());
    out.labels[r] = split.held_out.at(users[r]);
  }
  return out;
}

std::uint64_t hash_observed(const SessionSplit& split, std::span<const std::uint32_t> users) {
  io::Fnv1a h;
  for (std::uint32_t u : users) {
    h.update_u64(u);
    h.update_u64(split.observed.at(u).size());
    for (ActionId a : split.observed.at(u)) h.update_u64(a);
  }
  return h.digest();
}

PreparedDataset prepare_dataset(const InteractionDataset& ds, const PrepareOptions& options,
                                std::size_t min_interactions) {
  PreparedMeta meta;
  meta.seed = options.seed;
  meta.split_seed = derive_seed(options.seed, {1});
  meta.partition_seed = derive_seed(options.seed, {2});
  meta.svd_seed = derive_seed(options.seed, {3});
  meta.test_fraction = options.test_fraction;
  meta.min_interactions = min_interactions;
  meta.num_items = ds.num_items();
  meta.num_users = ds.num_users();
  meta.dim = options.dim;
  meta.dropped_users = ds.dropped_users;
  meta.input_hash = ds.source_hash;

  const SessionSplit split = session_split(ds, meta.split_seed);
  const UserPartition part = train_test_split(split, options.test_fraction, meta.partition_seed);
  ItemEmbeddings beta =
      compute_item_embeddings(split, part.train, ds.num_items(), options.dim, meta.svd_seed, options.svd);
  meta.num_train = part.train.size();
  meta.num_test = part.test.size();
  meta.observed_train_hash = hash_observed(split, part.train);
  meta.beta_hash = io::hash_matrix(beta.matrix());

  EmbeddedDataset train = mean_embedding_contexts(split, part.train, beta);
  EmbeddedDataset test = mean_embedding_contexts(split, part.test, beta);
  return PreparedDataset{meta, std::move(beta), std::move(train), std::move(test), ds.user_ids, ds.item_ids};
}

void write_labels(std::ostream& out, const EmbeddedDataset& ds) {
  for (std::size_t r = 0; r < ds.size(); ++r) {
    out << ds.users[r] << ':';
    for (ActionId a : ds.labels[r]) out << ' ' << a;
    out << '\n';
  }
}

namespace {

std::vector<std::pair<std::uint32_t, std::vector<ActionId>>> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::pair<std::uint32_t, std::vector<ActionId>>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto colon = line.find(':');
    std::uint64_t user = 0;
    if (colon == std::string::npos || !parse_u64(std::string_view(line).substr(0, colon), user)) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected '<user>: <items>'");
    }
    std::istringstream items(line.substr(colon + 1));
    std::vector<ActionId> labels;
    std::uint64_t a = 0;
    while (items >> a) labels.push_back(static_cast<ActionId>(a));
    std::sort(labels.begin(), labels.end());
    rows.emplace_back(static_cast<std::uint32_t>(user), std::move(labels));
  }
  return rows;
}

EmbeddedDataset load_split(const std::filesystem::path& dir, const std::string& name) {
  EmbeddedDataset ds;
  ds.contexts = io::read_matrix_file(dir / ("contexts_" + name + ".bin"));
  for (auto& [user, labels] : read_labels(dir / ("labels_" + name + ".txt"))) {
    ds.users.push_back(user);
    ds.labels.push_back(std::move(labels));
  }
  if (static_cast<std::size_t>(ds.contexts.rows()) != ds.labels.size()) {
    throw FormatError("contexts_" + name + ".bin and labels_" + name + ".txt disagree on row count");
  }
  return ds;
}

void write_ids(const std::filesystem::path& path, const std::vector<std::uint64_t>& ids) {
  std::ofstream out(path);
  for (auto id : ids) out << id << '\n';
}

std::vector<std::uint64_t> read_ids(const std::filesystem::path& path) {
  std::vector<std::uint64_t> ids;
  std::ifstream in(path);
  if (!in) return ids;
  std::uint64_t v = 0;
  while (in >> v) ids.push_back(v);
  return ids;
}

}  // namespace

void save_prepared(const PreparedDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& m = data.meta;
  nlohmann::json meta = {
      {"format", "softpol-prepared/1"},
      {"num_items", m.num_items},
      {"num_users", m.num_users},
      {"dim", m.dim},
      {"num_train", m.num_train},
      {"num_test", m.num_test},
      {"dropped_users", m.dropped_users},
      {"min_interactions", m.min_interactions},
      {"test_fraction", m.test_fraction},
      {"seeds", {{"seed", m.seed}, {"split", m.split_seed}, {"partition", m.partition_seed}, {"svd", m.svd_seed}}},
      {"provenance",
       {{"input_hash", hex64(m.input_hash)},
        {"embedding_source", "observed items of train users"},
        {"observed_train_hash", hex64(m.observed_train_hash)},
        {"beta_hash", hex64(m.beta_hash)}}},
  };
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
  io::write_matrix_file(dir / "beta.bin", data.beta.matrix());
  io::write_matrix_file(dir / "contexts_train.bin", data.train.contexts);
  io::write_matrix_file(dir / "contexts_test.bin", data.test.contexts);
  std::ofstream train_labels(dir / "labels_train.txt");
  write_labels(train_labels, data.train);
  std::ofstream test_labels(dir / "labels_test.txt");
  write_labels(test_labels, data.test);
  write_ids(dir / "users.txt", data.user_ids);
  write_ids(dir / "items.txt", data.item_ids);
}

PreparedDataset load_prepared(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw FormatError("missing " + (dir / "meta.json").string());
  nlohmann::json j;
  try {
    meta_in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta.json: " + std::string(e.what()));
  }
  if (j.value("format", "") != "softpol-prepared/1") throw FormatError("unsupported prepared dataset format");
  PreparedMeta m;
  try {
    m.num_items = j.at("num_items").get<std::size_t>();
    m.num_users = j.at("num_users").get<std::size_t>();
    m.dim = j.at("dim").get<std::size_t>();
    m.num_train = j.at("num_train").get<std::size_t>();
    m.num_test = j.at("num_test").get<std::size_t>();
    m.dropped_users = j.at("dropped_users").get<std::size_t>();
    m.min_interactions = j.at("min_interactions").get<std::size_t>();
    m.test_fraction = j.at("test_fraction").get<double>();
    const auto& seeds = j.at("seeds");
    m.seed = seeds.at("seed").get<std::uint64_t>();
    m.split_seed = seeds.at("split").get<std::uint64_t>();
    m.partition_seed = seeds.at("partition").get<std::uint64_t>();
    m.svd_seed = seeds.at("svd").get<std::uint64_t>();
    const auto& prov = j.at("provenance");
    m.input_hash = parse_hex64(prov.at("input_hash").get<std::string>());
    m.observed_train_hash = parse_hex64(prov.at("observed_train_hash").get<std::string>());
    m.beta_hash = parse_hex64(prov.at("beta_hash").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta.json: " + std::string(e.what()));
  }

  RowMatrix beta = io::read_matrix_file(dir / "beta.bin");
  if (static_cast<std::size_t>(beta.rows()) != m.num_items || static_cast<std::size_t>(beta.cols()) != m.dim) {
    throw FormatError("beta.bin shape does not match meta.json");
  }
  if (io::hash_matrix(beta) != m.beta_hash) throw FormatError("beta.bin does not match the recorded hash");
  PreparedDataset data{m, ItemEmbeddings(std::move(beta)), load_split(dir, "train"), load_split(dir, "test"),
                       read_ids(dir / "users.txt"), read_ids(dir / "items.txt")};
  if (data.train.dim() != m.dim || data.test.dim() != m.dim) throw FormatError("context dimension mismatch");
  return data;
}

}  // namespace softpol

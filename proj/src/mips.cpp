#include "softpol/mips.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <queue>
#include <string>

#include "softpol/binary_io.h"
#include "softpol/errors.h"

namespace softpol {
namespace {

constexpr std::string_view kIndexMagic = "SPMIPSIX";
// Extra layer-0 slots reserved for reverse links added by the connectivity repair.
constexpr std::size_t kRepairSlots = 4;

struct VisitedTable {
  std::vector<std::uint32_t> marks;
  std::uint32_t generation = 0;

  void reset(std::size_t n) {
    if (marks.size() < n) {
      marks.assign(n, 0);
      generation = 0;
    }
    if (++generation == 0) {
      std::fill(marks.begin(), marks.end(), 0);
      generation = 1;
    }
  }
  bool visit(std::uint32_t id) {
    if (marks[id] == generation) return false;
    marks[id] = generation;
    return true;
  }
};

VisitedTable& visited_table() {
  thread_local VisitedTable table;
  return table;
}

void warn_k_clamped(std::size_t k, std::size_t p) {
  static bool warned = false;
  if (!warned) {
    warned = true;
    std::cerr << "softpol: warning: requested top-" << k << " from a catalog of " << p << " items; clamping\n";
  }
}

}  // namespace

MipsIndex MipsIndex::build(const ItemEmbeddings& beta, const MipsConfig& config) {
  if (beta.num_items() == 0 || beta.dim() == 0) throw ConfigError("cannot index an empty embedding matrix");
  if (config.variant == MipsVariant::kGraph &&
      (config.m < 2 || config.ef_construction == 0 || config.ef_search == 0)) {
    throw ConfigError("graph index parameters must be positive (m >= 2)");
  }
  if (beta.num_items() > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("catalog too large");

  MipsIndex index;
  index.config_ = config;
  index.vectors_ = beta.matrix();
  if (config.variant == MipsVariant::kExact) return index;
  index.init_search_vectors();

  const auto n = static_cast<std::uint32_t>(beta.num_items());
  index.l0_stride_ = 1 + 2 * config.m + kRepairSlots;
  index.l0_.assign(static_cast<std::size_t>(n) * index.l0_stride_, 0);
  index.upper_.resize(n);
  index.levels_.resize(n);

  Rng rng(config.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double level_mult = 1.0 / std::log(static_cast<double>(config.m));
  for (std::uint32_t i = 0; i < n; ++i) {
    const double u = 1.0 - unif(rng);  // (0, 1]
    index.levels_[i] = static_cast<int>(std::floor(-std::log(u) * level_mult));
    index.upper_[i].resize(static_cast<std::size_t>(index.levels_[i]));
  }
  for (std::uint32_t i = 0; i < n; ++i) index.insert(i, index.levels_[i]);
  index.repair_connectivity();
  return index;
}

double MipsIndex::inner(std::uint32_t node, const double* q) const {
  const double* v = vectors_.data() + static_cast<std::size_t>(node) * dim();
  double s = 0.0;
  for (std::size_t j = 0; j < dim(); ++j) s += v[j] * q[j];
  return s;
}

void MipsIndex::init_search_vectors() {
  constexpr std::size_t kFloatsPerLine = 16;
  search_stride_ = (dim() + kFloatsPerLine - 1) / kFloatsPerLine * kFloatsPerLine;
  search_vectors_.assign(num_items() * search_stride_, 0.0f);
  for (std::size_t i = 0; i < num_items(); ++i) {
    const double* row = vectors_.data() + i * dim();
    std::copy(row, row + dim(), search_vectors_.begin() + static_cast<std::ptrdiff_t>(i * search_stride_));
  }
}

// Rows and queries are zero-padded to a multiple of 16 floats.
float MipsIndex::inner_f(std::uint32_t node, const float* q) const {
  typedef float Lanes __attribute__((vector_size(16)));
  const float* v = search_vector(node);
  Lanes acc{0.0f, 0.0f, 0.0f, 0.0f};
  for (std::size_t j = 0; j < search_stride_; j += 4) {
    Lanes a, b;
    std::memcpy(&a, v + j, sizeof a);
    std::memcpy(&b, q + j, sizeof b);
    acc += a * b;
  }
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

void MipsIndex::prefetch(std::uint32_t node) const { __builtin_prefetch(search_vector(node)); }

const float* MipsIndex::search_vector(std::uint32_t node) const {
  return search_vectors_.data() + static_cast<std::size_t>(node) * search_stride_;
}

std::size_t MipsIndex::capacity(int level) const { return level == 0 ? 2 * config_.m : config_.m; }

std::span<const std::uint32_t> MipsIndex::neighbors(std::uint32_t node, std::size_t level) const {
  if (level == 0) {
    const std::uint32_t* base = l0_.data() + static_cast<std::size_t>(node) * l0_stride_;
    return {base + 1, base[0]};
  }
  const auto& v = upper_[node][level - 1];
  return {v.data(), v.size()};
}

void MipsIndex::set_neighbors(std::uint32_t node, int level, std::span<const std::uint32_t> ids) {
  if (level == 0) {
    std::uint32_t* base = l0_.data() + static_cast<std::size_t>(node) * l0_stride_;
    base[0] = static_cast<std::uint32_t>(ids.size());
    std::copy(ids.begin(), ids.end(), base + 1);
  } else {
    upper_[node][static_cast<std::size_t>(level) - 1].assign(ids.begin(), ids.end());
  }
}

std::uint32_t MipsIndex::greedy_descend(const float* q, std::uint32_t entry, int level) const {
  std::uint32_t cur = entry;
  float cur_score = inner_f(cur, q);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::uint32_t nb : neighbors(cur, static_cast<std::size_t>(level))) {
      const float s = inner_f(nb, q);
      if (s > cur_score || (s == cur_score && nb < cur)) {
        cur = nb;
        cur_score = s;
        changed = true;
      }
    }
  }
  return cur;
}

std::vector<MipsIndex::Candidate> MipsIndex::search_layer(const float* q, std::uint32_t entry, std::size_t ef,
                                                          int level) const {
  // Beam kept as one array sorted by descending score, at most ef long. The
  // search expands the best unexpanded entry until every entry is expanded.
  // Exact ties are resolved by the final sort.
  struct Slot {
    Candidate c;
    bool expanded;
  };
  thread_local std::vector<Slot> pool;
  pool.clear();
  pool.reserve(ef + 1);

  VisitedTable& visited = visited_table();
  visited.reset(num_items());
  visited.visit(entry);
  pool.push_back({{inner_f(entry, q), entry}, false});

  std::size_t next = 0;
  while (next < pool.size()) {
    pool[next].expanded = true;
    const auto nbs = neighbors(pool[next].c.id, static_cast<std::size_t>(level));
    std::size_t lowest_new = pool.size();
    for (std::uint32_t nb : nbs) prefetch(nb);
    for (std::uint32_t nb : nbs) {
      if (!visited.visit(nb)) continue;
      const float score = inner_f(nb, q);
      if (pool.size() >= ef && score < pool.back().c.score) continue;
      auto pos = std::upper_bound(pool.begin(), pool.end(), score,
                                  [](float v, const Slot& s) { return v > s.c.score; });
      lowest_new = std::min(lowest_new, static_cast<std::size_t>(pos - pool.begin()));
      pool.insert(pos, Slot{{score, nb}, false});
      if (pool.size() > ef) pool.pop_back();
    }
    next = std::min(next + 1, lowest_new);
    while (next < pool.size() && pool[next].expanded) ++next;
  }

  std::vector<Candidate> results;
  results.reserve(pool.size());
  for (const Slot& s : pool) results.push_back(s.c);
  std::sort(results.begin(), results.end(),
            [](const Candidate& a, const Candidate& b) { return ranks_before({a.id, a.score}, {b.id, b.score}); });
  return results;
}

// Diversity heuristic: keep a candidate only if no already-kept neighbor has a
// larger inner product with it than the base point does.
std::vector<std::uint32_t> MipsIndex::select_neighbors(const std::vector<Candidate>& ranked,
                                                       std::size_t max_count) const {
  std::vector<std::uint32_t> kept;
  kept.reserve(max_count);
  for (const Candidate& c : ranked) {
    if (kept.size() >= max_count) break;
    const float* cv = search_vector(c.id);
    bool good = true;
    for (std::uint32_t r : kept) {
      if (inner_f(r, cv) > c.score) {
        good = false;
        break;
      }
    }
    if (good) kept.push_back(c.id);
  }
  return kept;
}

void MipsIndex::add_link(std::uint32_t from, std::uint32_t to, int level) {
  const auto current = neighbors(from, static_cast<std::size_t>(level));
  if (std::find(current.begin(), current.end(), to) != current.end()) return;
  if (current.size() < capacity(level)) {
    std::vector<std::uint32_t> next(current.begin(), current.end());
    next.push_back(to);
    set_neighbors(from, level, next);
    return;
  }
  const float* base = search_vector(from);
  std::vector<Candidate> pool;
  pool.reserve(current.size() + 1);
  for (std::uint32_t id : current) pool.push_back({inner_f(id, base), id});
  pool.push_back({inner_f(to, base), to});
  std::sort(pool.begin(), pool.end(),
            [](const Candidate& a, const Candidate& b) { return ranks_before({a.id, a.score}, {b.id, b.score}); });
  set_neighbors(from, level, select_neighbors(pool, capacity(level)));
}

void MipsIndex::insert(std::uint32_t node, int level) {
  if (node == 0) {
    entry_point_ = 0;
    max_level_ = level;
    return;
  }
  const float* q = search_vector(node);
  std::uint32_t cur = entry_point_;
  for (int l = max_level_; l > level; --l) cur = greedy_descend(q, cur, l);

  for (int l = std::min(level, max_level_); l >= 0; --l) {
    std::vector<Candidate> found = search_layer(q, cur, config_.ef_construction, l);
    std::erase_if(found, [node](const Candidate& c) { return c.id == node; });
    if (found.empty()) continue;
    const std::vector<std::uint32_t> chosen = select_neighbors(found, config_.m);
    set_neighbors(node, l, chosen);
    for (std::uint32_t nb : chosen) add_link(nb, node, l);
    cur = found.front().id;
  }
  if (level > max_level_) {
    max_level_ = level;
    entry_point_ = node;
  }
}

void MipsIndex::repair_connectivity() {
  const auto n = static_cast<std::uint32_t>(num_items());
  std::vector<char> reached(n, 0);
  std::vector<std::uint32_t> stack;
  auto flood = [&](std::uint32_t from) {
    if (reached[from]) return;
    reached[from] = 1;
    stack.push_back(from);
    while (!stack.empty()) {
      const std::uint32_t u = stack.back();
      stack.pop_back();
      for (std::uint32_t v : neighbors(u, 0)) {
        if (!reached[v]) {
          reached[v] = 1;
          stack.push_back(v);
        }
      }
    }
  };
  flood(entry_point_);

  const std::size_t hard_cap = l0_stride_ - 1;
  for (std::uint32_t u = 0; u < n; ++u) {
    if (reached[u]) continue;
    const float* q = search_vector(u);
    const std::uint32_t start = greedy_descend(q, entry_point_, 0);
    bool linked = false;
    for (const Candidate& c : search_layer(q, start, config_.ef_construction, 0)) {
      if (c.id == u || !reached[c.id]) continue;
      const auto nb = neighbors(c.id, 0);
      if (nb.size() >= hard_cap) continue;
      std::vector<std::uint32_t> next(nb.begin(), nb.end());
      next.push_back(u);
      set_neighbors(c.id, 0, next);
      linked = true;
      break;
    }
    if (!linked) throw std::logic_error("graph index repair found no reachable node with a free slot");
    flood(u);
  }
}

std::size_t MipsIndex::reachable_from_entry() const {
  if (config_.variant == MipsVariant::kExact) return num_items();
  std::vector<char> reached(num_items(), 0);
  std::vector<std::uint32_t> stack{entry_point_};
  reached[entry_point_] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const std::uint32_t u = stack.back();
    stack.pop_back();
    for (std::uint32_t v : neighbors(u, 0)) {
      if (!reached[v]) {
        reached[v] = 1;
        ++count;
        stack.push_back(v);
      }
    }
  }
  return count;
}

TopKSet MipsIndex::top_k(std::span<const double> query, std::size_t k) const {
  if (query.size() != dim()) {
    throw ConfigError("query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                      std::to_string(dim()));
  }
  if (k == 0) throw ConfigError("top_k requires K >= 1");
  if (k > num_items()) {
    warn_k_clamped(k, num_items());
    k = num_items();
  }
  if (config_.variant == MipsVariant::kExact) return exact_top_k(query.data(), k);

  // Every inner product with the zero vector is 0; the tie rule then selects the lowest ids.
  if (std::all_of(query.begin(), query.end(), [](double v) { return v == 0.0; })) {
    TopKSet out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = {static_cast<ActionId>(i), 0.0};
    return out;
  }
  return graph_top_k(query.data(), k);
}

TopKSet MipsIndex::exact_top_k(const double* q, std::size_t k) const {
  const Eigen::Map<const Vector> qv(q, static_cast<Eigen::Index>(dim()));
  const Vector scores = vectors_ * qv;
  TopKSet all(num_items());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = {static_cast<ActionId>(i), scores[static_cast<Eigen::Index>(i)]};
  if (k < all.size()) {
    std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), ranks_before);
    all.resize(k);
  }
  std::sort(all.begin(), all.end(), ranks_before);
  return all;
}

TopKSet MipsIndex::graph_top_k(const double* q, std::size_t k) const {
  std::vector<float> qf(search_stride_, 0.0f);
  std::copy(q, q + dim(), qf.begin());
  std::uint32_t cur = entry_point_;
  for (int l = max_level_; l > 0; --l) cur = greedy_descend(qf.data(), cur, l);
  const std::vector<Candidate> found = search_layer(qf.data(), cur, std::max(config_.ef_search, k), 0);
  // The beam runs in single precision; the returned set is rescored exactly.
  TopKSet out;
  out.reserve(found.size());
  for (const Candidate& c : found) out.push_back({c.id, inner(c.id, q)});
  std::sort(out.begin(), out.end(), ranks_before);
  if (out.size() > k) out.resize(k);
  return out;
}

void MipsIndex::save(std::ostream& out) const {
  out.write(kIndexMagic.data(), kIndexMagic.size());
  io::write_u32(out, kFormatVersion);
  io::write_u64(out, num_items());
  io::write_u64(out, dim());
  io::write_u32(out, static_cast<std::uint32_t>(config_.variant));
  io::write_u64(out, config_.m);
  io::write_u64(out, config_.ef_construction);
  io::write_u64(out, config_.ef_search);
  io::write_u64(out, config_.seed);
  io::write_u64(out, io::hash_matrix(vectors_));
  if (config_.variant == MipsVariant::kGraph) {
    io::write_u32(out, entry_point_);
    io::write_u32(out, static_cast<std::uint32_t>(max_level_));
    for (std::uint32_t node = 0; node < num_items(); ++node) {
      io::write_u32(out, static_cast<std::uint32_t>(levels_[node]));
      for (int l = 0; l <= levels_[node]; ++l) {
        const auto nb = neighbors(node, static_cast<std::size_t>(l));
        io::write_u32(out, static_cast<std::uint32_t>(nb.size()));
        for (std::uint32_t id : nb) io::write_u32(out, id);
      }
    }
  }
  for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
    for (Eigen::Index j = 0; j < vectors_.cols(); ++j) io::write_f64(out, vectors_(i, j));
  }
  if (!out) throw FormatError("failed writing index");
}

MipsIndex MipsIndex::load(std::istream& in) {
  std::array<char, kIndexMagic.size()> magic{};
  in.read(magic.data(), magic.size());
  if (!in || std::string_view(magic.data(), magic.size()) != kIndexMagic) {
    throw FormatError("not a MIPS index file (bad magic)");
  }
  const std::uint32_t version = io::read_u32(in);
  if (version != kFormatVersion) {
    throw FormatError("unsupported index format version " + std::to_string(version) + " (expected " +
                      std::to_string(kFormatVersion) + ")");
  }
  MipsIndex index;
  const std::uint64_t p = io::read_u64(in);
  const std::uint64_t l = io::read_u64(in);
  const std::uint32_t variant = io::read_u32(in);
  if (variant > 1) throw FormatError("unknown index variant " + std::to_string(variant));
  if (p == 0 || l == 0 || p > std::numeric_limits<std::uint32_t>::max()) throw FormatError("invalid index shape");
  index.config_.variant = static_cast<MipsVariant>(variant);
  index.config_.m = io::read_u64(in);
  index.config_.ef_construction = io::read_u64(in);
  index.config_.ef_search = io::read_u64(in);
  index.config_.seed = io::read_u64(in);
  const std::uint64_t payload_hash = io::read_u64(in);

  if (index.config_.variant == MipsVariant::kGraph) {
    index.l0_stride_ = 1 + 2 * index.config_.m + kRepairSlots;
    index.l0_.assign(p * index.l0_stride_, 0);
    index.upper_.resize(p);
    index.levels_.resize(p);
    index.entry_point_ = io::read_u32(in);
    index.max_level_ = static_cast<int>(io::read_u32(in));
    if (index.entry_point_ >= p) throw FormatError("index entry point out of range");
    std::vector<std::uint32_t> ids;
    for (std::uint32_t node = 0; node < p; ++node) {
      const auto level = static_cast<int>(io::read_u32(in));
      if (level > index.max_level_) throw FormatError("node level exceeds index max level");
      index.levels_[node] = level;
      index.upper_[node].resize(static_cast<std::size_t>(level));
      for (int lv = 0; lv <= level; ++lv) {
        const std::uint32_t count = io::read_u32(in);
        if (count > (lv == 0 ? index.l0_stride_ - 1 : index.config_.m)) throw FormatError("neighbor list too long");
        ids.resize(count);
        for (auto& id : ids) {
          id = io::read_u32(in);
          if (id >= p) throw FormatError("neighbor id out of range");
        }
        index.set_neighbors(node, lv, ids);
      }
    }
  }
  index.vectors_.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(l));
  for (Eigen::Index i = 0; i < index.vectors_.rows(); ++i) {
    for (Eigen::Index j = 0; j < index.vectors_.cols(); ++j) index.vectors_(i, j) = io::read_f64(in);
  }
  if (io::hash_matrix(index.vectors_) != payload_hash) throw FormatError("index embedding payload hash mismatch");
  if (index.config_.variant == MipsVariant::kGraph) index.init_search_vectors();
  return index;
}

void MipsIndex::save_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  save(out);
}

MipsIndex MipsIndex::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return load(in);
}

}  // namespace softpol

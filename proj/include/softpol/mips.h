#pragma once

// Maximum inner product search over frozen item embeddings.
//
// Two variants share one interface: an exhaustive scan (the reference) and a
// layered proximity graph in the style of HNSW whose neighbor lists are
// ordered directly by inner product. The graph is built once and never
// modified; queries are const and may run concurrently.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <new>
#include <vector>

#include "softpol/core.h"

namespace softpol {

enum class MipsVariant : std::uint32_t { kExact = 0, kGraph = 1 };

struct MipsConfig {
  MipsVariant variant = MipsVariant::kGraph;
  std::size_t m = 16;                 // max neighbors per node on upper layers (2m on layer 0)
  std::size_t ef_construction = 200;  // build beam width
  std::size_t ef_search = 128;        // query beam width, raised to K when K is larger
  std::uint64_t seed = 42;            // level assignment
};

struct ScoredAction {
  ActionId id = 0;
  double score = 0.0;
};

// Descending by score, ties by ascending id.
inline bool ranks_before(const ScoredAction& a, const ScoredAction& b) {
  return a.score > b.score || (a.score == b.score && a.id < b.id);
}

using TopKSet = std::vector<ScoredAction>;

class MipsIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  static MipsIndex build(const ItemEmbeddings& beta, const MipsConfig& config = {});

  // Top-K actions by inner product with `query`, sorted by ranks_before.
  // K > P is clamped to P (a warning is logged once per process).
  TopKSet top_k(std::span<const double> query, std::size_t k) const;
  TopKSet top_k(const ConstVectorRef& query, std::size_t k) const {
    return top_k(std::span<const double>(query.data(), static_cast<std::size_t>(query.size())), k);
  }

  std::size_t num_items() const { return static_cast<std::size_t>(vectors_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  const MipsConfig& config() const { return config_; }
  MipsVariant variant() const { return config_.variant; }
  const RowMatrix& vectors() const { return vectors_; }

  // Overrides the query beam width; does not touch the graph.
  void set_ef_search(std::size_t ef) { config_.ef_search = ef; }

  // Number of layer-0 nodes reachable from the entry point (== P for a valid graph).
  std::size_t reachable_from_entry() const;
  std::size_t max_level() const { return static_cast<std::size_t>(max_level_); }
  std::span<const std::uint32_t> neighbors(std::uint32_t node, std::size_t level) const;

  void save(std::ostream& out) const;
  static MipsIndex load(std::istream& in);
  void save_file(const std::filesystem::path& path) const;
  static MipsIndex load_file(const std::filesystem::path& path);

 private:
  MipsIndex() = default;

  double inner(std::uint32_t node, const double* q) const;
  float inner_f(std::uint32_t node, const float* q) const;
  void prefetch(std::uint32_t node) const;
  const float* search_vector(std::uint32_t node) const;
  TopKSet exact_top_k(const double* q, std::size_t k) const;
  TopKSet graph_top_k(const double* q, std::size_t k) const;

  struct Candidate {
    float score;
    std::uint32_t id;
  };
  std::uint32_t greedy_descend(const float* q, std::uint32_t entry, int level) const;
  std::vector<Candidate> search_layer(const float* q, std::uint32_t entry, std::size_t ef, int level) const;
  std::vector<std::uint32_t> select_neighbors(const std::vector<Candidate>& ranked, std::size_t max_count) const;
  std::size_t capacity(int level) const;
  void set_neighbors(std::uint32_t node, int level, std::span<const std::uint32_t> ids);
  void add_link(std::uint32_t from, std::uint32_t to, int level);
  void insert(std::uint32_t node, int level);
  void repair_connectivity();

  MipsConfig config_;
  RowMatrix vectors_;
  template <typename T>
  struct CacheLineAllocator {
    using value_type = T;
    CacheLineAllocator() = default;
    template <typename U>
    CacheLineAllocator(const CacheLineAllocator<U>&) {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{64})); }
    void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t{64}); }
    bool operator==(const CacheLineAllocator&) const { return true; }
  };
  void init_search_vectors();

  // Single-precision copy used by the graph beam search, one zero-padded row
  // per item starting on a cache line.
  std::size_t search_stride_ = 0;
  std::vector<float, CacheLineAllocator<float>> search_vectors_;
  // Layer 0 adjacency in one flat array: per node [count, id0, id1, ...].
  std::size_t l0_stride_ = 0;
  std::vector<std::uint32_t> l0_;
  // upper_[node][level - 1] for 1 <= level <= levels_[node]
  std::vector<std::vector<std::vector<std::uint32_t>>> upper_;
  std::vector<int> levels_;
  std::uint32_t entry_point_ = 0;
  int max_level_ = 0;
};

}  // namespace softpol

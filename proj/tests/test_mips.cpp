#include <doctest.h>

#include <set>
#include <sstream>
#include <thread>

#include "oracles.h"
#include "softpol/errors.h"
#include "softpol/mips.h"

using namespace softpol;

namespace {

MipsConfig exact_config() {
  MipsConfig c;
  c.variant = MipsVariant::kExact;
  return c;
}

std::vector<ActionId> ids(const TopKSet& s) {
  std::vector<ActionId> out;
  for (const auto& e : s) out.push_back(e.id);
  return out;
}

void check_well_formed(const TopKSet& s) {
  std::set<ActionId> seen;
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(seen.insert(s[i].id).second);
    if (i > 0) CHECK(s[i - 1].score >= s[i].score);
  }
}

double recall(const TopKSet& got, const TopKSet& truth) {
  std::set<ActionId> t;
  for (const auto& e : truth) t.insert(e.id);
  std::size_t hit = 0;
  for (const auto& e : got) hit += t.count(e.id);
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace

TEST_CASE("single-item catalog always returns action 0") {
  const ItemEmbeddings beta(oracle::gaussian(1, 4, 3));
  for (auto variant : {MipsVariant::kExact, MipsVariant::kGraph}) {
    MipsConfig c;
    c.variant = variant;
    const auto index = MipsIndex::build(beta, c);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto top = index.top_k(oracle::gaussian_vector(4, s), 3);
      REQUIRE(top.size() == 1);
      CHECK(top[0].id == 0);
    }
  }
}

TEST_CASE("exact variant equals exhaustive argsort") {
  for (std::size_t p : {10u, 257u, 1000u, 2000u}) {
    const RowMatrix b = oracle::gaussian(p, 6, p);
    const auto index = MipsIndex::build(ItemEmbeddings(b), exact_config());
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Vector q = oracle::gaussian_vector(6, 1000 + s);
      for (std::size_t k : {std::size_t{1}, std::size_t{7}, p / 2, p}) {
        const auto got = index.top_k(q, k);
        CHECK(ids(got) == ids(oracle::scan_top_k(b, q, k)));
        check_well_formed(got);
      }
    }
  }
}

TEST_CASE("self query returns the dominant item first") {
  RowMatrix b = oracle::gaussian(50, 5, 8, 0.1);
  b.row(17) *= 40.0;
  const auto index = MipsIndex::build(ItemEmbeddings(b), exact_config());
  CHECK(index.top_k(Vector(b.row(17).transpose()), 3).front().id == 17);
  const auto graph = MipsIndex::build(ItemEmbeddings(b));
  CHECK(graph.top_k(Vector(b.row(17).transpose()), 3).front().id == 17);
}

TEST_CASE("orthonormal rows: e_i retrieves i") {
  const RowMatrix b = RowMatrix::Identity(6, 6);
  for (auto variant : {MipsVariant::kExact, MipsVariant::kGraph}) {
    MipsConfig c;
    c.variant = variant;
    const auto index = MipsIndex::build(ItemEmbeddings(b), c);
    for (int i = 0; i < 6; ++i) {
      const auto top = index.top_k(Vector::Unit(6, i), 6);
      CHECK(top[0].id == static_cast<ActionId>(i));
      CHECK(top[0].score == 1.0);
      for (std::size_t r = 1; r < top.size(); ++r) CHECK(top[r].score == 0.0);
    }
  }
}

TEST_CASE("ties break by lower id") {
  RowMatrix b = RowMatrix::Zero(5, 2);
  b.col(0) << 1, 2, 2, 0, 2;
  for (auto variant : {MipsVariant::kExact, MipsVariant::kGraph}) {
    MipsConfig c;
    c.variant = variant;
    const auto index = MipsIndex::build(ItemEmbeddings(b), c);
    CHECK(ids(index.top_k(Vector::Unit(2, 0), 4)) == std::vector<ActionId>{1, 2, 4, 0});
    CHECK(ids(index.top_k(Vector::Zero(2), 3)) == std::vector<ActionId>{0, 1, 2});
  }
}

TEST_CASE("K larger than the catalog is clamped, K = 0 and bad dimensions are rejected") {
  const auto index = MipsIndex::build(ItemEmbeddings(oracle::gaussian(5, 3, 1)));
  CHECK(index.top_k(Vector::Ones(3), 50).size() == 5);
  CHECK_THROWS_AS(index.top_k(Vector::Ones(3), 0), ConfigError);
  CHECK_THROWS_AS(index.top_k(Vector::Ones(4), 1), ConfigError);
}

TEST_CASE("graph variant: recall, connectivity, determinism") {
  const RowMatrix b = oracle::gaussian(3000, 10, 77);
  const ItemEmbeddings beta(b);
  const auto index = MipsIndex::build(beta);
  CHECK(index.reachable_from_entry() == 3000);

  double total = 0;
  const int queries = 50;
  for (int s = 0; s < queries; ++s) {
    const Vector q = oracle::gaussian_vector(10, 500 + static_cast<std::uint64_t>(s));
    const auto got = index.top_k(q, 256);
    check_well_formed(got);
    CHECK(got.size() == 256);
    total += recall(got, oracle::scan_top_k(b, q, 256));
  }
  CHECK(total / queries >= 0.95);

  const auto again = MipsIndex::build(beta);
  const Vector q = oracle::gaussian_vector(10, 9);
  CHECK(ids(again.top_k(q, 100)) == ids(index.top_k(q, 100)));
}

TEST_CASE("graph neighbor lists respect their capacity") {
  MipsConfig c;
  c.m = 4;
  c.ef_construction = 40;
  const auto index = MipsIndex::build(ItemEmbeddings(oracle::gaussian(800, 4, 2)), c);
  CHECK(index.reachable_from_entry() == 800);
  for (std::uint32_t n = 0; n < 800; ++n) {
    const auto nb = index.neighbors(n, 0);
    CHECK(nb.size() <= 2 * c.m + 4);
    for (std::uint32_t v : nb) CHECK(v < 800);
  }
}

TEST_CASE("concurrent queries see the same answers") {
  const RowMatrix b = oracle::gaussian(2000, 8, 5);
  const auto index = MipsIndex::build(ItemEmbeddings(b));
  std::vector<Vector> qs;
  std::vector<std::vector<ActionId>> expected;
  for (std::uint64_t s = 0; s < 16; ++s) {
    qs.push_back(oracle::gaussian_vector(8, s + 40));
    expected.push_back(ids(index.top_k(qs.back(), 64)));
  }
  std::vector<int> ok(4, 1);
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&, t] {
      for (int rep = 0; rep < 5; ++rep)
        for (std::size_t i = 0; i < qs.size(); ++i)
          if (ids(index.top_k(qs[i], 64)) != expected[i]) ok[static_cast<std::size_t>(t)] = 0;
    });
  }
  for (auto& w : workers) w.join();
  for (int v : ok) CHECK(v == 1);
}

TEST_CASE("index save and load round-trip") {
  const RowMatrix b = oracle::gaussian(600, 6, 12);
  for (auto variant : {MipsVariant::kExact, MipsVariant::kGraph}) {
    MipsConfig c;
    c.variant = variant;
    const auto index = MipsIndex::build(ItemEmbeddings(b), c);
    std::stringstream buf;
    index.save(buf);
    const auto loaded = MipsIndex::load(buf);
    CHECK(loaded.variant() == variant);
    CHECK(loaded.num_items() == 600);
    CHECK(loaded.dim() == 6);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Vector q = oracle::gaussian_vector(6, s);
      CHECK(ids(loaded.top_k(q, 32)) == ids(index.top_k(q, 32)));
    }
  }
}

TEST_CASE("index load rejects foreign or corrupted files") {
  const auto index = MipsIndex::build(ItemEmbeddings(oracle::gaussian(100, 4, 1)));
  std::stringstream buf;
  index.save(buf);
  const std::string good = buf.str();

  std::string wrong_version = good;
  wrong_version[8] = static_cast<char>(MipsIndex::kFormatVersion + 1);
  std::stringstream v(wrong_version);
  CHECK_THROWS_AS(MipsIndex::load(v), FormatError);

  std::string wrong_magic = good;
  wrong_magic[0] = 'X';
  std::stringstream m(wrong_magic);
  CHECK_THROWS_AS(MipsIndex::load(m), FormatError);

  std::string flipped = good;
  flipped[flipped.size() - 3] ^= 0x40;
  std::stringstream f(flipped);
  CHECK_THROWS_AS(MipsIndex::load(f), FormatError);

  std::stringstream truncated(good.substr(0, good.size() / 2));
  CHECK_THROWS(MipsIndex::load(truncated));
}

TEST_CASE("build rejects invalid parameters") {
  MipsConfig c;
  c.m = 1;
  CHECK_THROWS_AS(MipsIndex::build(ItemEmbeddings(oracle::gaussian(10, 2, 1)), c), ConfigError);
}

#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.h"
#include "softpol/errors.h"
#include "softpol/proposal.h"

using namespace softpol;

namespace {

// kappa = (0.6, 0.4) on actions {2, 0}.
TopKSet four_action_topk() { return {{2, std::log(0.6)}, {0, std::log(0.4)}}; }

double total_mass(const MixtureProposal& q) {
  double s = 0;
  for (std::size_t a = 0; a < q.catalog_size(); ++a) s += q.prob(static_cast<ActionId>(a));
  return s;
}

// Upper 1% quantile of chi-square via Wilson-Hilferty.
double chi2_crit_01(double dof) {
  const double z = 2.326347874;
  const double t = 1.0 - 2.0 / (9.0 * dof) + z * std::sqrt(2.0 / (9.0 * dof));
  return dof * t * t * t;
}

double chi2_stat(const MixtureProposal& q, std::size_t draws, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> counts(q.catalog_size(), 0.0);
  for (ActionId a : q.sample(draws, rng)) counts[a] += 1;
  double stat = 0;
  for (std::size_t a = 0; a < counts.size(); ++a) {
    const double e = static_cast<double>(draws) * q.prob(static_cast<ActionId>(a));
    stat += (counts[a] - e) * (counts[a] - e) / e;
  }
  return stat;
}

}  // namespace

TEST_CASE("epsilon = 1 is the uniform law") {
  const auto q = build_proposal(four_action_topk(), 1.0, 10);
  CHECK(q.support().empty());
  for (ActionId a = 0; a < 10; ++a) CHECK(q.prob(a) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(chi2_stat(q, 100000, 3) < chi2_crit_01(9));
}

TEST_CASE("mixture formula on the four-action instance") {
  const auto q = build_proposal(four_action_topk(), 0.5, 4);
  CHECK(q.prob(2) == doctest::Approx(0.425).epsilon(1e-12));
  CHECK(q.prob(0) == doctest::Approx(0.325).epsilon(1e-12));
  CHECK(q.prob(1) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(q.prob(3) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(total_mass(q) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q.log_prob(2) == doctest::Approx(std::log(0.425)).epsilon(1e-12));
  CHECK(q.kappa()[0] == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("four-action sampling frequencies") {
  const auto q = build_proposal(four_action_topk(), 0.5, 4);
  Rng rng(11);
  const std::size_t n = 1000000;
  std::vector<double> freq(4, 0);
  for (ActionId a : q.sample(n, rng)) freq[a] += 1.0 / static_cast<double>(n);
  const double expect[4] = {0.325, 0.125, 0.425, 0.125};
  for (int a = 0; a < 4; ++a) CHECK(std::abs(freq[static_cast<std::size_t>(a)] - expect[a]) < 0.005);
  CHECK(chi2_stat(q, n, 12) < chi2_crit_01(3));
}

TEST_CASE("tiny epsilon with the full exact top-K approaches the policy") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::size_t p = 40;
    const RowMatrix b = oracle::gaussian(p, 5, seed);
    const Matrix theta = oracle::gaussian(5, 5, seed + 10);
    const Vector x = oracle::gaussian_vector(5, seed + 20);
    const Vector h = theta.transpose() * x;
    const auto q = build_proposal(oracle::scan_top_k(b, h, p), 1e-6, p);
    const auto pi = oracle::softmax_ld(oracle::scores_ld(theta, x, b));
    double tv = 0;
    for (std::size_t a = 0; a < p; ++a) tv += std::abs(q.prob(static_cast<ActionId>(a)) - (double)pi[a]);
    CHECK(0.5 * tv < 1e-5);
  }
}

TEST_CASE("normalization and full support on random instances") {
  std::mt19937_64 gen(4);
  for (std::size_t p : {2u, 17u, 1000u, 100000u}) {
    for (double eps : {1e-6, 0.1, 0.5, 0.8, 1.0}) {
      const std::size_t k = std::min<std::size_t>(p, 256);
      std::vector<ActionId> all(p);
      std::iota(all.begin(), all.end(), 0u);
      std::shuffle(all.begin(), all.end(), gen);
      std::normal_distribution<double> n(0.0, 3.0);
      TopKSet topk;
      for (std::size_t i = 0; i < k; ++i) topk.push_back({all[i], n(gen)});
      std::sort(topk.begin(), topk.end(), ranks_before);
      const auto q = build_proposal(topk, eps, p);
      CHECK(std::abs(total_mass(q) - 1.0) < 1e-9);
      double min_q = 1.0;
      for (std::size_t a = 0; a < p; ++a) min_q = std::min(min_q, q.prob(static_cast<ActionId>(a)));
      CHECK(min_q >= eps / static_cast<double>(p) * (1 - 1e-12));
      double kappa = 0;
      for (double v : q.kappa()) kappa += v;
      if (eps < 1.0) CHECK(std::abs(kappa - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("sampling law on a mid-sized instance") {
  TopKSet topk = {{7, 2.0}, {3, 1.0}, {12, 0.5}, {0, -1.0}};
  const auto q = build_proposal(topk, 0.3, 20);
  CHECK(chi2_stat(q, 400000, 5) < chi2_crit_01(19));
  Rng rng(6);
  for (ActionId a : q.sample(10000, rng)) CHECK(a < 20);
}

TEST_CASE("invalid construction and use") {
  CHECK_THROWS_AS(build_proposal(four_action_topk(), 0.0, 4), ConfigError);
  CHECK_THROWS_AS(build_proposal(four_action_topk(), -0.2, 4), ConfigError);
  CHECK_THROWS_AS(build_proposal(four_action_topk(), 1.5, 4), ConfigError);
  CHECK_THROWS_AS(build_proposal({}, 0.5, 4), ConfigError);
  CHECK_THROWS_AS(build_proposal({{1, 0.0}, {1, 0.5}}, 0.5, 4), ConfigError);
  CHECK_THROWS_AS(build_proposal({{1, std::nan("")}}, 0.5, 4), ConfigError);
  CHECK_THROWS_AS(build_proposal({{9, 0.0}}, 0.5, 4), IndexError);
  const auto q = build_proposal(four_action_topk(), 0.5, 4);
  CHECK_THROWS_AS(q.prob(4), IndexError);
  Rng rng(1);
  CHECK_THROWS_AS(q.sample(1, rng), ConfigError);
}

TEST_CASE("fixed seed gives identical draws") {
  const auto q = build_proposal(four_action_topk(), 0.5, 4);
  Rng a(99), b(99);
  CHECK(q.sample(1000, a) == q.sample(1000, b));
}

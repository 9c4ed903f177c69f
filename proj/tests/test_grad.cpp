#include <doctest.h>

#include <cmath>

#include "oracles.h"
#include "softpol/errors.h"
#include "softpol/grad.h"
#include "softpol/probe.h"

using namespace softpol;

namespace {

struct Instance {
  RowMatrix b;
  ItemEmbeddings beta;
  PolicyParams theta;
  Vector x;
  std::vector<double> r;

  RewardFn reward() const {
    return [this](ActionId a) { return r[a]; };
  }
};

Instance random_instance(std::size_t p, std::size_t l, std::uint64_t seed, double theta_scale = 0.7) {
  RowMatrix b = oracle::gaussian(p, l, seed);
  std::mt19937_64 rng(seed + 7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> r(p);
  for (double& v : r) v = u(rng) < 0.3 ? 1.0 : u(rng) * 0.2;
  return Instance{b, ItemEmbeddings(b), PolicyParams(Matrix(oracle::gaussian(l, l, seed + 1, theta_scale))),
                  oracle::gaussian_vector(l, seed + 2), r};
}

// Mean and entrywise standard error over replicated estimates.
struct Replicated {
  Matrix mean;
  Matrix se;
};

template <typename Estimate>
Replicated replicate(int reps, Estimate estimate) {
  Matrix sum, sum_sq;
  for (int i = 0; i < reps; ++i) {
    const Matrix g = estimate(i);
    if (i == 0) {
      sum = Matrix::Zero(g.rows(), g.cols());
      sum_sq = Matrix::Zero(g.rows(), g.cols());
    }
    sum += g;
    sum_sq += g.cwiseProduct(g);
  }
  const Matrix mean = sum / reps;
  const Matrix var = (sum_sq / reps - mean.cwiseProduct(mean)) * (double(reps) / (reps - 1));
  return {mean, (var / reps).cwiseSqrt()};
}

bool within_standard_errors(const Replicated& est, const Matrix& truth, double k) {
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const double tol = k * est.se.data()[i] + 1e-12;
    if (std::abs(est.mean.data()[i] - truth.data()[i]) > tol) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("constant reward gives a zero gradient") {
  const Instance in = random_instance(30, 4, 1);
  const RewardFn c = [](ActionId) { return 2.5; };
  CHECK(exact_gradient(in.theta, in.x, in.beta, c).grad.norm() < 1e-12);
  CHECK(exact_covariance_gradient(in.theta, in.x, in.beta, c).grad.norm() < 1e-12);

  Rng rng(3);
  const auto q = MixtureProposal::uniform(30);
  const auto snis = snis_covariance_gradient(in.theta, in.x, in.beta, c, q, 500, rng);
  CHECK(snis.grad == Matrix::Zero(4, 4));

  const double scale = exact_gradient(in.theta, in.x, in.beta, in.reward()).grad.norm();
  const auto mc = reinforce_mc_gradient(in.theta, in.x, in.beta, c, 100000, rng, PolicySampler::kInverseCdf);
  CHECK(mc.grad.norm() < 0.05 * 2.5 * (scale + 1.0));
}

TEST_CASE("two-action closed form") {
  RowMatrix b(2, 2);
  b << 1.0, 0.5, -0.3, 2.0;
  const ItemEmbeddings beta(b);
  const PolicyParams theta(Matrix(oracle::gaussian(2, 2, 4)));
  const Vector x = oracle::gaussian_vector(2, 5);
  const RewardFn r = [](ActionId a) { return a == 0 ? 1.0 : 0.0; };
  const Vector h = theta.matrix().transpose() * x;
  const double sigma = 1.0 / (1.0 + std::exp(h.dot(b.row(1)) - h.dot(b.row(0))));
  const Matrix expect = sigma * (1 - sigma) * (x * (b.row(0) - b.row(1)));
  CHECK((exact_gradient(theta, x, beta, r).grad - expect).norm() < 1e-14);
  CHECK((exact_covariance_gradient(theta, x, beta, r).grad - expect).norm() < 1e-14);
}

TEST_CASE("exact gradient matches central finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Instance in = random_instance(20, 4, seed);
    const Matrix g = exact_gradient(in.theta, in.x, in.beta, in.reward()).grad;
    Matrix fd(4, 4);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) {
        Matrix up = in.theta.matrix(), down = in.theta.matrix();
        up(i, j) += h;
        down(i, j) -= h;
        fd(i, j) = (oracle::objective(up, in.x, in.b, in.reward()) - oracle::objective(down, in.x, in.b, in.reward())) /
                   (2 * h);
      }
    }
    CHECK(oracle::frobenius_rel(g, fd) < 1e-5);
  }
}

TEST_CASE("REINFORCE and covariance forms agree exactly") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Instance in = random_instance(20, 4, seed, 1.5);
    const Matrix a = exact_gradient(in.theta, in.x, in.beta, in.reward()).grad;
    const Matrix b = exact_covariance_gradient(in.theta, in.x, in.beta, in.reward()).grad;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("uniform policy covariance uses the plain mean") {
  const Instance in = random_instance(15, 3, 21);
  const PolicyParams zero(3);
  const Vector mean = in.b.colwise().mean().transpose();
  Vector v = Vector::Zero(3);
  for (std::size_t a = 0; a < 15; ++a) v += in.r[a] * (in.b.row(static_cast<Eigen::Index>(a)).transpose() - mean);
  const Matrix expect = in.x * (v / 15.0).transpose();
  CHECK((exact_covariance_gradient(zero, in.x, in.beta, in.reward()).grad - expect).norm() < 1e-13);
}

TEST_CASE("enumeration guard refuses large catalogs") {
  const Instance in = random_instance(50, 2, 2);
  CHECK_THROWS_AS(exact_gradient(in.theta, in.x, in.beta, in.reward(), 49), ConfigError);
  CHECK_THROWS_AS(exact_covariance_gradient(in.theta, in.x, in.beta, in.reward(), 10), ConfigError);
  CHECK_NOTHROW(exact_gradient(in.theta, in.x, in.beta, in.reward(), 50));
}

TEST_CASE("Monte-Carlo REINFORCE is unbiased (both samplers)") {
  for (auto sampler : {PolicySampler::kInverseCdf, PolicySampler::kGumbelMax}) {
    const Instance in = random_instance(10, 4, 31);
    const Matrix truth = exact_gradient(in.theta, in.x, in.beta, in.reward()).grad;
    Rng rng(5);
    const auto est = replicate(50, [&](int) {
      return reinforce_mc_gradient(in.theta, in.x, in.beta, in.reward(), 2000, rng, sampler).grad;
    });
    CHECK(within_standard_errors(est, truth, 3.0));
  }
}

TEST_CASE("fixed seed gives bit-identical estimates") {
  const Instance in = random_instance(40, 3, 9);
  Rng a(17), b(17);
  CHECK(reinforce_mc_gradient(in.theta, in.x, in.beta, in.reward(), 300, a).grad ==
        reinforce_mc_gradient(in.theta, in.x, in.beta, in.reward(), 300, b).grad);
  const auto q = MixtureProposal::uniform(40);
  CHECK(snis_covariance_gradient(in.theta, in.x, in.beta, in.reward(), q, 300, a).grad ==
        snis_covariance_gradient(in.theta, in.x, in.beta, in.reward(), q, 300, b).grad);
}

TEST_CASE("SNIS with the exact policy as proposal") {
  const Instance in = random_instance(40, 4, 41);
  const Vector h = in.theta.matrix().transpose() * in.x;
  const auto q = build_proposal(oracle::scan_top_k(in.b, h, 40), 1e-6, 40);
  const Matrix truth = exact_covariance_gradient(in.theta, in.x, in.beta, in.reward()).grad;
  Rng rng(8);
  const auto est = replicate(50, [&](int) {
    return snis_covariance_gradient(in.theta, in.x, in.beta, in.reward(), q, 2000, rng).grad;
  });
  CHECK(within_standard_errors(est, truth, 3.0));
}

TEST_CASE("SNIS converges to the oracle under different proposals") {
  const Instance in = random_instance(100, 8, 51, 0.5);
  const Vector h = in.theta.matrix().transpose() * in.x;
  const Matrix truth = exact_covariance_gradient(in.theta, in.x, in.beta, in.reward()).grad;
  Rng rng(9);
  for (double eps : {0.5, 1.0}) {
    const auto q = build_proposal(oracle::scan_top_k(in.b, h, 16), eps, 100);
    Matrix mean = Matrix::Zero(8, 8);
    for (int i = 0; i < 10; ++i) mean += snis_covariance_gradient(in.theta, in.x, in.beta, in.reward(), q, 20000, rng).grad;
    mean /= 10;
    CHECK(oracle::frobenius_rel(mean, truth) < 0.05);
  }
}

TEST_CASE("self-normalized weights ignore a common shift") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n(0.0, 5.0);
  std::vector<double> lw(200), shifted(200);
  for (std::size_t i = 0; i < lw.size(); ++i) {
    lw[i] = n(gen);
    shifted[i] = lw[i] + 700.0;
  }
  const auto a = normalize_log_weights(lw);
  const auto b = normalize_log_weights(shifted);
  double total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) < 1e-12);
    total += a[i];
  }
  CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("SNIS diagnostics and low-ESS counter") {
  const Instance in = random_instance(200, 4, 61, 0.1);
  Rng rng(2);
  const auto flat = snis_covariance_gradient(in.theta, in.x, in.beta, in.reward(), MixtureProposal::uniform(200), 1000, rng);
  CHECK(flat.effective_sample_size > 500);
  CHECK(flat.effective_sample_size <= 1000.0 + 1e-9);
  CHECK(flat.max_weight > 0);
  CHECK(flat.kind == EstimatorKind::kSnisCovariance);
  CHECK(flat.samples == 1000);

  probe::reset();
  const PolicyParams peaked(Matrix(100.0 * Matrix::Identity(4, 4)));
  const Vector x = 3.0 * in.b.row(0).transpose();
  (void)snis_covariance_gradient(peaked, x, in.beta, in.reward(), MixtureProposal::uniform(200), 1000, rng);
  CHECK(probe::snapshot().low_ess_events == 1);
}

TEST_CASE("SNIS never scans the catalog") {
  const Instance in = random_instance(5000, 4, 71);
  const auto q = build_proposal(oracle::scan_top_k(in.b, in.theta.matrix().transpose() * in.x, 32), 0.8, 5000);
  probe::reset();
  Rng rng(1);
  (void)snis_covariance_gradient(in.theta, in.x, in.beta, in.reward(), q, 100, rng);
  const auto snap = probe::snapshot();
  CHECK(snap.full_catalog_passes == 0);
  CHECK(snap.scores_evaluated == 100);
  CHECK(snap.rewards_evaluated == 100);
}

TEST_CASE("SNIS surfaces non-finite scores and bad arguments") {
  const Instance in = random_instance(10, 2, 81);
  const PolicyParams huge(Matrix(1e200 * Matrix::Identity(2, 2)));
  const Vector x = Vector::Constant(2, 1e200);
  Rng rng(1);
  CHECK_THROWS_AS(snis_covariance_gradient(huge, x, in.beta, in.reward(), MixtureProposal::uniform(10), 10, rng),
                  NumericError);
  CHECK_THROWS_AS(snis_covariance_gradient(in.theta, in.x, in.beta, in.reward(), MixtureProposal::uniform(10), 1, rng),
                  ConfigError);
  CHECK_THROWS_AS(snis_covariance_gradient(in.theta, in.x, in.beta, in.reward(), MixtureProposal::uniform(11), 10, rng),
                  ConfigError);
  CHECK_THROWS_AS(reinforce_mc_gradient(in.theta, in.x, in.beta, in.reward(), 0, rng), ConfigError);
}

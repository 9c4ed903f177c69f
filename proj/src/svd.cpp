#include <algorithm>
#include <random>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "softpol/data.h"
#include "softpol/errors.h"

namespace softpol {
namespace {

Matrix orthonormal_basis(const Matrix& y) {
  Eigen::HouseholderQR<Matrix> qr(y);
  return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

}  // namespace

TruncatedSvd randomized_svd(const SparseRowMatrix& a, std::size_t rank, std::uint64_t seed,
                            const SvdOptions& options) {
  const auto rows = static_cast<std::size_t>(a.rows());
  const auto cols = static_cast<std::size_t>(a.cols());
  if (rank == 0 || rank > std::min(rows, cols)) throw ConfigError("SVD rank out of range");
  const auto sketch = static_cast<Eigen::Index>(std::min(rank + options.oversampling, std::min(rows, cols)));

  Rng rng(seed);
  std::normal_distribution<double> normal;
  Matrix omega(static_cast<Eigen::Index>(cols), sketch);
  for (Eigen::Index j = 0; j < omega.cols(); ++j) {
    for (Eigen::Index i = 0; i < omega.rows(); ++i) omega(i, j) = normal(rng);
  }

  Matrix q = orthonormal_basis(a * omega);
  for (std::size_t it = 0; it < options.power_iterations; ++it) {
    const Matrix z = orthonormal_basis(a.transpose() * q);
    q = orthonormal_basis(a * z);
  }

  // B = Q^T A, small (sketch x cols).
  const Matrix b = (a.transpose() * q).transpose();
  Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto r = static_cast<Eigen::Index>(rank);
  TruncatedSvd out;
  out.u = q * svd.matrixU().leftCols(r);
  out.sigma = svd.singularValues().head(r);
  out.v = svd.matrixV().leftCols(r);
  return out;
}

}  // namespace softpol

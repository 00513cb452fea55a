#pragma once

#include "promptsplit/common.hpp"
#include "promptsplit/data_model.hpp"

#include <cmath>
#include <vector>

namespace promptsplit {

/// Gaussian kernel k(u, v) = exp(-||u - v||^2 / (2 sigma^2)).
struct KernelSpec {
  enum class Family { gaussian };

  Family family = Family::gaussian;
  double sigma = 1.0;

  static KernelSpec gaussian(double sigma) {
    require(sigma > 0.0 && std::isfinite(sigma), ErrorKind::invalid_argument, "kernel bandwidth must be positive");
    return KernelSpec{Family::gaussian, sigma};
  }
};

template <typename DerivedU, typename DerivedV>
typename DerivedU::Scalar gaussian_kernel(const Eigen::MatrixBase<DerivedU>& u, const Eigen::MatrixBase<DerivedV>& v,
                                          typename DerivedU::Scalar sigma) {
  require(u.size() == v.size(), ErrorKind::invalid_argument, "gaussian_kernel: dimension mismatch");
  require(sigma > 0, ErrorKind::invalid_argument, "gaussian_kernel: sigma must be positive");
  using std::exp;
  return exp(-(u - v).squaredNorm() / (2 * sigma * sigma));
}

/// Pairwise squared distances between the rows of `a` and `b`, via
/// ||u||^2 + ||v||^2 - 2 u.v, clamped at zero.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> squared_distances(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  using Result = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  require(a.cols() == b.cols(), ErrorKind::invalid_argument, "squared_distances: dimension mismatch");
  const auto a_norms = a.rowwise().squaredNorm().eval();
  const auto b_norms = b.rowwise().squaredNorm().eval();
  Result d = Scalar(-2) * (a * b.transpose());
  d.colwise() += a_norms;
  d.rowwise() += b_norms.transpose();
  return d.cwiseMax(Scalar(0));
}

/// Cross-Gram matrix K(i, j) = k(a_i, b_j).
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> gram(const Eigen::MatrixBase<DerivedA>& a,
                                                                               const Eigen::MatrixBase<DerivedB>& b,
                                                                               const KernelSpec& spec) {
  using Scalar = typename DerivedA::Scalar;
  require(a.cols() == b.cols(), ErrorKind::invalid_argument, "gram: dimension mismatch");
  auto k = squared_distances(a, b);
  const Scalar scale = Scalar(-1) / (Scalar(2) * Scalar(spec.sigma) * Scalar(spec.sigma));
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < k.cols(); ++j) k.col(j) = (k.col(j) * scale).array().exp();
  return k;
}

/// Self-Gram matrix of the rows of `a`: exactly symmetric with unit diagonal.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> gram(const Eigen::MatrixBase<Derived>& a,
                                                                              const KernelSpec& spec) {
  using Scalar = typename Derived::Scalar;
  auto k = gram(a, a, spec);
  for (Index j = 0; j < k.cols(); ++j) {
    k(j, j) = Scalar(1);
    for (Index i = j + 1; i < k.rows(); ++i) {
      const Scalar s = (k(i, j) + k(j, i)) / Scalar(2);
      k(i, j) = s;
      k(j, i) = s;
    }
  }
  return k;
}

/// Elementwise product of two equally shaped matrices.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> hadamard(
    const Eigen::MatrixBase<DerivedA>& k1, const Eigen::MatrixBase<DerivedB>& k2) {
  require(k1.rows() == k2.rows() && k1.cols() == k2.cols(), ErrorKind::invalid_argument, "hadamard: shape mismatch");
  return k1.cwiseProduct(k2);
}

/// Median Euclidean distance over distinct row pairs. Uses the first
/// `max_rows` rows of a seeded shuffle when the matrix is larger.
double median_pairwise_distance(const RowMatrix& m, Index max_rows = 2000, std::uint64_t seed = 0);

struct BandwidthOptions {
  double gap_threshold = 0.01;
  Index r_probe = 1000;
  Index grid_points = 30;
  std::uint64_t seed = 0;
};

struct BandwidthChoice {
  double sigma = 0.0;
  double gap = 0.0;        // lambda_1 - lambda_2 at the returned sigma
  bool qualified = false;  // false: no grid point met the threshold
  std::vector<double> grid;
};

/// Largest bandwidth on a logarithmic grid (grid_points values spanning
/// [1e-2, 1e2] x median pairwise distance) whose random-feature kernel
/// covariance has top-eigenvalue gap lambda_1 - lambda_2 below the threshold.
/// Falls back to the smallest grid value with `qualified == false`.
BandwidthChoice select_bandwidth(const RowMatrix& m, const BandwidthOptions& options = {});

/// lambda_1 - lambda_2 of (1/n) F^T F for r-dimensional random Fourier
/// features F of the rows of `m` at bandwidth sigma.
double covariance_top_gap(const RowMatrix& m, double sigma, Index r, std::uint64_t seed);

}  // namespace promptsplit

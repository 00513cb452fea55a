#pragma once

// Brute-force reference computations used only by the tests. They share no
// code with the library beyond the data types.

#include "promptsplit/data_model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <random>
#include <string>

namespace oracle {

using promptsplit::Index;
using promptsplit::Matrix;
using promptsplit::PairedDataset;
using promptsplit::RowMatrix;
using promptsplit::Vector;

inline double gaussian(const Eigen::Ref<const Eigen::RowVectorXd>& u, const Eigen::Ref<const Eigen::RowVectorXd>& v,
                       double sigma) {
  double d2 = 0.0;
  for (Index i = 0; i < u.size(); ++i) d2 += (u[i] - v[i]) * (u[i] - v[i]);
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

inline Matrix gram_loop(const RowMatrix& a, const RowMatrix& b, double sigma) {
  Matrix k(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) k(i, j) = gaussian(a.row(i), b.row(j), sigma);
  return k;
}

inline Vector symmetric_eigenvalues_desc(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

/// Real parts of a general matrix's eigenvalues, descending. Callers use it
/// on matrices similar to symmetric ones, whose spectra are real.
inline Vector general_eigenvalues_desc(const Matrix& m) {
  Eigen::EigenSolver<Matrix> es(m, false);
  Vector v = es.eigenvalues().real();
  std::sort(v.begin(), v.end(), std::greater<>());
  return v;
}

/// Largest imaginary part magnitude among a general matrix's eigenvalues.
inline double max_imaginary(const Matrix& m) {
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().imag().cwiseAbs().maxCoeff();
}

/// Both spectra zero-padded to a common length, sorted descending; returns
/// the largest elementwise difference.
inline double padded_max_diff(const Vector& a, const Vector& b) {
  const Index len = std::max(a.size(), b.size());
  Vector pa = Vector::Zero(len);
  Vector pb = Vector::Zero(len);
  pa.head(a.size()) = a;
  pb.head(b.size()) = b;
  std::sort(pa.begin(), pa.end(), std::greater<>());
  std::sort(pb.begin(), pb.end(), std::greater<>());
  return (pa - pb).cwiseAbs().maxCoeff();
}

/// Row i of the joint cos/sin feature map, computed term by term.
inline Eigen::RowVectorXd joint_feature(const Eigen::Ref<const Eigen::RowVectorXd>& t,
                                        const Eigen::Ref<const Eigen::RowVectorXd>& x, const RowMatrix& omega_t,
                                        const RowMatrix& omega_x) {
  const Index half = omega_t.rows();
  const double scale = std::sqrt(1.0 / static_cast<double>(half));
  Eigen::RowVectorXd f(2 * half);
  for (Index l = 0; l < half; ++l) {
    double p = 0.0;
    for (Index j = 0; j < t.size(); ++j) p += omega_t(l, j) * t[j];
    for (Index j = 0; j < x.size(); ++j) p += omega_x(l, j) * x[j];
    f[l] = scale * std::cos(p);
    f[half + l] = scale * std::sin(p);
  }
  return f;
}

inline RowMatrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline RowMatrix unit_rows(RowMatrix m) {
  for (Index i = 0; i < m.rows(); ++i) m.row(i) /= m.row(i).norm();
  return m;
}

/// Dataset with unit-norm Gaussian rows.
inline PairedDataset random_dataset(Index n, Index dt, Index dx, std::mt19937_64& rng, const std::string& name = "d") {
  return PairedDataset(name, promptsplit::EmbeddingMatrix(unit_rows(random_matrix(n, dt, rng))),
                       promptsplit::EmbeddingMatrix(unit_rows(random_matrix(n, dx, rng))));
}

/// Linear-kernel joint Gram (T T^T) (.) (X X^T) over the pooled rows.
inline Matrix linear_joint_gram(const PairedDataset& dx, const PairedDataset& dy) {
  RowMatrix t(dx.size() + dy.size(), dx.prompt_dim());
  RowMatrix x(dx.size() + dy.size(), dx.output_dim());
  t << dx.prompts().values(), dy.prompts().values();
  x << dx.outputs().values(), dy.outputs().values();
  Matrix g(t.rows(), t.rows());
  for (Index i = 0; i < t.rows(); ++i)
    for (Index j = 0; j < t.rows(); ++j) g(i, j) = t.row(i).dot(t.row(j)) * x.row(i).dot(x.row(j));
  return g;
}

/// Explicit tensor features t_i (x) x_i, one row per sample.
inline Matrix tensor_features(const PairedDataset& ds) {
  const Index dt = ds.prompt_dim();
  const Index dx = ds.output_dim();
  Matrix psi(ds.size(), dt * dx);
  for (Index i = 0; i < ds.size(); ++i)
    for (Index a = 0; a < dt; ++a)
      for (Index b = 0; b < dx; ++b) psi(i, a * dx + b) = ds.prompts().values()(i, a) * ds.outputs().values()(i, b);
  return psi;
}

/// Fresh empty directory under the system temp directory.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  const auto dir = std::filesystem::temp_directory_path() / ("promptsplit-test-" + tag + "-" + std::to_string(rng()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle

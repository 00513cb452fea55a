#include "promptsplit/symmetric_eigen.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

extern "C" void openblas_set_num_threads(int num_threads);

namespace promptsplit {

namespace {

lapack_int to_lapack(Index n) { return static_cast<lapack_int>(n); }

void check_info(lapack_int info, const char* routine) {
  if (info != 0) fail(ErrorKind::numerical, std::string(routine) + " failed with info = " + std::to_string(info));
}

struct Tridiagonal {
  Vector diag;
  Vector offdiag;  // length n, last entry is workspace for dstemr
  Vector tau;
};

// Reduces `a` in place (lower storage) to Q T Q^T.
Tridiagonal tridiagonalize(Matrix& a) {
  const Index n = a.rows();
  Tridiagonal t{Vector(n), Vector::Zero(std::max<Index>(n, 1)), Vector(std::max<Index>(n - 1, 1))};
  check_info(LAPACKE_dsytrd(LAPACK_COL_MAJOR, 'L', to_lapack(n), a.data(), to_lapack(n), t.diag.data(),
                            t.offdiag.data(), t.tau.data()),
             "dsytrd");
  return t;
}

// Eigenvectors of the tridiagonal for ascending 1-based indices [il, iu],
// back-transformed through Q. Columns come out ascending.
Matrix tridiagonal_vectors(const Matrix& reflectors, const Tridiagonal& t, lapack_int il, lapack_int iu) {
  const lapack_int n = to_lapack(reflectors.rows());
  const lapack_int count = iu - il + 1;
  Vector d = t.diag;
  Vector e = t.offdiag;
  Vector w(n);
  Matrix z(n, count);
  std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(std::max(count, 1)));
  lapack_int found = 0;
  lapack_logical tryrac = 1;
  check_info(LAPACKE_dstemr(LAPACK_COL_MAJOR, 'V', 'I', n, d.data(), e.data(), 0.0, 0.0, il, iu, &found, w.data(),
                            z.data(), n, count, isuppz.data(), &tryrac),
             "dstemr");
  if (found != count) fail(ErrorKind::numerical, "dstemr returned fewer eigenvectors than requested");
  if (n > 1) {
    check_info(LAPACKE_dormtr(LAPACK_COL_MAJOR, 'L', 'L', 'N', n, count, reflectors.data(), n, t.tau.data(),
                              z.data(), n),
               "dormtr");
  }
  return z;
}

}  // namespace

SymmetricEigen symmetric_eigen(Matrix a, Index n_largest, Index n_smallest) {
  require(a.rows() == a.cols(), ErrorKind::invalid_argument, "symmetric_eigen needs a square matrix");
  const Index n = a.rows();
  SymmetricEigen out;
  if (n == 0) return out;
  n_largest = std::clamp<Index>(n_largest, 0, n);
  n_smallest = std::clamp<Index>(n_smallest, 0, n);

  const Tridiagonal t = tridiagonalize(a);
  Vector ascending = t.diag;
  Vector e = t.offdiag;
  check_info(LAPACKE_dsterf(to_lapack(n), ascending.data(), e.data()), "dsterf");
  out.values = ascending.reverse();

  // Each block of vectors arrives ascending; store it descending.
  std::vector<std::pair<Index, Vector>> columns;
  auto collect = [&](lapack_int il, lapack_int iu) {
    const Matrix z = tridiagonal_vectors(a, t, il, iu);
    for (lapack_int k = 0; k < z.cols(); ++k) {
      const Index ascending_pos = il - 1 + k;
      columns.emplace_back(n - 1 - ascending_pos, z.col(k));
    }
  };
  if (n_largest + n_smallest >= n) {
    collect(1, to_lapack(n));
  } else {
    if (n_largest > 0) collect(to_lapack(n - n_largest + 1), to_lapack(n));
    if (n_smallest > 0) collect(1, to_lapack(n_smallest));
  }
  std::sort(columns.begin(), columns.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

  out.vectors.resize(n, static_cast<Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    out.selected.push_back(columns[k].first);
    out.vectors.col(static_cast<Index>(k)) = columns[k].second;
  }
  return out;
}

Vector symmetric_eigenvalues(Matrix a) { return symmetric_eigen(std::move(a), 0, 0).values; }

SymmetricDecomposition symmetric_decomposition(Matrix a) {
  require(a.rows() == a.cols(), ErrorKind::invalid_argument, "symmetric_decomposition needs a square matrix");
  const lapack_int n = to_lapack(a.rows());
  if (n == 0) return {};
  Vector w(n);
  Matrix z(n, n);
  std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  check_info(LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'A', 'L', n, a.data(), n, 0.0, 0.0, 0, 0, 0.0, &found, w.data(),
                            z.data(), n, isuppz.data()),
             "dsyevr");
  a.resize(0, 0);
  return {w.reverse(), z.rowwise().reverse()};
}

void set_thread_limit(int threads) {
  if (threads < 1) return;
#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif
  Eigen::setNbThreads(threads);
  openblas_set_num_threads(threads);
}

void apply_thread_limit_from_env() {
  if (const char* env = std::getenv("PROMPTSPLIT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) set_thread_limit(static_cast<int>(v));
  }
}

}  // namespace promptsplit

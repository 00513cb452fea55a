#pragma once

#include "promptsplit/common.hpp"

#include <vector>

namespace promptsplit {

/// Spectrum of a real symmetric matrix with eigenvectors for a subset of it.
struct SymmetricEigen {
  Vector values;               // every eigenvalue, descending
  Matrix vectors;              // unit eigenvectors, one column per entry of `selected`
  std::vector<Index> selected; // positions in `values`, increasing
};

/// All eigenvalues of the symmetric matrix `a` (only its lower triangle is
/// read), plus eigenvectors of the `n_largest` largest and `n_smallest`
/// smallest ones. Cost is one Householder tridiagonalization plus O(n^2 k).
SymmetricEigen symmetric_eigen(Matrix a, Index n_largest, Index n_smallest);

/// Eigenvalues only, descending.
Vector symmetric_eigenvalues(Matrix a);

/// Full decomposition: eigenvalues descending with matching eigenvector columns.
struct SymmetricDecomposition {
  Vector values;
  Matrix vectors;
};
SymmetricDecomposition symmetric_decomposition(Matrix a);

/// Caps internal parallelism (OpenMP, Eigen and BLAS threads).
void set_thread_limit(int threads);

/// Applies PROMPTSPLIT_THREADS when set to a positive integer.
void apply_thread_limit_from_env();

}  // namespace promptsplit

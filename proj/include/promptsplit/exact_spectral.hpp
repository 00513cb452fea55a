#pragma once

#include "promptsplit/common.hpp"
#include "promptsplit/data_model.hpp"
#include "promptsplit/kernel.hpp"

namespace promptsplit {

/// Sample cap for the kernel path; larger comparisons must use random features.
inline constexpr Index kExactPathMaxSamples = 20000;
/// Modes with |lambda| below this are not retained.
inline constexpr double kRetentionThreshold = 1e-6;
/// Joint-Gram factorization pivots at or below this are treated as zero.
inline constexpr double kGramEigenClamp = 1e-10;

/// The (n+m) x (n+m) kernel form of the covariance difference:
///
///   [  (1/n) K_TT (.) K_XX            (1/sqrt(nm)) K_TT' (.) K_XY  ]
///   [ -(eta/sqrt(nm)) (K_TT' (.) K_XY)^T   -(eta/m) K_T'T' (.) K_YY ]
///
/// It is not symmetric; its nonzero eigenvalues are those of the covariance
/// difference operator.
struct BlockDifferenceMatrix {
  Matrix values;
  Index n = 0;
  Index m = 0;
  double eta = 1.0;
};

/// Pooled rows: test rows first, then reference rows.
RowMatrix pooled_prompts(const PairedDataset& dx, const PairedDataset& dy);
RowMatrix pooled_outputs(const PairedDataset& dx, const PairedDataset& dy);

/// G = K_T (.) K_X over the pooled n + m samples; symmetric PSD, unit diagonal.
Matrix joint_gram(const PairedDataset& dx, const PairedDataset& dy, const KernelSpec& kt, const KernelSpec& kx);

BlockDifferenceMatrix build_block_matrix(const PairedDataset& dx, const PairedDataset& dy, const KernelSpec& kt,
                                         const KernelSpec& kx, double eta);

/// Block matrix from a precomputed pooled joint Gram (any PSD product kernel).
BlockDifferenceMatrix block_matrix_from_gram(const Matrix& joint_gram, Index n, Index m, double eta);

/// Nonzero eigenpairs of the covariance difference through the joint Gram.
///
/// With G = B B^T (B from a diagonally pivoted LDL^T factorization of G,
/// truncated at the first pivot below kGramEigenClamp) and
/// D = diag((1/n) I_n, -(eta/m) I_m), the symmetric matrix B^T D B shares the
/// nonzero eigenvalues of D G. An
/// eigenpair (lambda, z) of it yields the sample-weight vector u = D B z,
/// which satisfies (D G) u = lambda u.
///
/// Up to `top_modes` positive and `top_modes` negative modes with
/// |lambda| >= kRetentionThreshold are retained.
DifferenceSpectrum eigendecompose_difference(const PairedDataset& dx, const PairedDataset& dy, const KernelSpec& kt,
                                             const KernelSpec& kx, double eta, Index top_modes);

DifferenceSpectrum difference_spectrum_from_gram(Matrix joint_gram, Index n, Index m, double eta, Index top_modes);

/// Squared Frobenius norm of (1/n) K_T (.) K_X for a single dataset, i.e. of
/// its empirical joint kernel covariance.
double joint_diversity_exact(const PairedDataset& ds, const KernelSpec& kt, const KernelSpec& kx);

/// v(t, x) = sum_i u_i k_T(t_i, t) k_X(x_i, x) over the pooled samples.
class Eigenfunction {
 public:
  Eigenfunction(Vector weights, RowMatrix prompts, RowMatrix outputs, KernelSpec kt, KernelSpec kx);

  double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& prompt,
                    const Eigen::Ref<const Eigen::RowVectorXd>& output) const;

  /// Values at every row pair of (prompts, outputs).
  Vector evaluate(const RowMatrix& prompts, const RowMatrix& outputs) const;

  const Vector& weights() const { return weights_; }

 private:
  Vector weights_;
  RowMatrix prompts_;
  RowMatrix outputs_;
  KernelSpec kt_;
  KernelSpec kx_;
};

Eigenfunction lift_eigenvector(const Vector& u, const PairedDataset& dx, const PairedDataset& dy,
                               const KernelSpec& kt, const KernelSpec& kx);

/// Ranks samples of each retained mode by squared eigenvector entry: test
/// rows for positive modes, reference rows for negative ones.
ModeReport attribute_modes_exact(const DifferenceSpectrum& spectrum, const PairedDataset& dx,
                                 const PairedDataset& dy, Index samples_per_mode);

/// Flips `v` so that its largest-magnitude entry is positive.
void fix_sign(Eigen::Ref<Vector> v);

}  // namespace promptsplit

#pragma once

#include "promptsplit/common.hpp"
#include "promptsplit/data_model.hpp"
#include "promptsplit/kernel.hpp"

#include <vector>

namespace promptsplit {

/// Gaussian frequencies for the joint prompt/output feature map.
struct FourierFeatureSet {
  RowMatrix omega_t;  // (r/2) x d_t, entries N(0, 1/sigma_t^2)
  RowMatrix omega_x;  // (r/2) x d_x, entries N(0, 1/sigma_x^2)
  double sigma_t = 1.0;
  double sigma_x = 1.0;
  Index r = 0;
  std::uint64_t seed = 0;
};

/// Draws omega_t (row-major) then omega_x from one mt19937_64 stream.
FourierFeatureSet sample_features(double sigma_t, double sigma_x, Index d_t, Index d_x, Index r, std::uint64_t seed);

/// n x r matrix whose row i is
///   sqrt(2/r) [cos(w_t,l . t_i + w_x,l . x_i), sin(...)]_{l = 1..r/2}
/// (all cosines first, then all sines). Rows have unit norm and
/// E[row(a) . row(b)] = k_T(t_a, t_b) k_X(x_a, x_b).
RowMatrix joint_map(const PairedDataset& ds, const FourierFeatureSet& ff);

/// Lower-triangle accumulation of F^T F over fixed row blocks, combined by a
/// pairwise tree so the summation order depends only on the row count.
/// Returns the full symmetric r x r matrix.
Matrix feature_second_moment(const RowMatrix& f);

/// (1/n) FX^T FX - (eta/m) FY^T FY, exactly symmetric.
Matrix covariance_difference(const RowMatrix& fx, const RowMatrix& fy, double eta);

/// Top positive and negative modes of a symmetric r x r covariance
/// difference; `all_eigenvalues` is its full descending spectrum.
DifferenceSpectrum eigendecompose_rff(const Matrix& cd, Index top_modes);

/// Same spectrum as eigendecompose_rff(covariance_difference(fx, fy, eta)),
/// computed in the (n+m)-dimensional row space when n + m < r: with
/// [FX; FY]^T = Q R and D = diag((1/n) I_n, -(eta/m) I_m), the nonzero
/// eigenpairs follow from R D R^T and w = Q z.
DifferenceSpectrum rff_spectrum(const RowMatrix& fx, const RowMatrix& fy, double eta, Index top_modes);

/// Full descending spectrum only (zero-padded to r).
Vector rff_eigenvalues(const RowMatrix& fx, const RowMatrix& fy, double eta);

/// Ranks rows by squared projection (row . w)^2: test rows for positive
/// modes, reference rows for negative ones.
ModeReport attribute_modes_rff(const DifferenceSpectrum& spectrum, const RowMatrix& fx, const RowMatrix& fy,
                               const PairedDataset& dx, const PairedDataset& dy, Index samples_per_mode);

/// Squared Frobenius norm of the covariance difference.
double promptsplit_score(const RowMatrix& fx, const RowMatrix& fy, double eta);

/// Squared Frobenius norm of (1/n) F^T F.
double joint_diversity(const RowMatrix& f);

// ---------------------------------------------------------------------------
// Approximation-bound check

/// sqrt((8 + 8 eta^2) / r) (1 + sqrt(2 log(1/delta))).
double eigenvalue_deviation_bound(Index r, double eta, double delta);

/// l2 distance between two descending spectra after zero-padding both to a
/// common length and re-sorting.
double spectrum_deviation(const Vector& a, const Vector& b);

struct BoundOptions {
  double eta = 1.0;
  std::vector<Index> r_values{200, 800, 3200};
  Index trials = 40;
  double delta = 0.05;
  std::uint64_t seed = 0;
};

struct BoundRow {
  Index r = 0;
  Index trial = 0;
  double deviation = 0.0;
  double bound = 0.0;
  bool within = false;
};

struct BoundReport {
  std::vector<BoundRow> rows;
  std::vector<Index> r_values;
  std::vector<double> coverage;          // fraction of trials within the bound, per r
  std::vector<double> median_deviation;  // per r
  double slope = 0.0;                    // least-squares slope of log(median) on log(r); NaN if undefined
};

/// Pooled-sample cap for verify_bound, which needs the exact spectrum.
inline constexpr Index kBoundMaxSamples = 2000;

/// Compares the exact spectrum with the random-feature spectrum for every
/// r in `r_values` over `trials` independent feature draws.
BoundReport verify_bound(const PairedDataset& dx, const PairedDataset& dy, const KernelSpec& kt,
                         const KernelSpec& kx, const BoundOptions& options);

/// Seed for trial `trial` at dimension `r`, derived from a base seed.
std::uint64_t trial_seed(std::uint64_t base, Index r, Index trial);

}  // namespace promptsplit

#pragma once

#include "promptsplit/common.hpp"
#include "promptsplit/data_model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace promptsplit {

/// Gaussian-mixture comparison with one-hot prompts.
///
/// Component c has output mean (separation / sqrt(2)) e_c, so every pair of
/// means is `separation` apart. In the test dataset the n_diff differing
/// components move to (separation / sqrt(2)) e_{k_total + slot}, again at
/// distance `separation` from where they were; the reference keeps all
/// means. Noise is isotropic with expected norm `noise_scale`
/// (per-coordinate standard deviation noise_scale / sqrt(dim)).
struct MixtureSpec {
  Index k_total = 8;
  Index dim = 50;
  Index prompt_dim = 8;
  Index samples_per = 100;
  Index n_diff = 2;
  double separation = 5.0;
  double noise_scale = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledPair {
  PairedDataset test;
  PairedDataset reference;
  std::vector<Index> component_of;         // per row, identical for both datasets
  std::vector<Index> differing_components;  // ascending
};

/// Deterministic in the spec; values are rounded to float32 so they survive
/// persistence bit-exactly. Rows are grouped by component.
LabeledPair generate_mixture(const MixtureSpec& spec);

/// Full descending spectrum of
///   (1/n) sum_i (t_i (x) x_i)(t_i (x) x_i)^T - (eta/m) sum_j (t'_j (x) y_j)(t'_j (x) y_j)^T
/// using the rows as explicit features (linear kernels).
inline constexpr Index kOracleMaxTensorDim = 4096;
Vector explicit_lambda_oracle(const PairedDataset& dx, const PairedDataset& dy, double eta);

struct ModeCounts {
  Index positive = 0;
  Index negative = 0;

  bool operator==(const ModeCounts&) const = default;
};

/// Eigenvalues above tau and below -tau over the full spectrum.
ModeCounts count_significant_modes(const DifferenceSpectrum& spectrum, double tau = 0.01);

// ---------------------------------------------------------------------------
// Runtime benchmark

struct BenchOptions {
  std::vector<Index> exact_sizes{1000, 2000};  // samples per dataset
  std::vector<Index> rff_sizes{5000, 10000};
  std::vector<Index> r_values{1000};
  Index repetitions = 3;
  Index prompt_dim = 16;
  Index output_dim = 64;
  std::uint64_t seed = 0;
};

struct BenchRow {
  SpectrumPath path = SpectrumPath::exact;
  Index n = 0;
  Index r = 0;                  // 0 for the exact path
  double median_seconds = 0.0;  // NaN when the cell could not be allocated
};

/// Median wall-clock time of a full comparison (features or Grams plus the
/// eigen-solve) per (path, n, r) on random unit-norm data with n = m.
std::vector<BenchRow> bench_runtime(const BenchOptions& options);

/// CSV with header path,n,r,median_seconds.
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

/// Random pair of datasets with `n` unit-norm rows each.
std::pair<PairedDataset, PairedDataset> random_pair(Index n, Index prompt_dim, Index output_dim, std::uint64_t seed);

}  // namespace promptsplit

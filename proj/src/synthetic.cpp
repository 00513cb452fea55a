#include "promptsplit/synthetic.hpp"

#include "promptsplit/exact_spectral.hpp"
#include "promptsplit/kernel.hpp"
#include "promptsplit/rff_spectral.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <new>
#include <numeric>
#include <ostream>
#include <random>

namespace promptsplit {

void MixtureSpec::validate() const {
  require(k_total >= 1, ErrorKind::invalid_argument, "k_total must be at least 1");
  require(n_diff >= 0 && n_diff <= k_total, ErrorKind::invalid_argument, "n_diff must lie in [0, k_total]");
  require(prompt_dim >= k_total, ErrorKind::invalid_argument, "prompt_dim must be at least k_total for one-hot prompts");
  require(dim >= k_total + n_diff, ErrorKind::invalid_argument,
          "dim must be at least k_total + n_diff to hold the displaced means");
  require(samples_per >= 1, ErrorKind::invalid_argument, "samples_per must be at least 1");
  require(separation >= 0.0 && std::isfinite(separation), ErrorKind::invalid_argument,
          "separation must be finite and nonnegative");
  require(noise_scale >= 0.0 && std::isfinite(noise_scale), ErrorKind::invalid_argument,
          "noise scale must be finite and nonnegative");
}

LabeledPair generate_mixture(const MixtureSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  std::vector<Index> ids(static_cast<std::size_t>(spec.k_total));
  std::iota(ids.begin(), ids.end(), Index{0});
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<Index> differing(ids.begin(), ids.begin() + spec.n_diff);
  std::sort(differing.begin(), differing.end());

  const Index n = spec.k_total * spec.samples_per;
  const double amplitude = spec.separation / std::sqrt(2.0);
  const double noise_sd = spec.noise_scale / std::sqrt(static_cast<double>(spec.dim));
  std::normal_distribution<double> normal(0.0, 1.0);

  RowMatrix prompts = RowMatrix::Zero(n, spec.prompt_dim);
  std::vector<Index> component_of(static_cast<std::size_t>(n));
  for (Index c = 0; c < spec.k_total; ++c) {
    for (Index s = 0; s < spec.samples_per; ++s) {
      const Index row = c * spec.samples_per + s;
      prompts(row, c) = 1.0;
      component_of[static_cast<std::size_t>(row)] = c;
    }
  }

  auto side = [&](bool test) {
    RowMatrix outputs(n, spec.dim);
    for (Index c = 0; c < spec.k_total; ++c) {
      Index mean_axis = c;
      const auto it = std::find(differing.begin(), differing.end(), c);
      if (test && it != differing.end()) mean_axis = spec.k_total + (it - differing.begin());
      for (Index s = 0; s < spec.samples_per; ++s) {
        const Index row = c * spec.samples_per + s;
        for (Index j = 0; j < spec.dim; ++j) {
          const double mean = j == mean_axis ? amplitude : 0.0;
          outputs(row, j) = static_cast<double>(static_cast<float>(mean + noise_sd * normal(rng)));
        }
      }
    }
    return outputs;
  };

  RowMatrix test_outputs = side(true);
  RowMatrix ref_outputs = side(false);

  auto labels = [&](const std::string& tag) {
    std::vector<TextLabel> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Index row = 0; row < n; ++row) {
      const Index c = component_of[static_cast<std::size_t>(row)];
      out.push_back({"component " + std::to_string(c), tag + "/" + std::to_string(row)});
    }
    return out;
  };

  LabeledPair pair{
      PairedDataset("synthetic-test", EmbeddingMatrix(prompts), EmbeddingMatrix(std::move(test_outputs)),
                    labels("test")),
      PairedDataset("synthetic-reference", EmbeddingMatrix(prompts), EmbeddingMatrix(std::move(ref_outputs)),
                    labels("reference")),
      std::move(component_of), std::move(differing)};
  return pair;
}

Vector explicit_lambda_oracle(const PairedDataset& dx, const PairedDataset& dy, double eta) {
  require(dx.prompt_dim() == dy.prompt_dim() && dx.output_dim() == dy.output_dim(), ErrorKind::data,
          "embedding dimensions differ between datasets");
  require(eta > 0.0, ErrorKind::invalid_argument, "eta must be positive");
  const Index dt = dx.prompt_dim();
  const Index dxo = dx.output_dim();
  require(dt * dxo <= kOracleMaxTensorDim, ErrorKind::invalid_argument,
          "tensor feature dimension exceeds " + std::to_string(kOracleMaxTensorDim));

  auto tensor_features = [&](const PairedDataset& ds) {
    Matrix psi(ds.size(), dt * dxo);
    for (Index i = 0; i < ds.size(); ++i)
      for (Index a = 0; a < dt; ++a)
        for (Index b = 0; b < dxo; ++b) psi(i, a * dxo + b) = ds.prompts().values()(i, a) * ds.outputs().values()(i, b);
    return psi;
  };
  const Matrix px = tensor_features(dx);
  const Matrix py = tensor_features(dy);
  Matrix lambda = px.transpose() * px / static_cast<double>(dx.size()) -
                  (eta / static_cast<double>(dy.size())) * (py.transpose() * py);
  lambda = (0.5 * (lambda + lambda.transpose())).eval();
  const Eigen::SelfAdjointEigenSolver<Matrix> solver(lambda, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) fail(ErrorKind::numerical, "explicit oracle eigensolver failed");
  return solver.eigenvalues().reverse();
}

ModeCounts count_significant_modes(const DifferenceSpectrum& spectrum, double tau) {
  require(tau > 0.0, ErrorKind::invalid_argument, "tau must be positive");
  const Vector& v = spectrum.all_eigenvalues.size() > 0 ? spectrum.all_eigenvalues : spectrum.eigenvalues;
  ModeCounts counts;
  for (Index i = 0; i < v.size(); ++i) {
    if (v[i] > tau) ++counts.positive;
    if (v[i] < -tau) ++counts.negative;
  }
  return counts;
}

std::pair<PairedDataset, PairedDataset> random_pair(Index n, Index prompt_dim, Index output_dim,
                                                    std::uint64_t seed) {
  require(n >= 1 && prompt_dim >= 1 && output_dim >= 1, ErrorKind::invalid_argument, "random_pair: empty shape");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Index rows, Index cols) {
    RowMatrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return normalize_rows(EmbeddingMatrix(std::move(m)));
  };
  EmbeddingMatrix tx = draw(n, prompt_dim);
  EmbeddingMatrix xx = draw(n, output_dim);
  EmbeddingMatrix ty = draw(n, prompt_dim);
  EmbeddingMatrix xy = draw(n, output_dim);
  return {PairedDataset("random-test", std::move(tx), std::move(xx)),
          PairedDataset("random-reference", std::move(ty), std::move(xy))};
}

namespace {

template <typename F>
double median_seconds(Index repetitions, F&& run) {
  std::vector<double> times;
  for (Index rep = 0; rep < repetitions; ++rep) {
    const auto start = std::chrono::steady_clock::now();
    run();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t k = times.size();
  return k % 2 ? times[k / 2] : 0.5 * (times[k / 2 - 1] + times[k / 2]);
}

}  // namespace

std::vector<BenchRow> bench_runtime(const BenchOptions& options) {
  require(options.repetitions >= 1, ErrorKind::invalid_argument, "repetitions must be at least 1");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<BenchRow> rows;

  for (Index n : options.exact_sizes) {
    BenchRow row{SpectrumPath::exact, n, 0, nan};
    try {
      const auto [dx, dy] = random_pair(n, options.prompt_dim, options.output_dim, options.seed);
      const KernelSpec k = KernelSpec::gaussian(1.0);
      row.median_seconds = median_seconds(options.repetitions, [&] {
        volatile Index kept = eigendecompose_difference(dx, dy, k, k, 1.0, 10).retained();
        (void)kept;
      });
    } catch (const std::bad_alloc&) {
    }
    rows.push_back(row);
  }

  for (Index n : options.rff_sizes) {
    for (Index r : options.r_values) {
      BenchRow row{SpectrumPath::rff, n, r, nan};
      try {
        const auto [dx, dy] = random_pair(n, options.prompt_dim, options.output_dim, options.seed);
        row.median_seconds = median_seconds(options.repetitions, [&] {
          const FourierFeatureSet ff =
              sample_features(1.0, 1.0, options.prompt_dim, options.output_dim, r, options.seed);
          const RowMatrix fx = joint_map(dx, ff);
          const RowMatrix fy = joint_map(dy, ff);
          volatile Index kept = eigendecompose_rff(covariance_difference(fx, fy, 1.0), 10).retained();
          (void)kept;
        });
      } catch (const std::bad_alloc&) {
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "path,n,r,median_seconds\n";
  for (const BenchRow& row : rows) {
    os << to_string(row.path) << ',' << row.n << ',' << row.r << ',';
    if (std::isnan(row.median_seconds)) {
      os << "nan";
    } else {
      os << row.median_seconds;
    }
    os << '\n';
  }
}

}  // namespace promptsplit

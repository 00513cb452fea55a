#include "promptsplit/rff_spectral.hpp"

#include "promptsplit/exact_spectral.hpp"
#include "promptsplit/symmetric_eigen.hpp"


#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace promptsplit {

namespace {

constexpr Index kBlockRows = 512;

void check_features(const RowMatrix& fx, const RowMatrix& fy, double eta) {
  require(fx.rows() >= 1 && fy.rows() >= 1, ErrorKind::data, "feature matrices must have at least one row");
  require(fx.cols() == fy.cols(), ErrorKind::invalid_argument, "feature dimension r differs between datasets");
  require(eta > 0.0, ErrorKind::invalid_argument, "eta must be positive");
}

Vector difference_weights(Index n, Index m, double eta) {
  Vector d(n + m);
  d.head(n).setConstant(1.0 / static_cast<double>(n));
  d.tail(m).setConstant(-eta / static_cast<double>(m));
  return d;
}

// Keeps up to `wanted` positive modes from the top and `wanted` negative
// modes from the bottom of a spectrum of length `dim`.
template <typename Lift>
void collect_modes(const SymmetricEigen& se, Index dim, Index wanted, Lift lift, DifferenceSpectrum& out) {
  std::vector<Index> keep;
  for (std::size_t k = 0; k < se.selected.size(); ++k) {
    const Index pos = se.selected[k];
    const double lambda = se.values[pos];
    const bool positive = pos < wanted && lambda >= kRetentionThreshold;
    const bool negative = pos >= dim - wanted && lambda <= -kRetentionThreshold;
    if (positive || negative) keep.push_back(static_cast<Index>(k));
  }
  out.eigenvalues.resize(static_cast<Index>(keep.size()));
  Matrix vectors;
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const Index k = keep[j];
    Vector w = lift(se.vectors.col(k));
    const double norm = w.norm();
    if (!(norm > 0.0)) fail(ErrorKind::numerical, "degenerate eigenvector");
    w /= norm;
    fix_sign(w);
    if (j == 0) vectors.resize(w.size(), static_cast<Index>(keep.size()));
    out.eigenvalues[static_cast<Index>(j)] = se.values[se.selected[static_cast<std::size_t>(k)]];
    vectors.col(static_cast<Index>(j)) = w;
  }
  out.eigenvectors = std::move(vectors);
}

Vector padded_descending(const Vector& values, Index length) {
  Vector out = Vector::Zero(length);
  out.head(values.size()) = values;
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

// [FX; FY] as one row-major N x r matrix; its storage is F^T in column-major order.
RowMatrix stack_rows(const RowMatrix& fx, const RowMatrix& fy) {
  RowMatrix f(fx.rows() + fy.rows(), fx.cols());
  f << fx, fy;
  return f;
}

// Householder QR of F^T (r x N); the core R D R^T shares the nonzero
// eigenvalues of F^T D F.
struct ReducedCore {
  Eigen::HouseholderQR<Matrix> qr;
  Matrix core;
};

ReducedCore reduced_core(const RowMatrix& f, const Vector& d) {
  const Index total = f.rows();
  ReducedCore out{Eigen::HouseholderQR<Matrix>(Eigen::Map<const Matrix>(f.data(), f.cols(), total)), Matrix()};
  const Matrix rt = out.qr.matrixQR().topRows(total).triangularView<Eigen::Upper>();
  out.core = rt * d.asDiagonal() * rt.transpose();
  out.core = (0.5 * (out.core + out.core.transpose())).eval();
  return out;
}

}  // namespace

FourierFeatureSet sample_features(double sigma_t, double sigma_x, Index d_t, Index d_x, Index r, std::uint64_t seed) {
  require(r >= 2 && r % 2 == 0, ErrorKind::invalid_argument, "r must be even and at least 2");
  require(sigma_t > 0.0 && sigma_x > 0.0, ErrorKind::invalid_argument, "bandwidths must be positive");
  require(d_t >= 1 && d_x >= 1, ErrorKind::invalid_argument, "feature dimensions must be positive");
  FourierFeatureSet ff;
  ff.sigma_t = sigma_t;
  ff.sigma_x = sigma_x;
  ff.r = r;
  ff.seed = seed;
  ff.omega_t.resize(r / 2, d_t);
  ff.omega_x.resize(r / 2, d_x);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < ff.omega_t.size(); ++i) ff.omega_t.data()[i] = normal(rng) / sigma_t;
  for (Index i = 0; i < ff.omega_x.size(); ++i) ff.omega_x.data()[i] = normal(rng) / sigma_x;
  return ff;
}

RowMatrix joint_map(const PairedDataset& ds, const FourierFeatureSet& ff) {
  require(ds.prompt_dim() == ff.omega_t.cols() && ds.output_dim() == ff.omega_x.cols(), ErrorKind::invalid_argument,
          "joint_map: embedding dimensions do not match the frequency matrices");
  const Index half = ff.r / 2;
  const double scale = std::sqrt(2.0 / static_cast<double>(ff.r));
  const Matrix phases =
      ds.prompts().values() * ff.omega_t.transpose() + ds.outputs().values() * ff.omega_x.transpose();
  RowMatrix f(ds.size(), ff.r);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index l = 0; l < half; ++l) {
      const double p = phases(i, l);
      f(i, l) = scale * std::cos(p);
      f(i, half + l) = scale * std::sin(p);
    }
  }
  if (!f.allFinite()) fail(ErrorKind::numerical, "random features are non-finite (bandwidth too small?)");
  return f;
}

Matrix feature_second_moment(const RowMatrix& f) {
  const Index r = f.cols();
  // Binary-counter tree: entry k holds the sum of 2^k consecutive blocks.
  std::vector<std::pair<int, Matrix>> stack;
  for (Index start = 0; start < f.rows(); start += kBlockRows) {
    const Index rows = std::min(kBlockRows, f.rows() - start);
    Matrix block = Matrix::Zero(r, r);
    block.selfadjointView<Eigen::Lower>().rankUpdate(f.middleRows(start, rows).transpose());
    int level = 0;
    while (!stack.empty() && stack.back().first == level) {
      block = stack.back().second + block;
      stack.pop_back();
      ++level;
    }
    stack.emplace_back(level, std::move(block));
  }
  Matrix total = std::move(stack.back().second);
  stack.pop_back();
  while (!stack.empty()) {
    total = stack.back().second + total;
    stack.pop_back();
  }
  total.triangularView<Eigen::StrictlyUpper>() = total.transpose();
  return total;
}

Matrix covariance_difference(const RowMatrix& fx, const RowMatrix& fy, double eta) {
  check_features(fx, fy, eta);
  Matrix c = feature_second_moment(fx) / static_cast<double>(fx.rows());
  c -= (eta / static_cast<double>(fy.rows())) * feature_second_moment(fy);
  return c;
}

DifferenceSpectrum eigendecompose_rff(const Matrix& cd, Index top_modes) {
  require(cd.rows() == cd.cols() && cd.rows() >= 1, ErrorKind::invalid_argument,
          "covariance difference must be square");
  require(top_modes >= 1, ErrorKind::invalid_argument, "top_modes must be at least 1");
  const Index r = cd.rows();
  const Index wanted = std::min(top_modes, r);
  const SymmetricEigen se = symmetric_eigen(cd, wanted, wanted);
  DifferenceSpectrum out;
  out.path = SpectrumPath::rff;
  out.r = r;
  out.all_eigenvalues = se.values;
  collect_modes(se, r, wanted, [](const auto& z) { return Vector(z); }, out);
  return out;
}

DifferenceSpectrum rff_spectrum(const RowMatrix& fx, const RowMatrix& fy, double eta, Index top_modes) {
  check_features(fx, fy, eta);
  require(top_modes >= 1, ErrorKind::invalid_argument, "top_modes must be at least 1");
  const Index r = fx.cols();
  const Index n = fx.rows();
  const Index m = fy.rows();
  DifferenceSpectrum out;
  if (n + m >= r) {
    out = eigendecompose_rff(covariance_difference(fx, fy, eta), top_modes);
  } else {
    const Index total = n + m;
    ReducedCore rc = reduced_core(stack_rows(fx, fy), difference_weights(n, m, eta));
    const Index wanted = std::min(top_modes, total);
    const SymmetricEigen se = symmetric_eigen(std::move(rc.core), wanted, wanted);
    out.path = SpectrumPath::rff;
    out.r = r;
    out.all_eigenvalues = padded_descending(se.values, r);
    collect_modes(
        se, total, wanted,
        [&](const auto& z) {
          Vector w = Vector::Zero(r);
          w.head(total) = z;
          return Vector(rc.qr.householderQ() * w);
        },
        out);
  }
  out.eta = eta;
  out.n = n;
  out.m = m;
  return out;
}

Vector rff_eigenvalues(const RowMatrix& fx, const RowMatrix& fy, double eta) {
  check_features(fx, fy, eta);
  const Index r = fx.cols();
  const Index n = fx.rows();
  const Index m = fy.rows();
  if (n + m >= r) return symmetric_eigenvalues(covariance_difference(fx, fy, eta));
  ReducedCore rc = reduced_core(stack_rows(fx, fy), difference_weights(n, m, eta));
  return padded_descending(symmetric_eigenvalues(std::move(rc.core)), r);
}

ModeReport attribute_modes_rff(const DifferenceSpectrum& spectrum, const RowMatrix& fx, const RowMatrix& fy,
                               const PairedDataset& dx, const PairedDataset& dy, Index samples_per_mode) {
  require(fx.rows() == dx.size() && fy.rows() == dy.size(), ErrorKind::invalid_argument,
          "feature rows do not match the datasets");
  require(spectrum.retained() == 0 || spectrum.eigenvectors.rows() == fx.cols(), ErrorKind::invalid_argument,
          "eigenvector length does not match the feature dimension");
  ModeReport report;
  for (Index j = 0; j < spectrum.retained(); ++j) {
    const double lambda = spectrum.eigenvalues[j];
    Mode mode;
    mode.eigenvalue = lambda;
    if (lambda > 0) {
      mode.side = ModeSide::test_dominant;
      mode.samples = rank_samples(fx * spectrum.eigenvectors.col(j), DatasetRole::test, samples_per_mode, dx);
    } else {
      mode.side = ModeSide::reference_dominant;
      mode.samples = rank_samples(fy * spectrum.eigenvectors.col(j), DatasetRole::reference, samples_per_mode, dy);
    }
    report.modes.push_back(std::move(mode));
  }
  return report;
}

double promptsplit_score(const RowMatrix& fx, const RowMatrix& fy, double eta) {
  check_features(fx, fy, eta);
  const Index n = fx.rows();
  const Index m = fy.rows();
  if (n + m >= fx.cols()) return covariance_difference(fx, fy, eta).squaredNorm();
  // ||F^T D F||_F^2 = sum_ij d_i d_j (F F^T)_ij^2
  const RowMatrix f = stack_rows(fx, fy);
  Matrix h = Matrix::Zero(n + m, n + m);
  h.selfadjointView<Eigen::Lower>().rankUpdate(f);
  h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
  const Vector d = difference_weights(n, m, eta);
  return (d.asDiagonal() * h.cwiseAbs2() * d.asDiagonal()).sum();
}

double joint_diversity(const RowMatrix& f) {
  require(f.rows() >= 1 && f.cols() >= 1, ErrorKind::data, "joint_diversity needs a nonempty feature matrix");
  const double n = static_cast<double>(f.rows());
  Matrix g;
  if (f.rows() < f.cols()) {
    g = Matrix::Zero(f.rows(), f.rows());
    g.selfadjointView<Eigen::Lower>().rankUpdate(f);
  } else {
    g = Matrix::Zero(f.cols(), f.cols());
    g.selfadjointView<Eigen::Lower>().rankUpdate(f.transpose());
  }
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g.squaredNorm() / (n * n);
}

double eigenvalue_deviation_bound(Index r, double eta, double delta) {
  require(r >= 1, ErrorKind::invalid_argument, "r must be positive");
  require(delta > 0.0 && delta < 1.0, ErrorKind::invalid_argument, "delta must lie in (0, 1)");
  return std::sqrt((8.0 + 8.0 * eta * eta) / static_cast<double>(r)) * (1.0 + std::sqrt(2.0 * std::log(1.0 / delta)));
}

double spectrum_deviation(const Vector& a, const Vector& b) {
  const Index len = std::max(a.size(), b.size());
  return (padded_descending(a, len) - padded_descending(b, len)).norm();
}

std::uint64_t trial_seed(std::uint64_t base, Index r, Index trial) {
  // splitmix64 finalizer over a combination of the three inputs
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(trial) + 1) +
                    0xBF58476D1CE4E5B9ULL * static_cast<std::uint64_t>(r);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

BoundReport verify_bound(const PairedDataset& dx, const PairedDataset& dy, const KernelSpec& kt,
                         const KernelSpec& kx, const BoundOptions& options) {
  require(!options.r_values.empty(), ErrorKind::invalid_argument, "r list must not be empty");
  require(options.trials >= 1, ErrorKind::invalid_argument, "trials must be at least 1");
  require(options.eta > 0.0, ErrorKind::invalid_argument, "eta must be positive");
  for (Index r : options.r_values)
    require(r >= 2 && r % 2 == 0, ErrorKind::invalid_argument, "every r must be even and at least 2");
  if (dx.size() + dy.size() > kBoundMaxSamples) {
    fail(ErrorKind::data, "bound check needs the exact spectrum and supports at most " +
                              std::to_string(kBoundMaxSamples) + " pooled samples");
  }

  const Vector exact =
      difference_spectrum_from_gram(joint_gram(dx, dy, kt, kx), dx.size(), dy.size(), options.eta, 1)
          .all_eigenvalues;

  BoundReport report;
  report.r_values = options.r_values;
  std::vector<double> log_r;
  std::vector<double> log_med;
  for (Index r : options.r_values) {
    const double bound = eigenvalue_deviation_bound(r, options.eta, options.delta);
    std::vector<double> deviations;
    Index within = 0;
    for (Index trial = 0; trial < options.trials; ++trial) {
      const FourierFeatureSet ff =
          sample_features(kt.sigma, kx.sigma, dx.prompt_dim(), dx.output_dim(), r, trial_seed(options.seed, r, trial));
      const double dev = spectrum_deviation(exact, rff_eigenvalues(joint_map(dx, ff), joint_map(dy, ff), options.eta));
      const bool ok = dev <= bound;
      within += ok ? 1 : 0;
      deviations.push_back(dev);
      report.rows.push_back({r, trial, dev, bound, ok});
    }
    std::sort(deviations.begin(), deviations.end());
    const std::size_t k = deviations.size();
    const double median = k % 2 ? deviations[k / 2] : 0.5 * (deviations[k / 2 - 1] + deviations[k / 2]);
    report.coverage.push_back(static_cast<double>(within) / static_cast<double>(options.trials));
    report.median_deviation.push_back(median);
    log_r.push_back(std::log(static_cast<double>(r)));
    log_med.push_back(std::log(median));
  }

  report.slope = std::numeric_limits<double>::quiet_NaN();
  const bool finite = std::all_of(log_med.begin(), log_med.end(), [](double v) { return std::isfinite(v); });
  if (log_r.size() >= 2 && finite) {
    const Eigen::Map<const Vector> x(log_r.data(), static_cast<Index>(log_r.size()));
    const Eigen::Map<const Vector> y(log_med.data(), static_cast<Index>(log_med.size()));
    const Vector xc = x.array() - x.mean();
    const double sxx = xc.squaredNorm();
    if (sxx > 0.0) report.slope = xc.dot(y.array().matrix() - Vector::Constant(y.size(), y.mean())) / sxx;
  }
  return report;
}

}  // namespace promptsplit

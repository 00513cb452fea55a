#include "promptsplit/exact_spectral.hpp"

#include "promptsplit/symmetric_eigen.hpp"

#include <algorithm>

namespace promptsplit {

namespace {

void check_pair(const PairedDataset& dx, const PairedDataset& dy) {
  require(dx.size() >= 1 && dy.size() >= 1, ErrorKind::data, "both datasets need at least one sample");
  require(dx.prompt_dim() == dy.prompt_dim(), ErrorKind::data, "prompt embedding dimensions differ between datasets");
  require(dx.output_dim() == dy.output_dim(), ErrorKind::data, "output embedding dimensions differ between datasets");
}

RowMatrix stack(const RowMatrix& top, const RowMatrix& bottom) {
  RowMatrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

Vector difference_weights(Index n, Index m, double eta) {
  Vector d(n + m);
  d.head(n).setConstant(1.0 / static_cast<double>(n));
  d.tail(m).setConstant(-eta / static_cast<double>(m));
  return d;
}

}  // namespace

void fix_sign(Eigen::Ref<Vector> v) {
  if (v.size() == 0) return;
  Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  if (v[idx] < 0) v = -v;
}

RowMatrix pooled_prompts(const PairedDataset& dx, const PairedDataset& dy) {
  return stack(dx.prompts().values(), dy.prompts().values());
}

RowMatrix pooled_outputs(const PairedDataset& dx, const PairedDataset& dy) {
  return stack(dx.outputs().values(), dy.outputs().values());
}

Matrix joint_gram(const PairedDataset& dx, const PairedDataset& dy, const KernelSpec& kt, const KernelSpec& kx) {
  check_pair(dx, dy);
  Matrix g = gram(pooled_prompts(dx, dy), kt);
  g.array() *= gram(pooled_outputs(dx, dy), kx).array();
  if (!g.allFinite()) fail(ErrorKind::numerical, "joint Gram has non-finite entries (bandwidth too small?)");
  return g;
}

BlockDifferenceMatrix block_matrix_from_gram(const Matrix& g, Index n, Index m, double eta) {
  require(n >= 1 && m >= 1, ErrorKind::data, "both datasets need at least one sample");
  require(g.rows() == n + m && g.cols() == n + m, ErrorKind::invalid_argument, "joint Gram has the wrong shape");
  require(eta > 0.0, ErrorKind::invalid_argument, "eta must be positive");
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  const double cross = 1.0 / std::sqrt(dn * dm);

  BlockDifferenceMatrix k{Matrix(n + m, n + m), n, m, eta};
  k.values.topLeftCorner(n, n) = g.topLeftCorner(n, n) / dn;
  k.values.topRightCorner(n, m) = g.topRightCorner(n, m) * cross;
  k.values.bottomLeftCorner(m, n) = -eta * cross * g.topRightCorner(n, m).transpose();
  k.values.bottomRightCorner(m, m) = -(eta / dm) * g.bottomRightCorner(m, m);
  return k;
}

BlockDifferenceMatrix build_block_matrix(const PairedDataset& dx, const PairedDataset& dy, const KernelSpec& kt,
                                         const KernelSpec& kx, double eta) {
  return block_matrix_from_gram(joint_gram(dx, dy, kt, kx), dx.size(), dy.size(), eta);
}

DifferenceSpectrum difference_spectrum_from_gram(Matrix g, Index n, Index m, double eta, Index top_modes) {
  require(n >= 1 && m >= 1, ErrorKind::data, "both datasets need at least one sample");
  require(g.rows() == n + m && g.cols() == n + m, ErrorKind::invalid_argument, "joint Gram has the wrong shape");
  require(eta > 0.0, ErrorKind::invalid_argument, "eta must be positive");
  require(top_modes >= 1, ErrorKind::invalid_argument, "top_modes must be at least 1");
  const Index total = n + m;
  if (!g.allFinite()) fail(ErrorKind::numerical, "joint Gram has non-finite entries");

  // Diagonally pivoted LDL^T; pivots decrease, so truncating at the first one
  // below the clamp keeps a well-conditioned leading factor.
  const Eigen::LDLT<Matrix> ldlt(g);
  g.resize(0, 0);
  const Vector& pivots = ldlt.vectorD();
  Index rank = 0;
  while (rank < total && pivots[rank] > kGramEigenClamp) ++rank;
  if (rank == 0) fail(ErrorKind::numerical, "joint Gram has no pivot above the clamp");

  // B = P^T L diag(sqrt(p)) restricted to the retained pivots, so G ~= B B^T.
  Matrix b = Matrix(ldlt.matrixL()).leftCols(rank) * pivots.head(rank).cwiseSqrt().asDiagonal();
  b = ldlt.transpositionsP().transpose() * b;

  const Vector d = difference_weights(n, m, eta);
  Matrix db = d.asDiagonal() * b;
  Matrix core = b.transpose() * db;
  core = (0.5 * (core + core.transpose())).eval();

  const Index wanted = std::min(top_modes, rank);
  const SymmetricEigen se = symmetric_eigen(std::move(core), wanted, wanted);

  DifferenceSpectrum out;
  out.path = SpectrumPath::exact;
  out.eta = eta;
  out.n = n;
  out.m = m;
  out.all_eigenvalues = Vector::Zero(total);
  out.all_eigenvalues.head(rank) = se.values;
  std::sort(out.all_eigenvalues.begin(), out.all_eigenvalues.end(), std::greater<>());

  std::vector<std::pair<double, Vector>> modes;
  for (std::size_t k = 0; k < se.selected.size(); ++k) {
    const Index pos = se.selected[k];
    const double lambda = se.values[pos];
    const bool positive = pos < wanted && lambda >= kRetentionThreshold;
    const bool negative = pos >= rank - wanted && lambda <= -kRetentionThreshold;
    if (!positive && !negative) continue;
    Vector u = db * se.vectors.col(static_cast<Index>(k));
    const double norm = u.norm();
    if (!(norm > 0.0)) fail(ErrorKind::numerical, "degenerate sample-weight eigenvector");
    u /= norm;
    fix_sign(u);
    modes.emplace_back(lambda, std::move(u));
  }
  out.eigenvalues.resize(static_cast<Index>(modes.size()));
  out.eigenvectors.resize(total, static_cast<Index>(modes.size()));
  for (std::size_t k = 0; k < modes.size(); ++k) {
    out.eigenvalues[static_cast<Index>(k)] = modes[k].first;
    out.eigenvectors.col(static_cast<Index>(k)) = modes[k].second;
  }
  return out;
}

DifferenceSpectrum eigendecompose_difference(const PairedDataset& dx, const PairedDataset& dy, const KernelSpec& kt,
                                             const KernelSpec& kx, double eta, Index top_modes) {
  check_pair(dx, dy);
  if (dx.size() + dy.size() > kExactPathMaxSamples) {
    fail(ErrorKind::data, "exact path supports at most " + std::to_string(kExactPathMaxSamples) +
                              " pooled samples (got " + std::to_string(dx.size() + dy.size()) +
                              "); use the rff path instead");
  }
  DifferenceSpectrum out =
      difference_spectrum_from_gram(joint_gram(dx, dy, kt, kx), dx.size(), dy.size(), eta, top_modes);
  out.sigma_t = kt.sigma;
  out.sigma_x = kx.sigma;
  return out;
}

double joint_diversity_exact(const PairedDataset& ds, const KernelSpec& kt, const KernelSpec& kx) {
  const Matrix k = hadamard(gram(ds.prompts().values(), kt), gram(ds.outputs().values(), kx));
  const double n = static_cast<double>(ds.size());
  return k.squaredNorm() / (n * n);
}

Eigenfunction::Eigenfunction(Vector weights, RowMatrix prompts, RowMatrix outputs, KernelSpec kt, KernelSpec kx)
    : weights_(std::move(weights)), prompts_(std::move(prompts)), outputs_(std::move(outputs)), kt_(kt), kx_(kx) {
  require(weights_.size() == prompts_.rows() && weights_.size() == outputs_.rows(), ErrorKind::invalid_argument,
          "eigenvector length does not match the pooled sample count");
}

double Eigenfunction::operator()(const Eigen::Ref<const Eigen::RowVectorXd>& prompt,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& output) const {
  require(prompt.size() == prompts_.cols() && output.size() == outputs_.cols(), ErrorKind::invalid_argument,
          "eigenfunction argument has the wrong dimension");
  double sum = 0.0;
  for (Index i = 0; i < weights_.size(); ++i) {
    sum += weights_[i] * gaussian_kernel(prompts_.row(i), prompt, kt_.sigma) *
           gaussian_kernel(outputs_.row(i), output, kx_.sigma);
  }
  return sum;
}

Vector Eigenfunction::evaluate(const RowMatrix& prompts, const RowMatrix& outputs) const {
  require(prompts.rows() == outputs.rows(), ErrorKind::invalid_argument, "evaluate: row count mismatch");
  const Matrix k = hadamard(gram(prompts, prompts_, kt_), gram(outputs, outputs_, kx_));
  return k * weights_;
}

Eigenfunction lift_eigenvector(const Vector& u, const PairedDataset& dx, const PairedDataset& dy,
                               const KernelSpec& kt, const KernelSpec& kx) {
  check_pair(dx, dy);
  require(u.size() == dx.size() + dy.size(), ErrorKind::invalid_argument,
          "eigenvector length must equal n + m");
  return Eigenfunction(u, pooled_prompts(dx, dy), pooled_outputs(dx, dy), kt, kx);
}

ModeReport attribute_modes_exact(const DifferenceSpectrum& spectrum, const PairedDataset& dx,
                                 const PairedDataset& dy, Index samples_per_mode) {
  const Index n = dx.size();
  const Index m = dy.size();
  require(spectrum.eigenvectors.rows() == n + m, ErrorKind::invalid_argument,
          "spectrum does not belong to these datasets");
  ModeReport report;
  for (Index j = 0; j < spectrum.retained(); ++j) {
    const double lambda = spectrum.eigenvalues[j];
    const auto u = spectrum.eigenvectors.col(j);
    Mode mode;
    mode.eigenvalue = lambda;
    if (lambda > 0) {
      mode.side = ModeSide::test_dominant;
      mode.samples = rank_samples(u.head(n), DatasetRole::test, samples_per_mode, dx);
    } else {
      mode.side = ModeSide::reference_dominant;
      mode.samples = rank_samples(u.tail(m), DatasetRole::reference, samples_per_mode, dy);
    }
    report.modes.push_back(std::move(mode));
  }
  return report;
}

}  // namespace promptsplit

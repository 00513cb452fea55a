#include "promptsplit/kernel.hpp"

#include "promptsplit/symmetric_eigen.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace promptsplit {

double median_pairwise_distance(const RowMatrix& m, Index max_rows, std::uint64_t seed) {
  require(m.rows() >= 2, ErrorKind::invalid_argument, "median pairwise distance needs at least 2 rows");
  RowMatrix sample;
  if (m.rows() > max_rows) {
    std::vector<Index> idx(static_cast<std::size_t>(m.rows()));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(max_rows));
    std::sort(idx.begin(), idx.end());
    sample.resize(max_rows, m.cols());
    for (Index i = 0; i < max_rows; ++i) sample.row(i) = m.row(idx[static_cast<std::size_t>(i)]);
  } else {
    sample = m;
  }
  const Matrix d2 = squared_distances(sample, sample);
  std::vector<double> upper;
  upper.reserve(static_cast<std::size_t>(d2.rows() * (d2.rows() - 1) / 2));
  for (Index j = 1; j < d2.cols(); ++j)
    for (Index i = 0; i < j; ++i) upper.push_back(std::sqrt(d2(i, j)));
  const auto mid = upper.begin() + static_cast<std::ptrdiff_t>(upper.size() / 2);
  std::nth_element(upper.begin(), mid, upper.end());
  double med = *mid;
  if (upper.size() % 2 == 0) {
    med = (med + *std::max_element(upper.begin(), mid)) / 2.0;
  }
  return med;
}

namespace {

// Distinct rows of `m` with their relative frequencies. The probe covariance
// (1/n) sum_i f(m_i) f(m_i)^T only depends on this weighted set, and prompt
// embeddings repeat heavily.
struct WeightedRows {
  RowMatrix rows;
  Vector weights;
};

WeightedRows distinct_rows(const RowMatrix& m) {
  std::vector<Index> order(static_cast<std::size_t>(m.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  auto less = [&](Index a, Index b) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (m(a, j) != m(b, j)) return m(a, j) < m(b, j);
    }
    return a < b;
  };
  std::sort(order.begin(), order.end(), less);
  std::vector<Index> firsts;
  std::vector<double> counts;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k > 0 && m.row(order[k]) == m.row(order[k - 1])) {
      counts.back() += 1.0;
    } else {
      firsts.push_back(order[k]);
      counts.push_back(1.0);
    }
  }
  WeightedRows out{RowMatrix(static_cast<Index>(firsts.size()), m.cols()), Vector(static_cast<Index>(firsts.size()))};
  for (std::size_t k = 0; k < firsts.size(); ++k) {
    out.rows.row(static_cast<Index>(k)) = m.row(firsts[k]);
    out.weights[static_cast<Index>(k)] = counts[k] / static_cast<double>(m.rows());
  }
  return out;
}

// Phases m * Z^T for standard normal frequencies Z ((r/2) x d); dividing by
// sigma gives the phases for bandwidth sigma.
Matrix base_phases(const RowMatrix& m, Index r, std::uint64_t seed) {
  require(r >= 2 && r % 2 == 0, ErrorKind::invalid_argument, "probe dimension must be even and at least 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(r / 2, m.cols());
  for (Index i = 0; i < z.rows(); ++i)
    for (Index j = 0; j < z.cols(); ++j) z(i, j) = normal(rng);
  return m * z.transpose();
}

class GapProbe {
 public:
  GapProbe(const RowMatrix& m, Index r, std::uint64_t seed) {
    WeightedRows w = distinct_rows(m);
    phases_ = base_phases(w.rows, r, seed);
    sqrt_weights_ = w.weights.cwiseSqrt();
  }

  // Exact lambda_1 - lambda_2 of the probe covariance.
  double gap(double sigma) const { return top_gap(small_covariance(features(sigma))); }

  // True when the gap at sigma is certainly >= threshold. Uses a Rayleigh
  // quotient q <= lambda_1 with lambda_2 <= 1 - lambda_1 (unit trace) and
  // lambda_2^2 <= ||C||_F^2 - lambda_1^2; falls back to the exact gap.
  bool gap_at_least(double sigma, double threshold) const {
    constexpr double margin = 1e-9;
    const Matrix f = features(sigma);
    const double q = rayleigh_lower_bound(f, 0.5 * (1.0 + threshold + margin));
    if (2.0 * q - 1.0 >= threshold + margin) return true;
    const Matrix c = small_covariance(f);
    const double fro = c.squaredNorm();
    if (q - std::sqrt(std::max(0.0, fro - q * q)) >= threshold + margin) return true;
    return top_gap(c) >= threshold;
  }

 private:
  // Weighted features diag(sqrt(w)) F, so that C = F_w^T F_w.
  Matrix features(double sigma) const {
    const Index half = phases_.cols();
    const double scale = std::sqrt(1.0 / static_cast<double>(half));  // sqrt(2 / r)
    Matrix f(phases_.rows(), 2 * half);
    f.leftCols(half) = ((phases_ / sigma).array().cos() * scale).matrix();
    f.rightCols(half) = ((phases_ / sigma).array().sin() * scale).matrix();
    return sqrt_weights_.asDiagonal() * f;
  }

  // C = F_w^T F_w or, when smaller, F_w F_w^T (same nonzero spectrum).
  static Matrix small_covariance(const Matrix& f) {
    Matrix c;
    if (f.rows() < f.cols()) {
      c = Matrix::Zero(f.rows(), f.rows());
      c.selfadjointView<Eigen::Lower>().rankUpdate(f);
    } else {
      c = Matrix::Zero(f.cols(), f.cols());
      c.selfadjointView<Eigen::Lower>().rankUpdate(f.transpose());
    }
    c.triangularView<Eigen::StrictlyUpper>() = c.transpose();
    return c;
  }

  static double top_gap(Matrix c) {
    const Vector values = symmetric_eigenvalues(std::move(c));
    return values.size() >= 2 ? values[0] - values[1] : values[0];
  }

  // Power iteration on F_w^T F_w started from the weighted mean feature;
  // stops early once the estimate reaches `enough`.
  double rayleigh_lower_bound(const Matrix& f, double enough) const {
    Vector v = f.transpose() * sqrt_weights_;
    if (!(v.norm() > 0.0)) v = Vector::Unit(f.cols(), 0);
    v.normalize();
    double q = 0.0;
    for (int it = 0; it < 40; ++it) {
      Vector cv = f.transpose() * (f * v);
      q = std::max(q, v.dot(cv));
      if (q >= enough) break;
      const double norm = cv.norm();
      if (!(norm > 0.0)) break;
      v = cv / norm;
    }
    return q;
  }

  Matrix phases_;
  Vector sqrt_weights_;
};

}  // namespace

double covariance_top_gap(const RowMatrix& m, double sigma, Index r, std::uint64_t seed) {
  require(sigma > 0.0, ErrorKind::invalid_argument, "sigma must be positive");
  require(m.rows() >= 1, ErrorKind::invalid_argument, "covariance_top_gap needs at least one row");
  return GapProbe(m, r, seed).gap(sigma);
}

BandwidthChoice select_bandwidth(const RowMatrix& m, const BandwidthOptions& options) {
  require(m.rows() >= 2, ErrorKind::data, "bandwidth selection needs at least 2 rows");
  require(options.grid_points >= 2, ErrorKind::invalid_argument, "bandwidth grid needs at least 2 points");
  require(options.gap_threshold > 0.0, ErrorKind::invalid_argument, "gap threshold must be positive");
  const double median = median_pairwise_distance(m, 2000, options.seed);
  if (!(median > 0.0)) fail(ErrorKind::data, "bandwidth selection: all rows are identical (zero median distance)");

  BandwidthChoice choice;
  choice.grid.resize(static_cast<std::size_t>(options.grid_points));
  for (Index i = 0; i < options.grid_points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(options.grid_points - 1);
    choice.grid[static_cast<std::size_t>(i)] = median * std::pow(10.0, -2.0 + 4.0 * t);
  }

  const GapProbe probe(m, options.r_probe, options.seed);
  // The gap grows with sigma (flat spectrum for tiny sigma, rank one for
  // huge sigma), so the scan runs downward and stops at the first hit.
  for (auto it = choice.grid.rbegin(); it != choice.grid.rend(); ++it) {
    if (probe.gap_at_least(*it, options.gap_threshold)) continue;
    choice.sigma = *it;
    choice.gap = probe.gap(*it);
    choice.qualified = true;
    return choice;
  }
  choice.sigma = choice.grid.front();
  choice.gap = probe.gap(choice.sigma);
  choice.qualified = false;
  return choice;
}

}  // namespace promptsplit

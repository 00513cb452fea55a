#include "oracles.hpp"

#include "promptsplit/kernel.hpp"
#include "promptsplit/symmetric_eigen.hpp"

#include <doctest.h>

using namespace promptsplit;

TEST_SUITE("kernel") {
  TEST_CASE("gaussian kernel golden values") {
    Eigen::RowVectorXd u(5), v(5);
    u << 0.1, -0.2, 0.3, 0.4, -0.5;
    v << 0.0, 0.25, -0.1, 0.6, 0.2;
    // exp(-||u - v||^2 / (2 * 0.49)) evaluated in extended precision.
    CHECK(std::abs(gaussian_kernel(u, v, 0.7) - 0.39815322221381255) <= 1e-15);
    Eigen::RowVector2d a(1.0, 0.0), b(0.0, 1.0);
    CHECK(std::abs(gaussian_kernel(a, b, 1.0) - std::exp(-1.0)) <= 1e-15);
    CHECK(gaussian_kernel(a, a, 0.3) == 1.0);
    CHECK_THROWS_AS(gaussian_kernel(a, b, 0.0), Error);
    CHECK_THROWS_AS(KernelSpec::gaussian(-1.0), Error);
    CHECK_THROWS_AS(KernelSpec::gaussian(std::numeric_limits<double>::infinity()), Error);
  }

  TEST_CASE("gram matches the pairwise loop") {
    std::mt19937_64 rng(1);
    for (double sigma : {0.3, 1.0, 4.0}) {
      const RowMatrix a = oracle::random_matrix(37, 6, rng);
      const RowMatrix b = oracle::random_matrix(23, 6, rng);
      const KernelSpec k = KernelSpec::gaussian(sigma);
      CHECK((gram(a, b, k) - oracle::gram_loop(a, b, sigma)).cwiseAbs().maxCoeff() <= 1e-13);
      CHECK((gram(a, k) - oracle::gram_loop(a, a, sigma)).cwiseAbs().maxCoeff() <= 1e-13);
      CHECK((gram(a, b, k) - gram(b, a, k).transpose()).cwiseAbs().maxCoeff() <= 1e-13);
    }
    const RowMatrix p = RowMatrix::Ones(2, 3), q = RowMatrix::Ones(2, 4);
    CHECK_THROWS_AS(gram(p, q, KernelSpec::gaussian(1.0)), Error);
  }

  TEST_CASE("single row gram is [1]") {
    const RowMatrix a = RowMatrix::Constant(1, 4, 0.5);
    const Matrix g = gram(a, KernelSpec::gaussian(0.2));
    REQUIRE(g.rows() == 1);
    CHECK(g(0, 0) == 1.0);
  }

  TEST_CASE("normalized self-gram is symmetric PSD with unit-trace scaling") {
    std::mt19937_64 rng(2);
    for (Index n : {2, 10, 50, 200}) {
      const RowMatrix a = oracle::random_matrix(n, 5, rng);
      const Matrix g = gram(a, KernelSpec::gaussian(1.3));
      CHECK(g == g.transpose());
      CHECK(std::abs(g.trace() / static_cast<double>(n) - 1.0) <= 1e-10);
      CHECK(oracle::symmetric_eigenvalues_desc(g).minCoeff() >= -1e-9);
      CHECK((g.diagonal().array() == 1.0).all());
    }
  }

  TEST_CASE("hadamard product of grams stays PSD") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      const RowMatrix t = oracle::random_matrix(40, 4, rng);
      const RowMatrix x = oracle::random_matrix(40, 7, rng);
      const Matrix kt = gram(t, KernelSpec::gaussian(0.8));
      const Matrix kx = gram(x, KernelSpec::gaussian(2.0));
      const Matrix g = hadamard(kt, kx);
      CHECK(oracle::symmetric_eigenvalues_desc(g).minCoeff() >= -1e-9);
      for (Index i = 0; i < 40; i += 7)
        for (Index j = 0; j < 40; j += 5)
          CHECK(std::abs(g(i, j) - oracle::gaussian(t.row(i), t.row(j), 0.8) *
                                       oracle::gaussian(x.row(i), x.row(j), 2.0)) <= 1e-13);
    }
    const Matrix k = gram(oracle::random_matrix(15, 3, rng), KernelSpec::gaussian(1.0));
    const Matrix ones = Matrix::Ones(15, 15);
    CHECK(hadamard(k, ones) == k);
    const Matrix a = Matrix::Ones(2, 2), b = Matrix::Ones(3, 2);
    CHECK_THROWS_AS(hadamard(a, b), Error);
  }

  TEST_CASE("median pairwise distance matches brute force") {
    std::mt19937_64 rng(4);
    for (Index n : {2, 3, 8, 51}) {
      const RowMatrix a = oracle::random_matrix(n, 3, rng);
      std::vector<double> d;
      for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) d.push_back((a.row(i) - a.row(j)).norm());
      std::sort(d.begin(), d.end());
      const std::size_t k = d.size();
      const double expected = k % 2 == 1 ? d[k / 2] : 0.5 * (d[k / 2 - 1] + d[k / 2]);
      CHECK(median_pairwise_distance(a) == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK_THROWS_AS(median_pairwise_distance(RowMatrix::Ones(1, 3)), Error);
  }

  TEST_CASE("symmetric eigen helpers agree with a reference solver") {
    std::mt19937_64 rng(5);
    const RowMatrix r = oracle::random_matrix(30, 30, rng);
    const Matrix a = (r + r.transpose()) / 2.0;
    const Vector ref = oracle::symmetric_eigenvalues_desc(a);
    CHECK((symmetric_eigenvalues(a) - ref).cwiseAbs().maxCoeff() <= 1e-10);
    const SymmetricEigen se = symmetric_eigen(a, 3, 2);
    CHECK((se.values - ref).cwiseAbs().maxCoeff() <= 1e-10);
    REQUIRE(se.selected.size() == 5);
    for (std::size_t k = 0; k < se.selected.size(); ++k) {
      const Vector v = se.vectors.col(static_cast<Index>(k));
      CHECK(std::abs(v.norm() - 1.0) <= 1e-10);
      CHECK((a * v - se.values[se.selected[k]] * v).norm() <= 1e-9);
    }
    const SymmetricDecomposition sd = symmetric_decomposition(a);
    CHECK((sd.vectors * sd.values.asDiagonal() * sd.vectors.transpose() - a).cwiseAbs().maxCoeff() <= 1e-10);
  }

  TEST_CASE("bandwidth selection") {
    SUBCASE("grid spans four decades around the median distance") {
      std::mt19937_64 rng(6);
      const RowMatrix a = oracle::unit_rows(oracle::random_matrix(60, 8, rng));
      const BandwidthChoice c = select_bandwidth(a, {0.01, 200, 30, 1});
      const double med = median_pairwise_distance(a);
      REQUIRE(c.grid.size() == 30);
      CHECK(c.grid.front() == doctest::Approx(1e-2 * med).epsilon(1e-12));
      CHECK(c.grid.back() == doctest::Approx(1e2 * med).epsilon(1e-12));
      CHECK(std::find(c.grid.begin(), c.grid.end(), c.sigma) != c.grid.end());
      CHECK(c.qualified);
      CHECK(c.gap < 0.01);
      CHECK(std::abs(c.gap - covariance_top_gap(a, c.sigma, 200, 1)) <= 1e-9);
    }

    SUBCASE("returns the largest qualifying grid point") {
      std::mt19937_64 rng(16);
      const RowMatrix a = oracle::unit_rows(oracle::random_matrix(40, 4, rng));
      const BandwidthChoice c = select_bandwidth(a, {0.01, 300, 12, 3});
      REQUIRE(c.qualified);
      CHECK(covariance_top_gap(a, c.sigma, 300, 3) < 0.01);
      for (double s : c.grid)
        if (s > c.sigma) CHECK(covariance_top_gap(a, s, 300, 3) >= 0.01);
    }

    SUBCASE("two orthonormal rows pass the re-check") {
      const RowMatrix a = RowMatrix::Identity(2, 2);
      const BandwidthChoice c = select_bandwidth(a);
      CHECK(c.qualified);
      CHECK(covariance_top_gap(a, c.sigma, 1000, 0) < 0.01);
    }

    SUBCASE("eight spread clusters get a larger bandwidth than one tight cluster") {
      std::mt19937_64 rng(7);
      const RowMatrix tight = 0.1 * oracle::random_matrix(200, 6, rng);
      const RowMatrix centers = 5.0 * oracle::random_matrix(8, 6, rng);
      RowMatrix clustered = 0.1 * oracle::random_matrix(200, 6, rng);
      for (Index i = 0; i < 200; ++i) clustered.row(i) += centers.row(i % 8);
      CHECK(select_bandwidth(clustered).sigma > select_bandwidth(tight).sigma);
    }

    SUBCASE("deterministic in the seed") {
      std::mt19937_64 rng(8);
      const RowMatrix a = oracle::random_matrix(80, 5, rng);
      const BandwidthChoice c1 = select_bandwidth(a, {0.01, 300, 30, 9});
      const BandwidthChoice c2 = select_bandwidth(a, {0.01, 300, 30, 9});
      CHECK(c1.sigma == c2.sigma);
      CHECK(c1.gap == c2.gap);
    }

    SUBCASE("no grid point qualifies") {
      const RowMatrix a = RowMatrix::Identity(2, 2);
      const BandwidthChoice c = select_bandwidth(a, {1e-300, 100, 5, 0});
      CHECK_FALSE(c.qualified);
      CHECK(c.sigma == c.grid.front());
    }

    SUBCASE("invalid inputs") {
      CHECK_THROWS_AS(select_bandwidth(RowMatrix::Ones(1, 3)), Error);
      CHECK_THROWS_AS(select_bandwidth(RowMatrix::Ones(5, 3)), Error);
      CHECK_THROWS_AS(select_bandwidth(RowMatrix::Identity(3, 3), {0.01, 7, 30, 0}), Error);
    }
  }
}

#include "oracles.hpp"

#include "promptsplit/exact_spectral.hpp"
#include "promptsplit/synthetic.hpp"

#include <doctest.h>

#include <sstream>

using namespace promptsplit;

TEST_SUITE("synthetic") {
  TEST_CASE("mixture layout") {
    const MixtureSpec spec;
    const LabeledPair pair = generate_mixture(spec);
    CHECK(pair.test.size() == 800);
    CHECK(pair.reference.size() == 800);
    CHECK(pair.test.prompt_dim() == 8);
    CHECK(pair.test.output_dim() == 50);
    CHECK(pair.differing_components.size() == 2);
    CHECK(std::is_sorted(pair.differing_components.begin(), pair.differing_components.end()));
    CHECK(pair.test.prompts() == pair.reference.prompts());
    for (Index row = 0; row < 800; ++row) {
      const Index c = pair.component_of[static_cast<std::size_t>(row)];
      CHECK(c == row / 100);
      CHECK(pair.test.prompts().values()(row, c) == 1.0);
      CHECK(pair.test.prompts().values().row(row).sum() == 1.0);
    }
    REQUIRE(pair.test.labels());
    CHECK((*pair.test.labels())[150].prompt_text == "component 1");
    CHECK((*pair.reference.labels())[3].output_ref == "reference/3");

    const LabeledPair again = generate_mixture(spec);
    CHECK(again.test == pair.test);
    CHECK(again.reference == pair.reference);
    MixtureSpec other = spec;
    other.seed = 1;
    CHECK_FALSE(generate_mixture(other).test == pair.test);

    const RowMatrix& v = pair.test.outputs().values();
    CHECK(v.cast<float>().cast<double>() == v);
  }

  TEST_CASE("only the differing components move, by the separation") {
    MixtureSpec spec;
    spec.samples_per = 400;
    spec.n_diff = 3;
    spec.seed = 5;
    const LabeledPair pair = generate_mixture(spec);
    for (Index c = 0; c < spec.k_total; ++c) {
      const Eigen::RowVectorXd mt = pair.test.outputs().values().middleRows(c * 400, 400).colwise().mean();
      const Eigen::RowVectorXd mr = pair.reference.outputs().values().middleRows(c * 400, 400).colwise().mean();
      const bool moved = std::find(pair.differing_components.begin(), pair.differing_components.end(), c) !=
                         pair.differing_components.end();
      const double shift = (mt - mr).norm();
      CAPTURE(c);
      if (moved) {
        CHECK(std::abs(shift - spec.separation) <= 0.1);
      } else {
        CHECK(shift <= 0.1);
      }
      CHECK(std::abs(mr.norm() - spec.separation / std::sqrt(2.0)) <= 0.1);
    }
    // Noise vectors have expected norm noise_scale.
    const Eigen::RowVectorXd mean0 = pair.reference.outputs().values().topRows(400).colwise().mean();
    double norms = 0.0;
    for (Index i = 0; i < 400; ++i) norms += (pair.reference.outputs().values().row(i) - mean0).norm();
    CHECK(std::abs(norms / 400.0 - spec.noise_scale) <= 0.05);
  }

  TEST_CASE("mixture spec validation") {
    std::vector<std::function<void(MixtureSpec&)>> bad{
        [](MixtureSpec& s) { s.k_total = 0; },        [](MixtureSpec& s) { s.n_diff = 9; },
        [](MixtureSpec& s) { s.n_diff = -1; },        [](MixtureSpec& s) { s.prompt_dim = 7; },
        [](MixtureSpec& s) { s.dim = 9; },            [](MixtureSpec& s) { s.samples_per = 0; },
        [](MixtureSpec& s) { s.separation = -1.0; },  [](MixtureSpec& s) { s.noise_scale = NAN; }};
    for (const auto& mutate : bad) {
      MixtureSpec s;
      mutate(s);
      CHECK_THROWS_AS(s.validate(), Error);
    }
    MixtureSpec none;
    none.n_diff = 0;
    const LabeledPair pair = generate_mixture(none);
    CHECK(pair.differing_components.empty());
  }

  TEST_CASE("explicit oracle") {
    const PairedDataset a("a", EmbeddingMatrix(RowMatrix::Identity(2, 2)), EmbeddingMatrix(RowMatrix::Identity(2, 2)));
    const Vector same = explicit_lambda_oracle(a, a, 1.0);
    CHECK(same.size() == 4);
    CHECK(same.cwiseAbs().maxCoeff() <= 1e-15);
    // One sample at e1 (x) e1 against eta times the same: a single eigenvalue 1 - eta.
    const PairedDataset one("o", EmbeddingMatrix(RowMatrix::Identity(1, 2)), EmbeddingMatrix(RowMatrix::Identity(1, 2)));
    const Vector half = explicit_lambda_oracle(one, one, 0.5);
    CHECK(std::abs(half[0] - 0.5) <= 1e-15);
    CHECK(half.tail(3).cwiseAbs().maxCoeff() <= 1e-15);

    const PairedDataset wide("w", EmbeddingMatrix(RowMatrix::Ones(1, 65)), EmbeddingMatrix(RowMatrix::Ones(1, 64)));
    CHECK_THROWS_AS(explicit_lambda_oracle(wide, wide, 1.0), Error);
  }

  TEST_CASE("significant mode counts") {
    DifferenceSpectrum s;
    s.all_eigenvalues = Vector(6);
    s.all_eigenvalues << 0.5, 0.02, 0.01, 0.0, -0.011, -0.3;
    CHECK(count_significant_modes(s) == ModeCounts{2, 2});
    CHECK(count_significant_modes(s, 0.1) == ModeCounts{1, 1});
    CHECK_THROWS_AS(count_significant_modes(s, 0.0), Error);
  }

  TEST_CASE("no shifted components give no significant modes") {
    MixtureSpec spec;
    spec.n_diff = 0;
    spec.seed = 2;
    const LabeledPair pair = generate_mixture(spec);
    const double st = select_bandwidth(pooled_prompts(pair.test, pair.reference)).sigma;
    const double sx = select_bandwidth(pooled_outputs(pair.test, pair.reference)).sigma;
    const DifferenceSpectrum s = eigendecompose_difference(pair.test, pair.reference, KernelSpec::gaussian(st),
                                                           KernelSpec::gaussian(sx), 1.0, 10);
    CHECK(count_significant_modes(s) == ModeCounts{0, 0});
    CHECK(s.all_eigenvalues.cwiseAbs().maxCoeff() < 0.03);
  }

  TEST_CASE("random pairs") {
    const auto [x, y] = random_pair(20, 3, 5, 1);
    CHECK(x.size() == 20);
    CHECK(max_row_norm_deviation(x.outputs()) <= 1e-12);
    CHECK_FALSE(x.prompts() == y.prompts());
    CHECK(random_pair(20, 3, 5, 1).first == x);
  }

  TEST_CASE("runtime benchmark rows and csv") {
    BenchOptions opts;
    opts.exact_sizes = {20, 40};
    opts.rff_sizes = {50};
    opts.r_values = {16, 32};
    opts.repetitions = 1;
    const std::vector<BenchRow> rows = bench_runtime(opts);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].path == SpectrumPath::exact);
    CHECK(rows[1].n == 40);
    CHECK(rows[2].path == SpectrumPath::rff);
    CHECK(rows[3].r == 32);
    for (const auto& row : rows) CHECK(row.median_seconds >= 0.0);

    std::ostringstream os;
    write_bench_csv(os, {{SpectrumPath::exact, 10, 0, 0.5}, {SpectrumPath::rff, 20, 8, NAN}});
    CHECK(os.str() == "path,n,r,median_seconds\nexact,10,0,0.5\nrff,20,8,nan\n");
  }
}

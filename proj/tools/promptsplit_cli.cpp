// promptsplit: compare paired prompt/output embedding datasets.
//
// Exit codes: 0 success, 2 invalid flags, 3 data errors, 4 numerical failures.

#include "promptsplit/data_model.hpp"
#include "promptsplit/kernel.hpp"
#include "promptsplit/report.hpp"
#include "promptsplit/rff_spectral.hpp"
#include "promptsplit/symmetric_eigen.hpp"
#include "promptsplit/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <new>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace promptsplit;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument:
      return kExitInvalid;
    case ErrorKind::data:
      return kExitData;
    case ErrorKind::numerical:
      return kExitNumerical;
  }
  return kExitNumerical;
}

// "auto" -> nullopt, otherwise a positive number.
std::optional<double> parse_sigma(const std::string& flag, const std::string& value) {
  if (value == "auto") return std::nullopt;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || !(v > 0.0) || !std::isfinite(v)) {
    fail(ErrorKind::invalid_argument, flag + " must be 'auto' or a positive number, got '" + value + "'");
  }
  return v;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::data, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) fail(ErrorKind::data, "failed writing '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

struct CompareArgs {
  std::string test;
  std::string ref;
  std::string path = "rff";
  double eta = 1.0;
  long long r = 3000;
  std::uint64_t seed = 0;
  std::string sigma_t = "auto";
  std::string sigma_x = "auto";
  long long top_modes = 10;
  long long samples_per_mode = 10;
  std::string out;
  bool no_timings = false;
  bool no_normalize = false;
};

int run_compare(const CompareArgs& a) {
  ComparisonConfig config;
  config.path = parse_spectrum_path(a.path);
  config.eta = a.eta;
  config.r = a.r;
  config.seed = a.seed;
  config.sigma_t = parse_sigma("--sigma-t", a.sigma_t);
  config.sigma_x = parse_sigma("--sigma-x", a.sigma_x);
  config.top_modes = a.top_modes;
  config.samples_per_mode = a.samples_per_mode;
  config.normalize = !a.no_normalize;
  config.validate();

  const PairedDataset test = load_dataset(a.test);
  const PairedDataset ref = load_dataset(a.ref);
  const ComparisonReport report = run_comparison(test, ref, config);
  write_text(a.out, report_json(report, !a.no_timings));
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  MixtureSpec spec;
};

int run_synth(const SynthArgs& a) {
  a.spec.validate();
  const LabeledPair pair = generate_mixture(a.spec);
  const fs::path dir(a.out);
  save_dataset(pair.test, dir / "test");
  save_dataset(pair.reference, dir / "reference");

  nlohmann::ordered_json truth;
  truth["differing_components"] = pair.differing_components;
  truth["component_of"] = pair.component_of;
  truth["spec"] = {{"k_total", a.spec.k_total},       {"dim", a.spec.dim},
                   {"prompt_dim", a.spec.prompt_dim}, {"samples_per", a.spec.samples_per},
                   {"n_diff", a.spec.n_diff},         {"separation", a.spec.separation},
                   {"noise_scale", a.spec.noise_scale}, {"seed", a.spec.seed}};
  write_text((dir / "ground_truth.json").string(), truth.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------

struct BoundArgs {
  std::string test;
  std::string ref;
  double eta = 1.0;
  std::vector<long long> r_list{200, 800, 3200};
  long long trials = 40;
  double delta = 0.05;
  std::string sigma_t = "median";
  std::string sigma_x = "median";
  std::uint64_t seed = 0;
  std::string out;
  bool no_normalize = false;
};

double resolve_bound_sigma(const std::string& flag, const std::string& value, const RowMatrix& pooled,
                           std::uint64_t seed) {
  if (value == "median") {
    const double med = median_pairwise_distance(pooled, 2000, seed);
    require(med > 0.0, ErrorKind::data, "median pairwise distance is zero");
    return med;
  }
  const std::optional<double> fixed = parse_sigma(flag, value);
  if (fixed) return *fixed;
  BandwidthOptions options;
  options.seed = seed;
  return select_bandwidth(pooled, options).sigma;
}

int run_verify_bound(const BoundArgs& a) {
  require(a.delta > 0.0 && a.delta < 1.0, ErrorKind::invalid_argument, "--delta must lie in (0, 1)");
  require(a.eta > 0.0, ErrorKind::invalid_argument, "--eta must be positive");
  if (a.sigma_t != "median") parse_sigma("--sigma-t", a.sigma_t);
  if (a.sigma_x != "median") parse_sigma("--sigma-x", a.sigma_x);
  BoundOptions options;
  options.eta = a.eta;
  options.trials = a.trials;
  options.delta = a.delta;
  options.seed = a.seed;
  options.r_values.assign(a.r_list.begin(), a.r_list.end());

  PairedDataset test = load_dataset(a.test, LoadOptions{!a.no_normalize});
  PairedDataset ref = load_dataset(a.ref, LoadOptions{!a.no_normalize});
  if (test.size() + ref.size() > kBoundMaxSamples) {
    fail(ErrorKind::data, "bound check supports at most " + std::to_string(kBoundMaxSamples) + " pooled samples");
  }
  RowMatrix pooled_t(test.size() + ref.size(), test.prompt_dim());
  RowMatrix pooled_x(test.size() + ref.size(), test.output_dim());
  require(test.prompt_dim() == ref.prompt_dim() && test.output_dim() == ref.output_dim(), ErrorKind::data,
          "embedding dimensions differ between datasets");
  pooled_t << test.prompts().values(), ref.prompts().values();
  pooled_x << test.outputs().values(), ref.outputs().values();
  const KernelSpec kt = KernelSpec::gaussian(resolve_bound_sigma("--sigma-t", a.sigma_t, pooled_t, a.seed));
  const KernelSpec kx = KernelSpec::gaussian(resolve_bound_sigma("--sigma-x", a.sigma_x, pooled_x, a.seed));

  const BoundReport report = verify_bound(test, ref, kt, kx, options);
  std::ostringstream csv;
  csv << std::setprecision(10);
  csv << "r,trial,deviation,bound,within\n";
  for (const BoundRow& row : report.rows) {
    csv << row.r << ',' << row.trial << ',' << row.deviation << ',' << row.bound << ',' << (row.within ? 1 : 0)
        << '\n';
  }
  csv << "# sigma_t=" << kt.sigma << " sigma_x=" << kx.sigma << " eta=" << a.eta << " delta=" << a.delta << '\n';
  csv << "# r,coverage,median_deviation,slope\n";
  for (std::size_t k = 0; k < report.r_values.size(); ++k) {
    csv << "# " << report.r_values[k] << ',' << report.coverage[k] << ',' << report.median_deviation[k] << ','
        << report.slope << '\n';
  }
  write_text(a.out, csv.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct PlotArgs {
  std::string report;
  std::string out;
};

int run_plotdata(const PlotArgs& a) {
  const std::vector<PlotBar> bars = plot_bars_from_report(read_text(a.report));
  std::ostringstream csv;
  write_plot_csv(csv, bars);
  std::ostringstream svg;
  write_plot_svg(svg, bars);
  write_text(a.out + ".csv", csv.str());
  write_text(a.out + ".svg", svg.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::vector<long long> exact_sizes{1000, 2000};
  std::vector<long long> rff_sizes{5000, 10000};
  std::vector<long long> r_list{1000};
  long long repetitions = 3;
  std::uint64_t seed = 0;
  std::string out;
};

int run_bench(const BenchArgs& a) {
  BenchOptions options;
  options.exact_sizes.assign(a.exact_sizes.begin(), a.exact_sizes.end());
  options.rff_sizes.assign(a.rff_sizes.begin(), a.rff_sizes.end());
  options.r_values.assign(a.r_list.begin(), a.r_list.end());
  options.repetitions = a.repetitions;
  options.seed = a.seed;
  for (long long n : a.exact_sizes) require(n >= 1, ErrorKind::invalid_argument, "sizes must be positive");
  for (long long n : a.rff_sizes) require(n >= 1, ErrorKind::invalid_argument, "sizes must be positive");
  for (long long r : a.r_list) require(r >= 2 && r % 2 == 0, ErrorKind::invalid_argument, "r must be even and >= 2");
  std::ostringstream csv;
  write_bench_csv(csv, bench_runtime(options));
  write_text(a.out, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_limit_from_env();

  CLI::App app{"Kernel-spectral comparison of prompt-conditioned generative models"};
  app.require_subcommand(1);

  CompareArgs compare;
  auto* cmp = app.add_subcommand("compare", "Compare a test dataset against a reference dataset");
  cmp->add_option("--test", compare.test, "Test dataset manifest")->required();
  cmp->add_option("--ref", compare.ref, "Reference dataset manifest")->required();
  cmp->add_option("--path", compare.path, "Spectrum path: exact or rff")->capture_default_str();
  cmp->add_option("--eta", compare.eta, "Reference weight eta")->capture_default_str();
  cmp->add_option("--r", compare.r, "Random feature dimension (even)")->capture_default_str();
  cmp->add_option("--seed", compare.seed, "Random seed")->capture_default_str();
  cmp->add_option("--sigma-t", compare.sigma_t, "Prompt bandwidth: auto or a positive number")->capture_default_str();
  cmp->add_option("--sigma-x", compare.sigma_x, "Output bandwidth: auto or a positive number")->capture_default_str();
  cmp->add_option("--top-modes", compare.top_modes, "Modes kept per sign")->capture_default_str();
  cmp->add_option("--samples-per-mode", compare.samples_per_mode, "Attributed samples per mode")
      ->capture_default_str();
  cmp->add_option("--out", compare.out, "Report path (default: stdout)");
  cmp->add_flag("--no-timings", compare.no_timings, "Omit timings from the report");
  cmp->add_flag("--no-normalize", compare.no_normalize, "Skip unit-normalization of embedding rows");

  SynthArgs synth;
  auto* syn = app.add_subcommand("synth", "Write a synthetic Gaussian-mixture dataset pair");
  syn->add_option("--out", synth.out, "Output directory")->required();
  syn->add_option("--k-total", synth.spec.k_total, "Mixture components")->capture_default_str();
  syn->add_option("--dim", synth.spec.dim, "Output dimension")->capture_default_str();
  syn->add_option("--prompt-dim", synth.spec.prompt_dim, "One-hot prompt dimension")->capture_default_str();
  syn->add_option("--samples-per", synth.spec.samples_per, "Samples per component")->capture_default_str();
  syn->add_option("--n-diff", synth.spec.n_diff, "Components that differ between the datasets")
      ->capture_default_str();
  syn->add_option("--separation", synth.spec.separation, "Distance between component means")->capture_default_str();
  syn->add_option("--noise", synth.spec.noise_scale, "Expected noise norm")->capture_default_str();
  syn->add_option("--seed", synth.spec.seed, "Random seed")->capture_default_str();

  BoundArgs bound;
  auto* vb = app.add_subcommand("verify-bound", "Check the random-feature eigenvalue deviation bound");
  vb->add_option("--test", bound.test, "Test dataset manifest")->required();
  vb->add_option("--ref", bound.ref, "Reference dataset manifest")->required();
  vb->add_option("--eta", bound.eta, "Reference weight eta")->capture_default_str();
  vb->add_option("--r-list", bound.r_list, "Feature dimensions")->delimiter(',')->capture_default_str();
  vb->add_option("--trials", bound.trials, "Feature draws per dimension")->capture_default_str();
  vb->add_option("--delta", bound.delta, "Confidence parameter")->capture_default_str();
  vb->add_option("--sigma-t", bound.sigma_t, "Prompt bandwidth: median, auto or a positive number")
      ->capture_default_str();
  vb->add_option("--sigma-x", bound.sigma_x, "Output bandwidth: median, auto or a positive number")
      ->capture_default_str();
  vb->add_option("--seed", bound.seed, "Random seed")->capture_default_str();
  vb->add_option("--out", bound.out, "CSV path (default: stdout)");
  vb->add_flag("--no-normalize", bound.no_normalize, "Skip unit-normalization of embedding rows");

  PlotArgs plot;
  auto* pd = app.add_subcommand("plotdata", "Write CSV and SVG eigenvalue bars for a report");
  pd->add_option("--report", plot.report, "Report JSON")->required();
  pd->add_option("--out", plot.out, "Output prefix; writes PREFIX.csv and PREFIX.svg")->required();

  BenchArgs bench;
  auto* bn = app.add_subcommand("bench", "Time the exact and random-feature paths");
  bn->add_option("--exact-sizes", bench.exact_sizes, "Samples per dataset for the exact path")
      ->delimiter(',')
      ->capture_default_str();
  bn->add_option("--rff-sizes", bench.rff_sizes, "Samples per dataset for the rff path")
      ->delimiter(',')
      ->capture_default_str();
  bn->add_option("--r-list", bench.r_list, "Feature dimensions")->delimiter(',')->capture_default_str();
  bn->add_option("--repetitions", bench.repetitions, "Runs per cell (median reported)")->capture_default_str();
  bn->add_option("--seed", bench.seed, "Random seed")->capture_default_str();
  bn->add_option("--out", bench.out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "promptsplit: " << e.what() << '\n';
    return kExitInvalid;
  }

  try {
    if (cmp->parsed()) return run_compare(compare);
    if (syn->parsed()) return run_synth(synth);
    if (vb->parsed()) return run_verify_bound(bound);
    if (pd->parsed()) return run_plotdata(plot);
    if (bn->parsed()) return run_bench(bench);
  } catch (const Error& e) {
    std::cerr << "promptsplit: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::bad_alloc&) {
    std::cerr << "promptsplit: out of memory\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "promptsplit: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "promptsplit: " << e.what() << '\n';
    return kExitData;
  }
  return kExitInvalid;
}

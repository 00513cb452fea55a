#include "promptsplit/report.hpp"

#include "promptsplit/exact_spectral.hpp"
#include "promptsplit/rff_spectral.hpp"
#include "promptsplit/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace promptsplit {

using json = nlohmann::ordered_json;

namespace {

class StageClock {
 public:
  explicit StageClock(std::vector<std::pair<std::string, double>>& sink) : sink_(sink) {}

  void lap(const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    sink_.emplace_back(stage, std::chrono::duration<double>(now - last_).count());
    last_ = now;
  }

 private:
  std::vector<std::pair<std::string, double>>& sink_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

ResolvedBandwidth resolve(const std::optional<double>& fixed, const RowMatrix& pooled, std::uint64_t seed) {
  ResolvedBandwidth out;
  if (fixed) {
    out.sigma = *fixed;
    return out;
  }
  BandwidthOptions options;
  options.seed = seed;
  out.choice = select_bandwidth(pooled, options);
  out.sigma = out.choice->sigma;
  out.automatic = true;
  return out;
}

json bandwidth_json(const ResolvedBandwidth& b) {
  json j{{"sigma", b.sigma}, {"automatic", b.automatic}};
  if (b.choice) {
    j["gap"] = b.choice->gap;
    j["qualified"] = b.choice->qualified;
  }
  return j;
}

}  // namespace

ComparisonReport run_comparison(const PairedDataset& test_in, const PairedDataset& reference_in,
                                const ComparisonConfig& config) {
  config.validate();
  require(test_in.prompt_dim() == reference_in.prompt_dim(), ErrorKind::data,
          "prompt embedding dimensions differ between datasets");
  require(test_in.output_dim() == reference_in.output_dim(), ErrorKind::data,
          "output embedding dimensions differ between datasets");
  if (config.path == SpectrumPath::exact && test_in.size() + reference_in.size() > kExactPathMaxSamples) {
    fail(ErrorKind::data, "exact path supports at most " + std::to_string(kExactPathMaxSamples) +
                              " pooled samples; use --path rff");
  }

  ComparisonReport report;
  report.config = config;
  report.test_name = test_in.name();
  report.reference_name = reference_in.name();
  StageClock clock(report.timings);

  const PairedDataset test = config.normalize ? test_in.normalized() : test_in;
  const PairedDataset reference = config.normalize ? reference_in.normalized() : reference_in;
  if (config.normalize) clock.lap("normalize");

  if (!config.sigma_t || !config.sigma_x) {
    require(test.size() + reference.size() >= 2, ErrorKind::data, "automatic bandwidth needs at least 2 samples");
  }
  report.bandwidth_t = resolve(config.sigma_t, pooled_prompts(test, reference), config.seed);
  report.bandwidth_x = resolve(config.sigma_x, pooled_outputs(test, reference), config.seed);
  clock.lap("bandwidth");

  const KernelSpec kt = KernelSpec::gaussian(report.bandwidth_t.sigma);
  const KernelSpec kx = KernelSpec::gaussian(report.bandwidth_x.sigma);

  if (config.path == SpectrumPath::exact) {
    report.spectrum = eigendecompose_difference(test, reference, kt, kx, config.eta, config.top_modes);
    clock.lap("spectrum");
    report.modes = attribute_modes_exact(report.spectrum, test, reference, config.samples_per_mode);
    clock.lap("attribution");
    report.scores.promptsplit_score = report.spectrum.all_eigenvalues.squaredNorm();
    report.scores.joint_diversity_test = joint_diversity_exact(test, kt, kx);
    report.scores.joint_diversity_ref = joint_diversity_exact(reference, kt, kx);
    clock.lap("scores");
  } else {
    const FourierFeatureSet ff =
        sample_features(kt.sigma, kx.sigma, test.prompt_dim(), test.output_dim(), config.r, config.seed);
    const RowMatrix fx = joint_map(test, ff);
    const RowMatrix fy = joint_map(reference, ff);
    clock.lap("features");
    report.spectrum = rff_spectrum(fx, fy, config.eta, config.top_modes);
    clock.lap("spectrum");
    report.modes = attribute_modes_rff(report.spectrum, fx, fy, test, reference, config.samples_per_mode);
    clock.lap("attribution");
    report.scores.promptsplit_score = promptsplit_score(fx, fy, config.eta);
    report.scores.joint_diversity_test = joint_diversity(fx);
    report.scores.joint_diversity_ref = joint_diversity(fy);
    clock.lap("scores");
  }
  report.spectrum.sigma_t = kt.sigma;
  report.spectrum.sigma_x = kx.sigma;
  report.spectrum.seed = config.seed;
  if (config.path == SpectrumPath::rff) report.spectrum.r = config.r;
  return report;
}

std::string report_json(const ComparisonReport& report, bool include_timings) {
  const ComparisonConfig& c = report.config;
  json doc;
  doc["schema"] = kReportSchema;
  doc["config"] = {
      {"path", to_string(c.path)},
      {"eta", c.eta},
      {"sigma_t", c.sigma_t ? json(*c.sigma_t) : json("auto")},
      {"sigma_x", c.sigma_x ? json(*c.sigma_x) : json("auto")},
      {"r", c.r},
      {"seed", c.seed},
      {"top_modes", c.top_modes},
      {"samples_per_mode", c.samples_per_mode},
      {"normalize", c.normalize},
  };
  doc["datasets"] = {
      {"test", {{"name", report.test_name}, {"rows", report.spectrum.n}}},
      {"reference", {{"name", report.reference_name}, {"rows", report.spectrum.m}}},
  };
  doc["bandwidth"] = {{"sigma_t", bandwidth_json(report.bandwidth_t)}, {"sigma_x", bandwidth_json(report.bandwidth_x)}};

  const ModeCounts counts = count_significant_modes(report.spectrum, kDefaultSignificance);
  json eigenvalues = json::array();
  for (Index i = 0; i < report.spectrum.retained(); ++i) eigenvalues.push_back(report.spectrum.eigenvalues[i]);
  doc["spectrum"] = {
      {"retained", report.spectrum.retained()},
      {"eigenvalues", std::move(eigenvalues)},
      {"dimension", report.spectrum.all_eigenvalues.size()},
      {"significant",
       {{"tau", kDefaultSignificance}, {"positive", counts.positive}, {"negative", counts.negative}}},
  };

  json modes = json::array();
  for (std::size_t k = 0; k < report.modes.modes.size(); ++k) {
    const Mode& mode = report.modes.modes[k];
    json samples = json::array();
    for (const AttributedSample& s : mode.samples) {
      json js{{"dataset", to_string(s.dataset)},
              {"row", s.row},
              {"score", s.score},
              {"signed_value", s.signed_value}};
      if (s.label) {
        js["prompt_text"] = s.label->prompt_text;
        js["output_ref"] = s.label->output_ref;
      }
      samples.push_back(std::move(js));
    }
    modes.push_back({{"index", k},
                     {"eigenvalue", mode.eigenvalue},
                     {"side", to_string(mode.side)},
                     {"samples", std::move(samples)}});
  }
  doc["modes"] = std::move(modes);
  doc["scores"] = {
      {"promptsplit_score", report.scores.promptsplit_score},
      {"joint_diversity_test", report.scores.joint_diversity_test},
      {"joint_diversity_ref", report.scores.joint_diversity_ref},
  };
  if (include_timings) {
    json t = json::object();
    double total = 0.0;
    for (const auto& [stage, seconds] : report.timings) {
      t[stage] = seconds;
      total += seconds;
    }
    t["total"] = total;
    doc["timings"] = std::move(t);
  }
  return doc.dump(2) + "\n";
}

std::vector<PlotBar> plot_bars_from_report(const std::string& report_text) {
  json doc;
  try {
    doc = json::parse(report_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::data, std::string("report is not valid JSON: ") + e.what());
  }
  require(doc.is_object() && doc.value("schema", "") == kReportSchema, ErrorKind::data,
          std::string("report schema is not ") + kReportSchema);
  require(doc.contains("modes") && doc["modes"].is_array(), ErrorKind::data, "report has no modes array");
  std::vector<PlotBar> bars;
  for (const json& mode : doc["modes"]) {
    require(mode.is_object() && mode.contains("eigenvalue") && mode["eigenvalue"].is_number() &&
                mode.contains("side") && mode["side"].is_string(),
            ErrorKind::data, "malformed mode entry in report");
    const std::string side = mode["side"].get<std::string>();
    require(side == "test_dominant" || side == "reference_dominant", ErrorKind::data,
            "unknown mode side '" + side + "'");
    bars.push_back({static_cast<Index>(bars.size()), mode["eigenvalue"].get<double>(),
                    side == "test_dominant" ? ModeSide::test_dominant : ModeSide::reference_dominant});
  }
  return bars;
}

void write_plot_csv(std::ostream& os, const std::vector<PlotBar>& bars) {
  os << "mode_index,eigenvalue,side\n";
  os << std::setprecision(17);
  for (const PlotBar& b : bars) os << b.mode_index << ',' << b.eigenvalue << ',' << to_string(b.side) << '\n';
}

void write_plot_svg(std::ostream& os, const std::vector<PlotBar>& bars) {
  constexpr double width = 640.0;
  constexpr double height = 360.0;
  constexpr double left = 60.0;
  constexpr double right = 20.0;
  constexpr double top = 20.0;
  constexpr double bottom = 40.0;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double max_pos = 0.0;
  double max_neg = 0.0;
  for (const PlotBar& b : bars) {
    max_pos = std::max(max_pos, b.eigenvalue);
    max_neg = std::max(max_neg, -b.eigenvalue);
  }
  const double span = max_pos + max_neg > 0.0 ? max_pos + max_neg : 1.0;
  const double scale = plot_h / span;
  const double zero_y = max_pos + max_neg > 0.0 ? top + max_pos * scale : top + plot_h / 2.0;

  std::ostringstream body;
  body << std::fixed << std::setprecision(4);
  body << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << ' ' << height << "\" data-scale=\"" << std::setprecision(10) << scale
       << "\" data-zero=\"" << std::setprecision(4) << zero_y << "\">\n";
  body << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  body << "  <line class=\"axis\" x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
       << top + plot_h << "\" stroke=\"black\"/>\n";
  body << "  <line class=\"axis\" x1=\"" << left << "\" y1=\"" << zero_y << "\" x2=\"" << left + plot_w
       << "\" y2=\"" << zero_y << "\" stroke=\"black\"/>\n";
  body << "  <text x=\"" << left + plot_w / 2.0 << "\" y=\"" << height - 10.0
       << "\" text-anchor=\"middle\" font-size=\"12\">mode</text>\n";
  body << "  <text x=\"15\" y=\"" << top + plot_h / 2.0 << "\" text-anchor=\"middle\" font-size=\"12\" "
       << "transform=\"rotate(-90 15 " << top + plot_h / 2.0 << ")\">eigenvalue</text>\n";

  if (!bars.empty()) {
    const double slot = plot_w / static_cast<double>(bars.size());
    const double bar_w = slot * 0.8;
    for (const PlotBar& b : bars) {
      const double h = std::abs(b.eigenvalue) * scale;
      const double x = left + slot * static_cast<double>(b.mode_index) + (slot - bar_w) / 2.0;
      const double y = b.eigenvalue >= 0.0 ? zero_y - h : zero_y;
      const char* fill = b.side == ModeSide::test_dominant ? "#c0392b" : "#2c7fb8";
      body << "  <rect class=\"bar\" data-mode=\"" << b.mode_index << "\" x=\"" << x << "\" y=\"" << y
           << "\" width=\"" << bar_w << "\" height=\"" << h << "\" fill=\"" << fill << "\"/>\n";
    }
  }
  body << "</svg>\n";
  os << body.str();
}

}  // namespace promptsplit

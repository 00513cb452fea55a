#pragma once

#include "promptsplit/common.hpp"
#include "promptsplit/data_model.hpp"
#include "promptsplit/kernel.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace promptsplit {

inline constexpr const char* kReportSchema = "promptsplit-report/1";
/// Significance level used for the mode counts stored in reports.
inline constexpr double kDefaultSignificance = 0.01;

struct ResolvedBandwidth {
  double sigma = 0.0;
  bool automatic = false;
  std::optional<BandwidthChoice> choice;  // present when automatic
};

struct ComparisonScores {
  double promptsplit_score = 0.0;
  double joint_diversity_test = 0.0;
  double joint_diversity_ref = 0.0;
};

struct ComparisonReport {
  ComparisonConfig config;
  std::string test_name;
  std::string reference_name;
  ResolvedBandwidth bandwidth_t;
  ResolvedBandwidth bandwidth_x;
  DifferenceSpectrum spectrum;
  ModeReport modes;
  ComparisonScores scores;
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage, in run order
};

/// Full pipeline: optional normalization, bandwidth selection for "auto"
/// bandwidths (on the pooled prompts and pooled outputs), spectrum on the
/// configured path, mode attribution and scalar scores.
ComparisonReport run_comparison(const PairedDataset& test, const PairedDataset& reference,
                                const ComparisonConfig& config);

/// Pretty-printed JSON; timings are omitted when `include_timings` is false.
std::string report_json(const ComparisonReport& report, bool include_timings = true);

// ---------------------------------------------------------------------------
// Plot data

struct PlotBar {
  Index mode_index = 0;
  double eigenvalue = 0.0;
  ModeSide side = ModeSide::test_dominant;
};

/// Bars for the retained modes of a report JSON document. Throws a data
/// error when the document is not a valid report.
std::vector<PlotBar> plot_bars_from_report(const std::string& report_text);

/// CSV with header mode_index,eigenvalue,side.
void write_plot_csv(std::ostream& os, const std::vector<PlotBar>& bars);

/// Static SVG bar chart. The root element carries data-scale (pixels per
/// eigenvalue unit) and data-zero (y of the zero line), so bar heights
/// divided by data-scale recover |eigenvalue|.
void write_plot_svg(std::ostream& os, const std::vector<PlotBar>& bars);

}  // namespace promptsplit

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fxisort/core.hpp"
#include "fxisort/report.hpp"

namespace fxisort {

/// Scale search for the classification error: a coarse grid followed by
/// golden-section refinement around the best grid point.
struct ScaleSearch {
  double lo = 0.80;
  double hi = 1.25;
  double step = 0.01;
  double tolerance = 0.001;
  double min_scale = 0.5;  // bounds accepted by resize_template
  double max_scale = 2.0;
  // Pixels this close to a masked pixel (8-neighbour steps) are left out of
  // the comparison, for every s including 1. Binned pixels on the edge of the
  // missing region average an off-center part of their block and zoom badly;
  // dropping them removes that bias on noiseless data but costs accuracy
  // under Poisson noise, so it is off by default.
  int edge_margin = 0;

  void validate() const;
};

/// Zoom about the frame center by s with bilinear interpolation. s > 1
/// magnifies the fringes (a smaller particle). Output pixels whose bilinear
/// support leaves the field or touches a masked pixel are masked.
Pattern resize_template(const Pattern& r, double s, double min_scale = 0.5, double max_scale = 2.0);

struct CError {
  double value = 0.0;
  double scale = 1.0;
  double phi_hat = 0.0;
};

/// Normalized squared residual between gamma and the fluence-scaled template
/// at one zoom; phi_hat = sum gamma / sum U over shared unmasked pixels.
CError c_error_at(const Pattern& gamma, const Pattern& r, double s, int edge_margin = 0);

/// Minimum over the zoom search (s fixed to 1 when search_scale is false).
CError c_error(const Pattern& gamma, const Pattern& r, bool search_scale, const ScaleSearch& search = {});

/// (phi - phi_hat)^2 / phi^2.
double fluence_error(double phi, double phi_hat);

/// Accept when c_error <= tau; rejected reports carry the label "rejected".
MatchReport apply_threshold(MatchReport report, double tau);

/// Class name used in confusion tables: spheres count as spheroids.
std::string class_name(ShapeLabel label);

struct SizeBin {
  double center = 0.0;
  std::size_t count = 0;
  double mean_c_error = 0.0;
  double mean_fluence_error = 0.0;
  double mean_abs_diameter_error = 0.0;
};

struct ConfusionRow {
  std::size_t icosahedron = 0;
  std::size_t spheroid = 0;
  std::size_t rejected = 0;
  std::size_t other = 0;
  std::size_t total = 0;
};

struct PerFrame {
  std::size_t frame_id = 0;
  std::string method;
  std::string true_label;
  std::optional<double> true_diameter;
  std::optional<double> true_fluence;
  std::optional<double> aspect_ratio;
  bool benchmark = false;
  int matched_id = -1;
  std::string classified_as;
  double c_error = 0.0;
  double phi_hat = 0.0;
  std::optional<double> fluence_error;
  double diameter_hat = 0.0;
  std::optional<double> abs_diameter_error;
  bool accepted = true;
};

struct EvalSummary {
  std::string method;
  std::size_t frames = 0;
  std::size_t benchmark_frames = 0;
  double benchmark_c_error = 0.0;
  double complete_c_error = 0.0;
  std::optional<double> mean_fluence_error;
  std::optional<double> mean_abs_diameter_error;
  std::vector<SizeBin> size_bins;
  std::map<std::string, ConfusionRow> confusion;  // keyed by true class
  std::vector<PerFrame> per_frame;
  std::size_t errors = 0;
};

struct SummaryOptions {
  double bin_width = 10.0;  // nm, bins centered on multiples of the width
};

/// Reports and truths are aligned by frame_id.
EvalSummary summarize(std::span<const MatchReport> reports, std::span<const FrameMeta> truths,
                      const SummaryOptions& options = {});
EvalSummary summarize(std::span<const MatchReport> reports, const Dataset& truths, const SummaryOptions& options = {});

/// Writes table2.csv, table3.csv, fig3_curves.csv and per_frame.csv.
void write_summary(const EvalSummary& summary, const std::filesystem::path& dir);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace fxisort

#include "fxisort/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace fxisort {

namespace fs = std::filesystem;

void ScaleSearch::validate() const {
  if (!(min_scale > 0.0) || !(max_scale >= min_scale)) fail(ErrorKind::configuration, "invalid zoom bounds");
  if (!(lo >= min_scale) || !(hi <= max_scale) || !(hi >= lo))
    fail(ErrorKind::configuration, "scale grid must lie within the zoom bounds");
  if (!(step > 0.0) || !(tolerance > 0.0)) fail(ErrorKind::configuration, "scale step and tolerance must be positive");
}

namespace {

struct Zoomed {
  std::vector<double> values;
  std::vector<std::uint8_t> valid;
};

void check_scale(double s, double min_scale, double max_scale) {
  if (!(s >= min_scale && s <= max_scale))
    fail(ErrorKind::domain, "zoom factor " + std::to_string(s) + " outside [" + std::to_string(min_scale) + ", " +
                                std::to_string(max_scale) + "]");
}

// Validity after dropping every pixel within `margin` (8-neighbour steps) of a
// masked one.
std::vector<std::uint8_t> eroded(const PixelMask& mask, int margin) {
  std::vector<std::uint8_t> valid(mask.bits().begin(), mask.bits().end());
  const int rows = mask.rows(), cols = mask.cols();
  for (int step = 0; step < margin; ++step) {
    const std::vector<std::uint8_t> prev = valid;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const std::size_t o = static_cast<std::size_t>(i) * cols + j;
        if (!prev[o]) continue;
        for (int di = -1; di <= 1 && valid[o]; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            const int a = i + di, b = j + dj;
            if (a < 0 || a >= rows || b < 0 || b >= cols) continue;
            if (!prev[static_cast<std::size_t>(a) * cols + b]) {
              valid[o] = 0;
              break;
            }
          }
      }
  }
  return valid;
}

void zoom(const Pattern& r, std::span<const std::uint8_t> mask, double s, Zoomed& out) {
  const std::size_t n = r.size();
  out.values.assign(n, 0.0);
  out.valid.assign(n, 0);
  const auto data = r.data();
  if (s == 1.0) {
    for (std::size_t i = 0; i < n; ++i) {
      out.values[i] = data[i];
      out.valid[i] = mask[i];
    }
    return;
  }
  const int rows = r.rows(), cols = r.cols();
  const double cr = 0.5 * (rows - 1), cc = 0.5 * (cols - 1);
  for (int i = 0; i < rows; ++i) {
    const double sr = cr + (i - cr) / s;
    const double fr0 = std::floor(sr);
    const int r0 = static_cast<int>(fr0);
    const double wr = sr - fr0;
    for (int j = 0; j < cols; ++j) {
      const double sc = cc + (j - cc) / s;
      const double fc0 = std::floor(sc);
      const int c0 = static_cast<int>(fc0);
      const double wc = sc - fc0;
      const double weights[4] = {(1.0 - wr) * (1.0 - wc), (1.0 - wr) * wc, wr * (1.0 - wc), wr * wc};
      const int rr[4] = {r0, r0, r0 + 1, r0 + 1};
      const int cc4[4] = {c0, c0 + 1, c0, c0 + 1};
      double v = 0.0;
      bool ok = true;
      for (int t = 0; t < 4 && ok; ++t) {
        if (weights[t] == 0.0) continue;
        if (rr[t] < 0 || rr[t] >= rows || cc4[t] < 0 || cc4[t] >= cols ||
            !mask[static_cast<std::size_t>(rr[t]) * cols + cc4[t]]) {
          ok = false;
          break;
        }
        v += weights[t] * r(rr[t], cc4[t]);
      }
      const std::size_t o = static_cast<std::size_t>(i) * cols + j;
      if (ok) {
        out.values[o] = v;
        out.valid[o] = 1;
      }
    }
  }
}

CError evaluate(const Pattern& gamma, std::span<const std::uint8_t> gamma_valid, const Zoomed& u, double s) {
  const auto g = gamma.data();
  auto use = [&](std::size_t i) { return u.valid[i] && gamma_valid[i]; };
  double sum_g = 0.0, sum_u = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!use(i)) continue;
    sum_g += g[i];
    sum_u += u.values[i];
  }
  if (!(sum_u > 0.0)) fail(ErrorKind::degenerate, "template has zero energy on the shared unmasked pixels");
  const double phi = sum_g / sum_u;
  // An empty frame is matched by phi -> 0, where the ratio tends to 1.
  if (phi == 0.0) return {1.0, s, 0.0};
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!use(i)) continue;
    const double model = phi * u.values[i];
    const double d = model - g[i];
    num += d * d;
    den += model * model;
  }
  return {num / den, s, phi};
}

void check_pair(const Pattern& gamma, const Pattern& r) {
  if (!gamma.same_shape(r)) fail(ErrorKind::dimension, "frame and template shapes differ");
}

}  // namespace

Pattern resize_template(const Pattern& r, double s, double min_scale, double max_scale) {
  check_scale(s, min_scale, max_scale);
  Zoomed z;
  zoom(r, r.mask().bits(), s, z);
  std::vector<float> data(z.values.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(z.values[i]);
  return Pattern(r.rows(), r.cols(), std::move(data), PixelMask(r.rows(), r.cols(), std::move(z.valid)), r.meta());
}

CError c_error_at(const Pattern& gamma, const Pattern& r, double s, int edge_margin) {
  check_pair(gamma, r);
  if (edge_margin < 0) fail(ErrorKind::configuration, "edge margin must be >= 0");
  Zoomed z;
  zoom(r, eroded(r.mask(), edge_margin), s, z);
  return evaluate(gamma, eroded(gamma.mask(), edge_margin), z, s);
}

CError c_error(const Pattern& gamma, const Pattern& r, bool search_scale, const ScaleSearch& search) {
  check_pair(gamma, r);
  if (search.edge_margin < 0) fail(ErrorKind::configuration, "edge margin must be >= 0");
  const auto r_valid = eroded(r.mask(), search.edge_margin);
  const auto g_valid = eroded(gamma.mask(), search.edge_margin);
  Zoomed z;
  if (!search_scale) {
    zoom(r, r_valid, 1.0, z);
    return evaluate(gamma, g_valid, z, 1.0);
  }
  search.validate();

  auto at = [&](double s) {
    zoom(r, r_valid, s, z);
    return evaluate(gamma, g_valid, z, s);
  };

  // Grid points are computed as lo + i*step rounded to the step's decimal
  // resolution so that s = 1 is hit exactly when it lies on the grid.
  const int points = static_cast<int>(std::floor((search.hi - search.lo) / search.step + 1e-9)) + 1;
  CError best{std::numeric_limits<double>::infinity(), 1.0, 0.0};
  for (int i = 0; i < points; ++i) {
    const double s = std::round((search.lo + i * search.step) * 1e9) / 1e9;
    const CError e = at(s);
    if (e.value < best.value) best = e;
  }

  // Golden-section refinement within one grid step of the best point.
  constexpr double inv_phi = 0.6180339887498949;
  double a = std::max(search.lo, best.scale - search.step);
  double b = std::min(search.hi, best.scale + search.step);
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  CError e1 = at(x1), e2 = at(x2);
  while (b - a > search.tolerance) {
    if (e1.value <= e2.value) {
      b = x2;
      x2 = x1;
      e2 = e1;
      x1 = b - inv_phi * (b - a);
      e1 = at(x1);
    } else {
      a = x1;
      x1 = x2;
      e1 = e2;
      x2 = a + inv_phi * (b - a);
      e2 = at(x2);
    }
  }
  for (const CError& e : {e1, e2})
    if (e.value < best.value) best = e;
  return best;
}

double fluence_error(double phi, double phi_hat) {
  if (!(phi > 0.0) || !std::isfinite(phi)) fail(ErrorKind::domain, "true fluence must be positive");
  const double d = phi - phi_hat;
  return d * d / (phi * phi);
}

MatchReport apply_threshold(MatchReport report, double tau) {
  if (!(tau > 0.0)) fail(ErrorKind::domain, "rejection threshold must be positive");
  report.accepted = report.c_error <= tau;
  if (!report.accepted) report.matched_label = "rejected";
  return report;
}

std::string class_name(ShapeLabel label) {
  switch (label) {
    case ShapeLabel::icosahedron: return "icosahedron";
    case ShapeLabel::spheroid:
    case ShapeLabel::sphere: return "spheroid";
    case ShapeLabel::unknown: return "unknown";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Summaries

namespace {

std::string classified_class(const MatchReport& r) {
  if (!r.accepted || r.matched_label == "rejected") return "rejected";
  if (r.matched_label == "sphere" || r.matched_label == "spheroid") return "spheroid";
  return r.matched_label;
}

}  // namespace

EvalSummary summarize(std::span<const MatchReport> reports, std::span<const FrameMeta> truths,
                      const SummaryOptions& options) {
  if (!(options.bin_width > 0.0)) fail(ErrorKind::configuration, "bin width must be positive");
  if (reports.size() != truths.size())
    fail(ErrorKind::contract, std::to_string(reports.size()) + " reports for " + std::to_string(truths.size()) +
                                  " ground-truth frames");
  EvalSummary s;
  s.method = reports.empty() ? std::string() : reports.front().method;

  struct Acc {
    std::size_t n = 0, n_phi = 0, n_diam = 0;
    double c = 0.0, phi = 0.0, diam = 0.0;
  };
  std::map<long, Acc> bins;
  double sum_bench = 0.0, sum_all = 0.0, sum_phi = 0.0, sum_diam = 0.0;
  std::size_t n_phi = 0, n_diam = 0;

  for (const auto& r : reports) {
    if (r.frame_id >= truths.size())
      fail(ErrorKind::contract, "report for frame " + std::to_string(r.frame_id) + " has no ground truth");
    if (!r.error.empty()) {
      ++s.errors;
      continue;
    }
    const FrameMeta& t = truths[r.frame_id];
    PerFrame row;
    row.frame_id = r.frame_id;
    row.method = r.method;
    row.true_label = std::string(to_string(t.label));
    row.true_diameter = t.true_diameter;
    row.true_fluence = t.true_fluence;
    row.aspect_ratio = t.aspect_ratio;
    row.benchmark = t.source_id.has_value();
    row.matched_id = r.matched_id;
    row.classified_as = classified_class(r);
    row.c_error = r.c_error;
    row.phi_hat = r.phi_hat;
    row.diameter_hat = r.diameter_hat;
    row.accepted = r.accepted;
    if (t.true_fluence && *t.true_fluence > 0.0) row.fluence_error = fluence_error(*t.true_fluence, r.phi_hat);
    if (t.true_diameter && std::isfinite(r.diameter_hat))
      row.abs_diameter_error = std::fabs(r.diameter_hat - *t.true_diameter);

    ++s.frames;
    sum_all += r.c_error;
    if (row.benchmark) {
      ++s.benchmark_frames;
      sum_bench += r.c_error;
    }
    if (row.fluence_error) {
      sum_phi += *row.fluence_error;
      ++n_phi;
    }
    if (row.abs_diameter_error) {
      sum_diam += *row.abs_diameter_error;
      ++n_diam;
    }
    if (t.true_diameter) {
      auto& b = bins[std::lround(*t.true_diameter / options.bin_width)];
      ++b.n;
      b.c += r.c_error;
      if (row.fluence_error) {
        b.phi += *row.fluence_error;
        ++b.n_phi;
      }
      if (row.abs_diameter_error) {
        b.diam += *row.abs_diameter_error;
        ++b.n_diam;
      }
    }
    auto& conf = s.confusion[class_name(t.label)];
    ++conf.total;
    if (row.classified_as == "icosahedron") {
      ++conf.icosahedron;
    } else if (row.classified_as == "spheroid") {
      ++conf.spheroid;
    } else if (row.classified_as == "rejected") {
      ++conf.rejected;
    } else {
      ++conf.other;
    }
    s.per_frame.push_back(std::move(row));
  }
  if (s.frames > 0) s.complete_c_error = sum_all / static_cast<double>(s.frames);
  if (s.benchmark_frames > 0) s.benchmark_c_error = sum_bench / static_cast<double>(s.benchmark_frames);
  if (n_phi > 0) s.mean_fluence_error = sum_phi / static_cast<double>(n_phi);
  if (n_diam > 0) s.mean_abs_diameter_error = sum_diam / static_cast<double>(n_diam);
  for (const auto& [key, b] : bins) {
    SizeBin out;
    out.center = static_cast<double>(key) * options.bin_width;
    out.count = b.n;
    out.mean_c_error = b.c / static_cast<double>(b.n);
    out.mean_fluence_error = b.n_phi ? b.phi / static_cast<double>(b.n_phi) : 0.0;
    out.mean_abs_diameter_error = b.n_diam ? b.diam / static_cast<double>(b.n_diam) : 0.0;
    s.size_bins.push_back(out);
  }
  return s;
}

EvalSummary summarize(std::span<const MatchReport> reports, const Dataset& truths, const SummaryOptions& options) {
  std::vector<FrameMeta> metas;
  metas.reserve(truths.count());
  for (const auto& f : truths.frames) metas.push_back(f.meta());
  return summarize(reports, metas, options);
}

namespace {

template <typename T>
std::string opt(const std::optional<T>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::ofstream open_csv(const fs::path& file) {
  std::ofstream out(file);
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
  return out;
}

}  // namespace

void write_summary(const EvalSummary& s, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir.string());
  {
    auto out = open_csv(dir / "table2.csv");
    out << "method,frames,benchmark_frames,benchmark_c_error,complete_c_error,mean_fluence_error,"
           "mean_abs_diameter_error,errors\n";
    out << s.method << ',' << s.frames << ',' << s.benchmark_frames << ',' << num(s.benchmark_c_error) << ','
        << num(s.complete_c_error) << ',' << opt(s.mean_fluence_error) << ',' << opt(s.mean_abs_diameter_error) << ','
        << s.errors << '\n';
  }
  {
    auto out = open_csv(dir / "table3.csv");
    out << "true_class,icosahedron,spheroid,rejected,other,total\n";
    for (const auto& [name, row] : s.confusion)
      out << name << ',' << row.icosahedron << ',' << row.spheroid << ',' << row.rejected << ',' << row.other << ','
          << row.total << '\n';
  }
  {
    auto out = open_csv(dir / "fig3_curves.csv");
    out << "diameter_center,count,mean_c_error,mean_fluence_error,mean_abs_diameter_error\n";
    for (const auto& b : s.size_bins)
      out << num(b.center) << ',' << b.count << ',' << num(b.mean_c_error) << ',' << num(b.mean_fluence_error) << ','
          << num(b.mean_abs_diameter_error) << '\n';
  }
  {
    auto out = open_csv(dir / "per_frame.csv");
    out << "frame_id,method,true_label,true_diameter,true_fluence,aspect_ratio,benchmark,matched_id,classified_as,"
           "c_error,phi_hat,fluence_error,diameter_hat,abs_diameter_error,accepted\n";
    for (const auto& r : s.per_frame)
      out << r.frame_id << ',' << r.method << ',' << r.true_label << ',' << opt(r.true_diameter) << ','
          << opt(r.true_fluence) << ',' << opt(r.aspect_ratio) << ',' << (r.benchmark ? 1 : 0) << ',' << r.matched_id
          << ',' << r.classified_as << ',' << num(r.c_error) << ',' << num(r.phi_hat) << ',' << opt(r.fluence_error)
          << ',' << (std::isfinite(r.diameter_hat) ? num(r.diameter_hat) : "") << ',' << opt(r.abs_diameter_error)
          << ',' << (r.accepted ? 1 : 0) << '\n';
  }
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) fail(ErrorKind::contract, "spearman needs two equal-length samples");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace fxisort

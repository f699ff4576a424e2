#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fxisort/errors.hpp"
#include "fxisort/forward_sim.hpp"
#include "fxisort/metrics.hpp"
#include "support.hpp"

using namespace fxisort;

namespace {

Pattern scaled(const Pattern& p, float c) {
  std::vector<float> v(p.data().begin(), p.data().end());
  for (auto& x : v) x *= c;
  return Pattern(p.rows(), p.cols(), std::move(v), p.mask(), p.meta());
}

// Relative RMS after fitting the overall intensity (a zoom keeps the
// amplitude while a smaller sphere scatters less).
double rms_mismatch(const Pattern& a, const Pattern& b) {
  double ab = 0.0, aa = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a.mask().valid(i) || !b.mask().valid(i)) continue;
    ab += static_cast<double>(a.data()[i]) * b.data()[i];
    aa += static_cast<double>(a.data()[i]) * a.data()[i];
  }
  const double k = ab / aa;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a.mask().valid(i) || !b.mask().valid(i)) continue;
    const double d = k * a.data()[i] - b.data()[i];
    num += d * d;
    den += static_cast<double>(b.data()[i]) * b.data()[i];
  }
  return std::sqrt(num / den);
}

const ForwardModel& sphere_model() {
  static const ForwardModel m = [] {
    ForwardModelConfig cfg;
    cfg.voxels = 64;
    return ForwardModel({}, {}, cfg);
  }();
  return m;
}

// Unbinned 480 crop: every pixel is either fully inside or outside the mask.
Pattern sphere(double diameter, int binning = 1) {
  ParticleSpec s;
  s.shape = ShapeLabel::sphere;
  s.diameter = diameter;
  return bin(sphere_model().diffract_center(s, 480), binning);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("zoom by one is the identity") {
    const Pattern& t = test::small_templates().frames[0];
    const Pattern z = resize_template(t, 1.0);
    CHECK(std::equal(z.data().begin(), z.data().end(), t.data().begin()));
    CHECK(z.mask() == t.mask());
    CHECK_THROWS_AS(resize_template(t, 0.3), Error);
    CHECK_THROWS_AS(resize_template(t, 2.5), Error);
  }

  TEST_CASE("zoomed sphere matches the smaller sphere") {
    const Pattern ref = sphere(180.0);
    for (double s : {0.85, 0.92, 1.08, 1.15}) {
      const Pattern zoomed = resize_template(ref, s);
      const Pattern truth = sphere(180.0 / s);
      CAPTURE(s);
      CHECK(rms_mismatch(zoomed, truth) <= 0.02);
    }
  }

  TEST_CASE("two zooms compose") {
    const Pattern ref = sphere(180.0);
    const Pattern twice = resize_template(resize_template(ref, 1.05), 1.08);
    const Pattern once = resize_template(ref, 1.05 * 1.08);
    CHECK(rms_mismatch(twice, once) <= 0.01);
  }

  TEST_CASE("c_error basics") {
    const Pattern& r = test::small_templates().frames[2];
    const CError same = c_error(r, r, false);
    CHECK(same.value == doctest::Approx(0.0));
    CHECK(same.scale == 1.0);
    CHECK(same.phi_hat == doctest::Approx(1.0));
    const CError half = c_error(scaled(r, 0.5f), r, false);
    CHECK(half.value <= 1e-14);
    CHECK(half.phi_hat == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(c_error(scaled(r, 0.0f), r, false).value == 1.0);
    CHECK_THROWS_AS(c_error(r, scaled(r, 0.0f), false), Error);
  }

  TEST_CASE("c_error is scale invariant") {
    const Dataset& t = test::small_templates();
    Rng rng(4);
    const Pattern g = apply_poisson(t.frames[1], 0.8, rng);
    for (bool search : {false, true}) {
      const double base = c_error(g, t.frames[3], search).value;
      // Powers of two scale float32 data exactly, isolating the metric.
      for (float c : {0.0078125f, 4.0f, 256.0f}) {
        CAPTURE(c);
        CHECK(std::fabs(c_error(scaled(g, c), t.frames[3], search).value - base) <= 1e-10);
      }
    }
  }

  TEST_CASE("search never does worse than s = 1") {
    const Dataset& t = test::small_templates();
    Rng rng(6);
    for (std::size_t k = 0; k < 4; ++k) {
      const Pattern g = apply_poisson(t.frames[k], 0.5, rng);
      const double fixed = c_error(g, t.frames[(k + 1) % t.count()], false).value;
      const double searched = c_error(g, t.frames[(k + 1) % t.count()], true).value;
      CHECK(searched <= fixed);
    }
  }

  TEST_CASE("search recovers the size of a sphere") {
    const Pattern ref = sphere(180.0, 4);
    ScaleSearch search;
    search.edge_margin = 1;
    for (double d : {160.0, 200.0}) {
      const CError c = c_error(sphere(d, 4), ref, true, search);
      CAPTURE(d);
      CHECK(180.0 / c.scale == doctest::Approx(d).epsilon(0.005));
    }
  }

  TEST_CASE("edge margin drops pixels next to the mask") {
    const Pattern ref = sphere(180.0, 4);
    const CError full = c_error_at(ref, ref, 1.0, 0);
    const CError trimmed = c_error_at(ref, ref, 1.0, 2);
    CHECK(full.value == 0.0);
    CHECK(trimmed.value == 0.0);
    CHECK_THROWS_AS(c_error_at(ref, ref, 1.0, -1), Error);
  }

  TEST_CASE("fluence error and threshold") {
    CHECK(fluence_error(1.0, 1.0) == 0.0);
    CHECK(fluence_error(1.0, 0.8) == doctest::Approx(0.04));
    CHECK_THROWS_AS(fluence_error(0.0, 0.5), Error);

    MatchReport r;
    r.matched_label = "icosahedron";
    r.c_error = 0.2;
    CHECK(apply_threshold(r, 0.25).accepted);
    r.c_error = 0.6;
    const MatchReport rej = apply_threshold(r, 0.5);
    CHECK_FALSE(rej.accepted);
    CHECK(rej.matched_label == "rejected");
    r.c_error = 0.5;
    CHECK(apply_threshold(r, 0.5).accepted);
    CHECK(class_name(ShapeLabel::sphere) == "spheroid");
  }

  TEST_CASE("spearman") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const std::vector<double> up{2, 4, 6, 8, 100};
    const std::vector<double> down{5, 4, 3, 2, 1};
    const std::vector<double> ties{1, 1, 2, 2, 3};
    CHECK(spearman(x, up) == doctest::Approx(1.0));
    CHECK(spearman(x, down) == doctest::Approx(-1.0));
    CHECK(spearman(x, ties) == doctest::Approx(0.9486832980505138));
    CHECK(spearman(x, std::vector<double>(5, 1.0)) == 0.0);
  }

  TEST_CASE("perfect reports summarize to zero error") {
    const Dataset& t = test::small_templates();
    std::vector<MatchReport> reports;
    for (std::size_t k = 0; k < t.count(); ++k) {
      MatchReport r;
      r.frame_id = k;
      r.method = "ei";
      r.matched_id = static_cast<int>(k);
      r.matched_label = "icosahedron";
      r.phi_hat = 1.0;
      r.diameter_hat = 180.0;
      reports.push_back(r);
    }
    const EvalSummary s = summarize(reports, t);
    CHECK(s.frames == t.count());
    CHECK(s.benchmark_frames == t.count());
    CHECK(s.complete_c_error == 0.0);
    CHECK(*s.mean_fluence_error == 0.0);
    CHECK(*s.mean_abs_diameter_error == 0.0);
    REQUIRE(s.confusion.count("icosahedron") == 1);
    CHECK(s.confusion.at("icosahedron").icosahedron == t.count());
    CHECK(s.confusion.at("icosahedron").rejected == 0);

    test::TempDir dir("summary");
    write_summary(s, dir.path());
    for (const char* f : {"table2.csv", "table3.csv", "fig3_curves.csv", "per_frame.csv"})
      CHECK(std::filesystem::exists(dir / f));
    std::ifstream in(dir / "per_frame.csv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == t.count() + 1);

    reports.pop_back();
    CHECK_THROWS_AS(summarize(reports, t), Error);
  }
}

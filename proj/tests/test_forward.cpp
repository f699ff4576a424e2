#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "fxisort/errors.hpp"
#include "fxisort/forward_sim.hpp"
#include "support.hpp"

using namespace fxisort;

namespace {

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 m{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) m[i][j] += a[i][k] * b[k][j];
  return m;
}

double sphere_amplitude(double k, double radius) {
  const double x = 2.0 * std::numbers::pi * k * radius;
  const double volume = 4.0 / 3.0 * std::numbers::pi * radius * radius * radius;
  if (x < 1e-8) return volume;
  return volume * 3.0 * (std::sin(x) - x * std::cos(x)) / (x * x * x);
}

// Relative RMS between a rendered sphere and the analytic form factor.
double sphere_mismatch(const ForwardModel& model, double diameter, int side) {
  ParticleSpec s;
  s.shape = ShapeLabel::sphere;
  s.diameter = diameter;
  const Pattern p = model.diffract_center(s, side);
  const auto& g = model.geometry();
  const double step = g.frequency_step() * 1e-9;
  const double c = model.scale() * model.beam().relative_flux();
  const int r0 = (g.n_slow - side) / 2, c0 = (g.n_fast - side) / 2;
  double num = 0.0, den = 0.0;
  for (int r = 0; r < side; ++r)
    for (int q = 0; q < side; ++q) {
      if (!p.mask().valid(r, q)) continue;
      const double ky = (r0 + r - 0.5 * (g.n_slow - 1)) * step;
      const double kx = (c0 + q - 0.5 * (g.n_fast - 1)) * step;
      const double a = sphere_amplitude(std::hypot(kx, ky), 0.5 * diameter);
      const double expected = c * a * a;
      num += (p(r, q) - expected) * (p(r, q) - expected);
      den += expected * expected;
    }
  return std::sqrt(num / den);
}

// Column of the first intensity minimum right of the center along the middle row.
int first_minimum(const Pattern& p) {
  const int row = p.rows() / 2;
  int c = p.cols() / 2;
  while (!p.mask().valid(row, c)) ++c;
  while (c + 1 < p.cols() && p(row, c + 1) < p(row, c)) ++c;
  return c;
}

}  // namespace

TEST_SUITE("forward") {
  TEST_CASE("sphere matches the analytic form factor") {
    const ForwardModel model;
    for (double d : {150.0, 180.0, 210.0}) {
      CAPTURE(d);
      CHECK(sphere_mismatch(model, d, 480) <= 0.01);
    }
  }

  TEST_CASE("first sphere minimum follows q R = 4.493") {
    const ForwardModel model;
    const auto& g = model.geometry();
    const double step = g.frequency_step() * 1e-9;
    for (double d : {150.0, 200.0}) {
      ParticleSpec s;
      s.shape = ShapeLabel::sphere;
      s.diameter = d;
      const Pattern p = model.diffract_center(s, 480);
      const double predicted = 4.4934 / (2.0 * std::numbers::pi * 0.5 * d) / step;
      const double found = first_minimum(p) - 0.5 * (p.cols() - 1);
      CAPTURE(d);
      CHECK(std::fabs(found - predicted) <= 1.0);
    }
  }

  TEST_CASE("icosahedral symmetry leaves the pattern unchanged") {
    ForwardModelConfig cfg;
    cfg.voxels = 48;
    const ForwardModel model({}, {}, cfg);
    Rng rng(8);
    const Quaternion q = random_orientation(rng);
    ParticleSpec a;
    a.orientation = q;
    const Pattern pa = model.diffract_center(a, 200);
    const auto group = icosahedral_rotations();
    REQUIRE(group.size() == 60);
    for (int k : {1, 17, 42}) {
      ParticleSpec b = a;
      b.orientation = Quaternion::from_matrix(multiply(q.to_matrix(), group[static_cast<std::size_t>(k)]));
      const Pattern pb = model.diffract_center(b, 200);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < pa.size(); ++i) {
        num += (pa.data()[i] - pb.data()[i]) * static_cast<double>(pa.data()[i] - pb.data()[i]);
        den += static_cast<double>(pa.data()[i]) * pa.data()[i];
      }
      CAPTURE(k);
      CHECK(std::sqrt(num / den) <= 1e-6);
    }
  }

  TEST_CASE("patterns are centrosymmetric and homogeneous in the scale") {
    ForwardModelConfig cfg;
    cfg.voxels = 48;
    const ForwardModel one({}, {}, cfg);
    cfg.photon_budget *= 2.0;
    const ForwardModel two({}, {}, cfg);
    Rng rng(12);
    ParticleSpec s;
    s.shape = ShapeLabel::spheroid;
    s.aspect_ratio = 0.7;
    s.orientation = random_orientation(rng);
    const Pattern a = one.diffract_center(s, 160);
    const Pattern b = two.diffract_center(s, 160);
    const int n = a.rows();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        CHECK(a(r, c) == doctest::Approx(a(n - 1 - r, n - 1 - c)).epsilon(1e-5));
        CHECK(b(r, c) == doctest::Approx(2.0 * a(r, c)).epsilon(1e-6));
      }
    CHECK(two.scale() == doctest::Approx(2.0 * one.scale()).epsilon(1e-12));
  }

  TEST_CASE("window rendering equals cropping the full detector") {
    ForwardModelConfig cfg;
    cfg.voxels = 32;
    const ForwardModel model({}, {}, cfg);
    ParticleSpec s;
    s.diameter = 170.0;
    const Pattern full = model.diffract(s);
    const Pattern win = model.diffract_center(s, 120);
    const Pattern crop = crop_center(full, 120);
    for (std::size_t i = 0; i < win.size(); ++i)
      CHECK(win.data()[i] == doctest::Approx(crop.data()[i]).epsilon(1e-5));
    CHECK(win.mask() == crop.mask());
  }

  TEST_CASE("projected thickness of simple bodies") {
    ParticleSpec sphere;
    sphere.shape = ShapeLabel::sphere;
    sphere.diameter = 100.0;
    CHECK(projected_thickness(sphere, 0.0, 0.0) == doctest::Approx(100.0));
    CHECK(projected_thickness(sphere, 30.0, 40.0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(projected_thickness(sphere, 0.0, 30.0) == doctest::Approx(80.0));
    ParticleSpec ico;
    ico.diameter = 2.0;
    // Vertex along the beam: the chord through the center spans the circumdiameter.
    const auto v = icosahedron_vertices();
    REQUIRE(v.size() == 12);
    CHECK(projected_thickness(ico, 0.0, 0.0) > 1.5);
    CHECK(projected_thickness(ico, 1.01, 0.0) == 0.0);
  }

  TEST_CASE("invalid inputs") {
    ParticleSpec big;
    big.diameter = 300.0;
    const ForwardModel model;
    CHECK_THROWS_AS(model.diffract_center(big, 120), Error);
    ParticleSpec bad;
    bad.diameter = -1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    ParticleSpec flat;
    flat.shape = ShapeLabel::spheroid;
    flat.aspect_ratio = 1.5;
    CHECK_THROWS_AS(flat.validate(), Error);
    CHECK_THROWS_AS(parse_recipe("Q"), Error);
  }

  TEST_CASE("dataset recipes") {
    const auto opt = test::small_options(6);
    const Dataset t = build_dataset(Recipe::T, 5, opt);
    REQUIRE(t.count() == 6);
    for (const auto& p : t.frames) {
      CHECK(p.meta().label == ShapeLabel::icosahedron);
      CHECK(*p.meta().true_diameter == 180.0);
      CHECK(*p.meta().true_fluence == 1.0);
    }
    const Dataset d = build_dataset(Recipe::D, 5, opt);
    REQUIRE(d.count() == 14);
    for (std::size_t k = 0; k < t.count(); ++k)
      CHECK(std::memcmp(d.frames[k].data().data(), t.frames[k].data().data(), t.frames[k].size() * 4) == 0);
    CHECK(d.frames[3].meta().source_id == 3);
    CHECK_FALSE(d.frames[10].meta().source_id.has_value());

    const Dataset p = build_dataset(Recipe::P, 5, opt);
    const Dataset p2 = noisy_from_clean(d, Recipe::P, 5, opt);
    const Dataset f = build_dataset(Recipe::F, 5, opt);
    const Dataset f2 = noisy_from_clean(d, Recipe::F, 5, opt);
    REQUIRE(p.count() == d.count());
    for (std::size_t k = 0; k < p.count(); ++k) {
      CHECK(std::memcmp(p.frames[k].data().data(), p2.frames[k].data().data(), p.frames[k].size() * 4) == 0);
      CHECK(std::memcmp(f.frames[k].data().data(), f2.frames[k].data().data(), f.frames[k].size() * 4) == 0);
      const double phi = *f.frames[k].meta().true_fluence;
      CHECK(phi >= 0.01);
      CHECK(phi <= 1.1);
    }
    CHECK_THROWS_AS(noisy_from_clean(d, Recipe::P, 6, opt), Error);
    CHECK_THROWS_AS(noisy_from_clean(d, Recipe::S, 5, opt), Error);

    const Dataset s = build_dataset(Recipe::S, 5, opt);
    for (const auto& q : s.frames) {
      CHECK(*q.meta().true_diameter >= 150.0);
      CHECK(*q.meta().true_diameter <= 210.0);
    }
    const Dataset x = build_dataset(Recipe::X, 5, opt);
    REQUIRE(x.count() == 10);
    int spheroids = 0;
    for (const auto& q : x.frames)
      if (q.meta().label == ShapeLabel::spheroid) {
        ++spheroids;
        CHECK(*q.meta().aspect_ratio >= 0.6);
        CHECK(*q.meta().aspect_ratio <= 1.0);
      }
    CHECK(spheroids == 4);
  }

  TEST_CASE("generation does not depend on the worker count") {
    auto opt = test::small_options(5);
    const Dataset a = build_dataset(Recipe::F, 9, opt);
    opt.workers = 4;
    const Dataset b = build_dataset(Recipe::F, 9, opt);
    for (std::size_t k = 0; k < a.count(); ++k)
      CHECK(std::memcmp(a.frames[k].data().data(), b.frames[k].data().data(), a.frames[k].size() * 4) == 0);
  }

  TEST_CASE("unreachable separation is a configuration error") {
    auto opt = test::small_options(4);
    opt.separation = 0.9;
    opt.max_candidates = 16;
    CHECK_THROWS_AS(build_dataset(Recipe::T, 1, opt), Error);
  }
}

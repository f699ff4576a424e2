#include <doctest.h>

#include <cmath>

#include "fxisort/classifier_ei.hpp"
#include "fxisort/classifier_ll.hpp"
#include "fxisort/errors.hpp"
#include "fxisort/forward_sim.hpp"
#include "fxisort/npd.hpp"
#include "support.hpp"

using namespace fxisort;

namespace {

Dataset two_frames() {
  Dataset d;
  d.frames.emplace_back(2, 2, std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f});
  d.frames.emplace_back(2, 2, std::vector<float>{4.0f, 1.0f, 0.0f, 2.0f});
  return d;
}

Pattern scaled(const Pattern& p, float c) {
  std::vector<float> v(p.data().begin(), p.data().end());
  for (auto& x : v) x *= c;
  return Pattern(p.rows(), p.cols(), std::move(v), p.mask(), p.meta());
}

}  // namespace

TEST_SUITE("ei") {
  TEST_CASE("two-frame closed form") {
    const Dataset d = two_frames();
    EiOptions opt;
    opt.normalize = false;
    const EiModel m = ei_train(d, opt);
    REQUIRE(m.rank() == 1);
    const float x[] = {1, 2, 3, 4}, y[] = {4, 1, 0, 2};
    Eigen::Vector4d diff;
    for (int i = 0; i < 4; ++i) {
      CHECK(m.mean(i) == doctest::Approx(0.5 * (x[i] + y[i])));
      diff(i) = x[i] - y[i];
    }
    diff.normalize();
    CHECK(std::fabs(m.basis.col(0).dot(diff)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.projections(0, 0) == doctest::Approx(-m.projections(0, 1)));
    CHECK(std::fabs(m.projections(0, 0)) > 0.0);
  }

  TEST_CASE("Gram residual and orthonormal basis") {
    const Dataset& t = test::small_templates();
    const GramDecomposition g = gram_decomposition(t, true);
    const Eigen::MatrixXd rebuilt = g.eigenvectors * g.eigenvalues.asDiagonal() * g.eigenvectors.transpose();
    CHECK((rebuilt - g.gram).norm() / g.gram.norm() <= 1e-10);
    for (Eigen::Index i = 1; i < g.eigenvalues.size(); ++i) CHECK(g.eigenvalues(i) <= g.eigenvalues(i - 1));
    CHECK(g.eigenvalues.minCoeff() >= 0.0);

    const EiModel m = ei_train(t);
    const Eigen::MatrixXd utu = m.basis.transpose() * m.basis;
    CHECK((utu - Eigen::MatrixXd::Identity(m.rank(), m.rank())).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(m.rank() <= static_cast<int>(t.count()) - 1);
    // re-orthonormalization keeps the leading eigenface and its sign
    const Eigen::VectorXd u0 = (g.shifted * g.eigenvectors.col(0)).normalized();
    CHECK(u0.dot(m.basis.col(0)) == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("self match and scale invariance") {
    const Dataset& t = test::small_templates();
    const EiModel m = ei_train(t);
    for (std::size_t j = 0; j < t.count(); ++j) {
      const MatchReport r = ei_classify(m, t.frames[j]);
      CHECK(r.matched_id == static_cast<int>(j));
      CHECK(r.score <= 1e-9 * m.projections.col(static_cast<Eigen::Index>(j)).norm() + 1e-12);
      CHECK(ei_classify(m, scaled(t.frames[j], 37.5f)).matched_id == static_cast<int>(j));
    }
  }

  TEST_CASE("requested rank beyond the numerical rank truncates") {
    const Dataset& t = test::small_templates();
    EiOptions opt;
    opt.rank = 3;
    CHECK(ei_train(t, opt).rank() == 3);
    // Mean subtraction leaves at most count - 1 directions.
    opt.rank = static_cast<int>(t.count());
    const EiModel m = ei_train(t, opt);
    CHECK(m.truncated);
    CHECK(m.rank() < opt.rank);
    opt.rank = static_cast<int>(t.count()) + 1;
    CHECK_THROWS_AS(ei_train(t, opt), Error);
  }

  TEST_CASE("model files round trip") {
    const Dataset& t = test::small_templates();
    const EiModel m = ei_train(t);
    test::TempDir dir("ei");
    save_ei_model(m, dir.path());
    for (const char* f : {"model.json", "mean.bin", "basis.bin", "omega.bin", "eigvals.bin"})
      CHECK(std::filesystem::exists(dir / f));
    const EiModel back = load_ei_model(dir.path());
    CHECK(back.rank() == m.rank());
    CHECK((back.basis - m.basis).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.projections - m.projections).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.active == m.active);
    const MatchReport a = ei_classify(m, t.frames[2]);
    const MatchReport b = ei_classify(back, t.frames[2]);
    CHECK(a.matched_id == b.matched_id);
    CHECK(a.score == b.score);
  }

  TEST_CASE("shape mismatch and empty training set") {
    const EiModel m = ei_train(test::small_templates());
    CHECK_THROWS_AS(ei_classify(m, Pattern(3, 3, std::vector<float>(9, 1.0f))), Error);
    CHECK_THROWS_AS(ei_train(Dataset{}), Error);
  }
}

TEST_SUITE("ll") {
  TEST_CASE("scalar likelihood") {
    const Pattern t(1, 1, {2.0f});
    const Pattern p(1, 1, {3.0f});
    CHECK(log_likelihood(p, t, 1.0) == doctest::Approx(3.0 * std::log(2.0) - 2.0).epsilon(1e-14));
    const Pattern zero(1, 1, {0.0f});
    CHECK(log_likelihood(zero, t, 0.7) == doctest::Approx(-1.4));
    CHECK(log_likelihood(zero, t, 0.0) == 0.0);
    CHECK_THROWS_AS(log_likelihood(p, t, 0.0), Error);
  }

  TEST_CASE("fluence estimate") {
    const Pattern& t = test::small_templates().frames[0];
    CHECK(estimate_fluence(scaled(t, 2.5f), t) == doctest::Approx(2.5).epsilon(1e-6));
    CHECK(estimate_fluence(scaled(t, 0.0f), t) == 0.0);
    CHECK_THROWS_AS(estimate_fluence(t, scaled(t, 0.0f)), Error);

    // Poisson(0.37 T) with sum T = 1e6: the band is +-2 sigma, so about 95% of
    // draws land inside it and none should stray past 4 sigma.
    std::vector<float> flat(10000, 100.0f);
    const Pattern big(100, 100, flat);
    int inside = 0;
    const int draws = 60;
    for (int k = 0; k < draws; ++k) {
      Rng rng(100 + static_cast<std::uint64_t>(k));
      const double phi = estimate_fluence(apply_poisson(big, 0.37, rng), big);
      inside += phi >= 0.3688 && phi <= 0.3712;
      CHECK(std::fabs(phi - 0.37) <= 4.0 * std::sqrt(0.37e6) / 1e6);
    }
    CHECK(inside >= draws * 9 / 10);
  }

  TEST_CASE("fitted fluence is the stationary point") {
    const Dataset& t = test::small_templates();
    Rng rng(21);
    const Pattern p = apply_poisson(t.frames[1], 0.6, rng);
    for (std::size_t k : {0u, 1u, 4u}) {
      const Pattern& tk = t.frames[k];
      const double phi = estimate_fluence(p, tk);
      const double h = 1e-6 * phi;
      const double up = log_likelihood(p, tk, phi + h);
      const double mid = log_likelihood(p, tk, phi);
      const double down = log_likelihood(p, tk, phi - h);
      // dL/dphi = sum P / phi - sum T vanishes; compare the central difference
      // against the scale of either term.
      const double fd = (up - down) / (2.0 * h);
      const double scale = masked_sum(tk);
      CAPTURE(k);
      CHECK(std::fabs(fd) / scale <= 1e-5);
      CHECK(mid >= up);
      CHECK(mid >= down);
    }
  }

  TEST_CASE("floored log cache") {
    const Pattern t(1, 3, {0.0f, 1.0f, 4.0f});
    const auto l = floored_log(t);
    CHECK(l[0] == doctest::Approx(std::log(4e-12)));
    CHECK(l[1] == 0.0);
    CHECK(l[2] == doctest::Approx(std::log(4.0)));
  }

  TEST_CASE("self match and one-template model") {
    const Dataset& t = test::small_templates();
    const LlModel m(t);
    for (std::size_t j = 0; j < t.count(); ++j) {
      const MatchReport r = ll_classify(m, scaled(t.frames[j], 3.0f));
      CHECK(r.matched_id == static_cast<int>(j));
      CHECK(r.phi_hat == doctest::Approx(3.0).epsilon(1e-6));
    }
    Dataset one;
    one.frames.push_back(t.frames[4]);
    const LlModel single(one);
    CHECK(ll_classify(single, t.frames[0]).matched_id == 0);
    CHECK_THROWS_AS(ll_classify(LlModel{}, t.frames[0]), Error);
  }
}

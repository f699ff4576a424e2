#include <doctest.h>

#include <fstream>
#include <sstream>

#include "fxisort/classifier_ei.hpp"
#include "fxisort/errors.hpp"
#include "fxisort/forward_sim.hpp"
#include "fxisort/npd.hpp"
#include "fxisort/pipeline.hpp"
#include "support.hpp"

using namespace fxisort;

namespace {

std::string slurp(const std::filesystem::path& f) {
  std::ifstream in(f);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Fixture {
  test::TempDir dir{"pipe"};
  Dataset f;
  Fixture() {
    const auto opt = test::small_options();
    write_npd(test::small_templates(), dir / "T");
    save_ei_model(ei_train(test::small_templates()), dir / "model");
    f = build_dataset(Recipe::F, 7, opt);
    write_npd(f, dir / "F");
  }
  JobConfig job(Method m, int workers) const {
    JobConfig cfg;
    cfg.method = m;
    cfg.model = m == Method::ei ? dir / "model" : dir / "T";
    cfg.data = dir / "F";
    cfg.workers = workers;
    cfg.search_scale = true;
    cfg.threshold = 0.5;
    return cfg;
  }
};

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("worker count does not change results") {
    Fixture fx;
    for (Method m : {Method::ei, Method::ll}) {
      const BatchResult one = run_batch(fx.job(m, 1));
      const BatchResult eight = run_batch(fx.job(m, 8));
      write_results_csv(one.reports, fx.dir / "one.csv");
      write_results_csv(eight.reports, fx.dir / "eight.csv");
      CHECK(slurp(fx.dir / "one.csv") == slurp(fx.dir / "eight.csv"));
      CHECK(one.reports.size() == fx.f.count());
      CHECK(eight.throughput.workers == 8);
      CHECK(eight.throughput.utilization.size() == 8);
    }
  }

  TEST_CASE("templates classify to themselves through the pipeline") {
    Fixture fx;
    JobConfig cfg = fx.job(Method::ei, 2);
    cfg.data = fx.dir / "T";
    for (Method m : {Method::ei, Method::ll}) {
      cfg.method = m;
      cfg.model = m == Method::ei ? fx.dir / "model" : fx.dir / "T";
      for (const auto& r : run_batch(cfg).reports) {
        CHECK(r.matched_id == static_cast<int>(r.frame_id));
        CHECK(r.c_error <= 1e-9);
        CHECK(r.diameter_hat == doctest::Approx(180.0).epsilon(1e-3));
        CHECK(r.accepted);
      }
    }
  }

  TEST_CASE("results CSV round trip") {
    Fixture fx;
    const BatchResult b = run_batch(fx.job(Method::ll, 1));
    write_results_csv(b.reports, fx.dir / "r.csv");
    const std::string text = slurp(fx.dir / "r.csv");
    CHECK(text.rfind("frame_id,method,matched_id,matched_label,score,phi_hat,scale_hat,diameter_hat,c_error,accepted\n", 0) == 0);
    const auto back = read_results_csv(fx.dir / "r.csv");
    REQUIRE(back.size() == b.reports.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].frame_id == b.reports[i].frame_id);
      CHECK(back[i].matched_id == b.reports[i].matched_id);
      CHECK(back[i].matched_label == b.reports[i].matched_label);
      CHECK(back[i].score == b.reports[i].score);
      CHECK(back[i].phi_hat == b.reports[i].phi_hat);
      CHECK(back[i].scale_hat == b.reports[i].scale_hat);
      CHECK(back[i].c_error == b.reports[i].c_error);
      CHECK(back[i].accepted == b.reports[i].accepted);
    }
    std::ofstream(fx.dir / "bad.csv") << "frame_id,method\n1,ei\n";
    CHECK_THROWS_AS(read_results_csv(fx.dir / "bad.csv"), Error);
  }

  TEST_CASE("bench reports medians and a scaling table") {
    Fixture fx;
    JobConfig cfg = fx.job(Method::ei, 1);
    cfg.search_scale = false;
    const ThroughputReport r = bench(cfg, 3, {1, 2});
    CHECK(r.frames == fx.f.count());
    REQUIRE(r.scaling.size() == 2);
    CHECK(r.scaling[0].first == 1);
    CHECK(r.fps > 0.0);
    CHECK(r.fps == doctest::Approx(r.frames / r.wall_seconds).epsilon(1e-9));
    CHECK_FALSE(r.machine.empty());
    CHECK(throughput_json(r).find("\"scaling\"") != std::string::npos);
    CHECK_THROWS_AS(bench(cfg, 2), Error);
  }

  TEST_CASE("mismatched model and data abort") {
    Fixture fx;
    auto opt = test::small_options(3);
    opt.preprocess = {120, 4};
    write_npd(build_dataset(Recipe::P, 1, opt), fx.dir / "small");
    JobConfig cfg = fx.job(Method::ei, 1);
    cfg.data = fx.dir / "small";
    CHECK_THROWS_AS(run_batch(cfg), Error);
    cfg.data = fx.dir / "nowhere";
    CHECK_THROWS_AS(run_batch(cfg), Error);
    cfg = fx.job(Method::ei, 0);
    CHECK_THROWS_AS(cfg.validate(), Error);
  }
}

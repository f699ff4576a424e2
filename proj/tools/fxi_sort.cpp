// fxi-sort: dataset generation, EI training, classification, evaluation and
// throughput benchmarking from the command line.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fxisort/classifier_ei.hpp"
#include "fxisort/errors.hpp"
#include "fxisort/forward_sim.hpp"
#include "fxisort/metrics.hpp"
#include "fxisort/npd.hpp"
#include "fxisort/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fxisort;

namespace {

int report_error(std::string_view kind, const std::string& message, int code) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << std::endl;
  return code;
}

struct GenerateArgs {
  std::string recipe;
  std::uint64_t seed = 0;
  std::string out;
  int voxels = ForwardModelConfig{}.voxels;
  int supersample = ForwardModelConfig{}.supersample;
  double photon_budget = ForwardModelConfig{}.photon_budget;
  int crop = 480;
  int bin = 4;
  double separation = DatasetOptions{}.separation;
  bool with_sphere = false;
  int count = 0;
  int workers = 1;
  bool quiet = false;
};

struct JobArgs {
  std::string method = "ei";
  std::string model;
  std::string data;
  std::string out;
  int workers = 1;
  std::uint64_t seed = 0;
  double threshold = 0.0;
  bool scale_search = false;
};

void add_job_flags(CLI::App* cmd, JobArgs& a) {
  cmd->add_option("--workers", a.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Job seed (recorded; classification is deterministic)");
  cmd->add_option("--threshold", a.threshold, "Reject frames with c_error above this value")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--scale-search", a.scale_search, "Search the template zoom when computing c_error");
}

JobConfig job_config(const JobArgs& a) {
  JobConfig cfg;
  cfg.method = parse_method(a.method);
  cfg.model = a.model;
  cfg.data = a.data;
  cfg.results = a.out;
  cfg.workers = a.workers;
  cfg.seed = a.seed;
  cfg.search_scale = a.scale_search;
  if (a.threshold > 0.0) cfg.threshold = a.threshold;
  cfg.validate();
  return cfg;
}

void run_generate(const GenerateArgs& a) {
  const Recipe recipe = parse_recipe(a.recipe);
  DatasetOptions opt;
  opt.model.voxels = a.voxels;
  opt.model.supersample = a.supersample;
  opt.model.photon_budget = a.photon_budget;
  opt.preprocess = {a.crop, a.bin};
  opt.separation = a.separation;
  opt.add_sphere_template = a.with_sphere;
  opt.workers = a.workers;
  if (a.count > 0) {
    opt.sizes.templates = a.count;
    opt.sizes.homogeneous = a.count;
    opt.sizes.sizes = a.count;
  }
  if (!a.quiet)
    opt.progress = [](std::size_t done, std::size_t total) {
      std::fprintf(stderr, "\r%zu/%zu frames", done, total);
      if (done == total) std::fputc('\n', stderr);
    };
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset d = build_dataset(recipe, a.seed, opt);
  write_npd(d, a.out);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::json j{{"recipe", a.recipe}, {"seed", a.seed},  {"frames", d.count()}, {"rows", d.rows()},
                   {"cols", d.cols()},   {"out", a.out},    {"seconds", secs}};
  std::cout << j.dump() << std::endl;
}

void run_train(const std::string& train, const std::string& out, int rank) {
  const auto t0 = std::chrono::steady_clock::now();
  EiOptions opt;
  opt.rank = rank;
  const EiModel model = ei_train(read_npd(train), opt);
  save_ei_model(model, out);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::json j{{"templates", model.size()}, {"rank", model.rank()},   {"truncated", model.truncated},
                   {"active_pixels", model.active.size()}, {"out", out}, {"seconds", secs}};
  if (model.truncated) j["warning"] = "requested rank exceeds the numerical rank; model truncated";
  std::cout << j.dump() << std::endl;
}

void run_classify(const JobArgs& a) {
  const JobConfig cfg = job_config(a);
  const BatchResult result = run_batch(cfg);
  write_results_csv(result.reports, cfg.results);
  std::size_t errors = 0;
  for (const auto& r : result.reports) {
    if (r.error.empty()) continue;
    ++errors;
    std::cerr << nlohmann::json{{"frame_id", r.frame_id}, {"error", r.error}}.dump() << std::endl;
  }
  auto j = nlohmann::json::parse(throughput_json(result.throughput));
  j["errors"] = errors;
  j["out"] = a.out;
  std::cout << j.dump() << std::endl;
}

void run_evaluate(const std::string& results, const std::string& truth, const std::string& out, double bin_width) {
  const auto reports = read_results_csv(results);
  const NpdManifest manifest = read_npd_manifest(truth);
  SummaryOptions opt;
  opt.bin_width = bin_width;
  const EvalSummary s = summarize(reports, manifest.frames, opt);
  write_summary(s, out);
  nlohmann::json j{{"method", s.method},
                   {"frames", s.frames},
                   {"benchmark_frames", s.benchmark_frames},
                   {"benchmark_c_error", s.benchmark_c_error},
                   {"complete_c_error", s.complete_c_error},
                   {"errors", s.errors},
                   {"out", out}};
  if (s.mean_fluence_error) j["mean_fluence_error"] = *s.mean_fluence_error;
  if (s.mean_abs_diameter_error) j["mean_abs_diameter_error"] = *s.mean_abs_diameter_error;
  std::cout << j.dump() << std::endl;
}

void run_bench(const JobArgs& a, int repeats, const std::vector<int>& scaling, const std::string& out) {
  const JobConfig cfg = job_config(a);
  const ThroughputReport r = bench(cfg, repeats, scaling);
  const std::string text = throughput_json(r);
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) fail(ErrorKind::io, "cannot write " + out);
    f << text << '\n';
  }
  std::cout << text << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthesize and classify single-particle diffraction patterns"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Build a dataset (T, D, P, F, S or X) as an NPD directory");
  g->add_option("--recipe", gen.recipe, "Dataset recipe")->required()->check(CLI::IsMember({"T", "D", "P", "F", "S", "X"}));
  g->add_option("--seed", gen.seed, "Dataset seed")->required();
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--voxels", gen.voxels, "Real-space samples across the sampling box")->check(CLI::PositiveNumber);
  g->add_option("--supersample", gen.supersample, "Sub-rays per sample along each axis")->check(CLI::PositiveNumber);
  g->add_option("--photon-budget", gen.photon_budget, "Photons from the reference particle at unit fluence")
      ->check(CLI::PositiveNumber);
  g->add_option("--crop", gen.crop, "Center crop side in detector pixels (0 keeps the full frame)");
  g->add_option("--bin", gen.bin, "Binning factor")->check(CLI::PositiveNumber);
  g->add_option("--separation", gen.separation, "Minimum relative distance between templates (T)");
  g->add_flag("--with-sphere", gen.with_sphere, "Append a sphere template to T");
  g->add_option("--count", gen.count, "Override the frame count of T, D/P/F or S");
  g->add_option("--workers", gen.workers, "Worker threads")->check(CLI::PositiveNumber);
  g->add_flag("--quiet", gen.quiet, "No progress output");

  std::string train_dir, train_out;
  int rank = 0;
  auto* t = app.add_subcommand("train-ei", "Train an eigen-image model from a template set");
  t->add_option("--train", train_dir, "Template NPD directory")->required();
  t->add_option("--out", train_out, "Model directory")->required();
  t->add_option("--rank", rank, "Retained eigenpairs (0 = numerical rank)")->check(CLI::NonNegativeNumber);

  JobArgs cls;
  auto* c = app.add_subcommand("classify", "Classify every frame of a dataset");
  c->add_option("--model", cls.model, "EI model directory or template NPD directory")->required();
  c->add_option("--data", cls.data, "NPD dataset")->required();
  c->add_option("--method", cls.method, "ei or ll")->check(CLI::IsMember({"ei", "ll"}));
  c->add_option("--out", cls.out, "Results CSV")->required();
  add_job_flags(c, cls);

  std::string ev_results, ev_truth, ev_out;
  double bin_width = 10.0;
  auto* e = app.add_subcommand("evaluate", "Summarize results against ground truth");
  e->add_option("--results", ev_results, "Results CSV")->required();
  e->add_option("--truth", ev_truth, "NPD dataset the results refer to")->required();
  e->add_option("--out", ev_out, "Summary directory")->required();
  e->add_option("--bin-width", bin_width, "Diameter bin width (nm)")->check(CLI::PositiveNumber);

  JobArgs bn;
  int repeats = 3;
  std::vector<int> scaling;
  std::string bench_out;
  auto* b = app.add_subcommand("bench", "Time classification (warm-up excluded, median of repeats)");
  b->add_option("--model", bn.model, "EI model directory or template NPD directory")->required();
  b->add_option("--data", bn.data, "NPD dataset")->required();
  b->add_option("--method", bn.method, "ei or ll")->check(CLI::IsMember({"ei", "ll"}));
  b->add_option("--repeats", repeats, "Timed repeats (>= 3)");
  b->add_option("--scaling", scaling, "Worker counts for the scaling table")->delimiter(',');
  b->add_option("--out", bench_out, "Also write the report as JSON");
  add_job_flags(b, bn);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    return report_error("usage", ex.what(), 2);
  }

  try {
    if (*g) run_generate(gen);
    if (*t) run_train(train_dir, train_out, rank);
    if (*c) run_classify(cls);
    if (*e) run_evaluate(ev_results, ev_truth, ev_out, bin_width);
    if (*b) run_bench(bn, repeats, scaling, bench_out);
  } catch (const Error& ex) {
    return report_error(to_string(ex.kind()), ex.what(), 1);
  } catch (const std::exception& ex) {
    return report_error("internal", ex.what(), 1);
  }
  return 0;
}

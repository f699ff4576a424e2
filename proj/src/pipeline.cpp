#include "fxisort/pipeline.hpp"

#include <time.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fxisort/npd.hpp"
#include "fxisort/parallel.hpp"

namespace fxisort {

namespace fs = std::filesystem;

std::string_view to_string(Method method) { return method == Method::ei ? "ei" : "ll"; }

Method parse_method(std::string_view text) {
  if (text == "ei") return Method::ei;
  if (text == "ll") return Method::ll;
  fail(ErrorKind::configuration, "unknown method '" + std::string(text) + "' (expected ei or ll)");
}

void JobConfig::validate() const {
  if (workers < 1) fail(ErrorKind::configuration, "worker count must be >= 1");
  if (threshold && !(*threshold > 0.0)) fail(ErrorKind::configuration, "threshold must be > 0");
  if (search_scale) search.validate();
}

// ---------------------------------------------------------------------------

Classifier::Classifier(EiModel model) : method_(Method::ei), ei_(std::make_shared<const EiModel>(std::move(model))) {}

Classifier::Classifier(LlModel model) : method_(Method::ll), ll_(std::make_shared<const LlModel>(std::move(model))) {}

Classifier Classifier::load(Method method, const fs::path& model) {
  const bool is_ei_dir = fs::exists(model / "model.json");
  const bool is_npd = fs::exists(model / "manifest.json");
  if (!is_ei_dir && !is_npd) fail(ErrorKind::io, model.string() + " is neither an EI model nor an NPD dataset");
  if (method == Method::ei) {
    if (is_ei_dir) return Classifier(load_ei_model(model));
    return Classifier(ei_train(read_npd(model)));
  }
  return Classifier(LlModel(is_ei_dir ? read_npd(model / "templates") : read_npd(model)));
}

const Dataset& Classifier::templates() const { return ei_ ? ei_->templates : ll_->templates(); }

MatchReport Classifier::match(const Pattern& p) const { return ei_ ? ei_classify(*ei_, p) : ll_classify(*ll_, p); }

MatchReport classify_frame(const Classifier& classifier, const Pattern& p, const JobConfig& cfg) {
  MatchReport r = classifier.match(p);
  const Pattern& t = classifier.templates().frames[static_cast<std::size_t>(r.matched_id)];
  const CError e = c_error(p, t, cfg.search_scale, cfg.search);
  r.c_error = e.value;
  r.scale_hat = e.scale;
  r.phi_hat = e.phi_hat;
  if (t.meta().true_diameter) r.diameter_hat = *t.meta().true_diameter / e.scale;
  if (cfg.threshold) r = apply_threshold(std::move(r), *cfg.threshold);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void check_compatible(const Classifier& classifier, int rows, int cols) {
  const Dataset& t = classifier.templates();
  if (t.rows() != rows || t.cols() != cols)
    fail(ErrorKind::contract, "data frames are " + std::to_string(rows) + "x" + std::to_string(cols) +
                                  " but the model expects " + std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
}

}  // namespace

BatchResult run_batch(const Classifier& classifier, std::size_t count, const FrameSource& source, const JobConfig& cfg) {
  cfg.validate();
  BatchResult out;
  out.reports.resize(count);
  std::vector<double> latency(count, 0.0);

  const int threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), std::max<std::size_t>(count, 1)));
  std::vector<double> busy(static_cast<std::size_t>(threads), 0.0);

  const auto t0 = std::chrono::steady_clock::now();
  parallel_for_indexed(count, threads, [&](std::size_t i, std::size_t worker) {
    MatchReport r;
    r.method = std::string(to_string(classifier.method()));
    try {
      const Pattern p = source(i);
      const double c0 = thread_cpu_seconds();
      r = classify_frame(classifier, p, cfg);
      latency[i] = thread_cpu_seconds() - c0;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::contract) throw;
      r.error = std::string(to_string(e.kind())) + ": " + e.what();
      r.accepted = false;
      r.matched_label = "error";
    } catch (const std::exception& e) {
      r.error = e.what();
      r.accepted = false;
      r.matched_label = "error";
    }
    r.frame_id = i;
    busy[worker] += latency[i];
    out.reports[i] = std::move(r);
  });
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ThroughputReport& tp = out.throughput;
  tp.frames = count;
  tp.workers = cfg.workers;
  tp.wall_seconds = wall;
  tp.fps = wall > 0.0 ? static_cast<double>(count) / wall : 0.0;
  if (count > 0) {
    tp.mean_latency_ms = 1e3 * std::accumulate(latency.begin(), latency.end(), 0.0) / static_cast<double>(count);
    tp.median_latency_ms = 1e3 * median(latency);
  }
  for (double b : busy) tp.utilization.push_back(wall > 0.0 ? b / wall : 0.0);
  tp.scaling = {{cfg.workers, tp.fps}};
  tp.machine = machine_descriptor();
  return out;
}

BatchResult run_batch(const Classifier& classifier, const Dataset& data, const JobConfig& cfg) {
  if (data.count() > 0) check_compatible(classifier, data.rows(), data.cols());
  return run_batch(classifier, data.count(), [&](std::size_t i) { return data.frames[i]; }, cfg);
}

BatchResult run_batch(const JobConfig& cfg) {
  cfg.validate();
  const Classifier classifier = Classifier::load(cfg.method, cfg.model);
  const NpdReader reader(cfg.data);
  check_compatible(classifier, reader.manifest().rows, reader.manifest().cols);
  return run_batch(classifier, reader.count(), [&](std::size_t i) { return reader.read(i); }, cfg);
}

ThroughputReport bench(const Classifier& classifier, std::size_t count, const FrameSource& source, const JobConfig& cfg,
                       int repeats, std::vector<int> worker_counts) {
  if (repeats < 3) fail(ErrorKind::configuration, "bench needs at least 3 repeats");
  if (worker_counts.empty()) worker_counts.push_back(cfg.workers);
  for (int w : worker_counts)
    if (w < 1) fail(ErrorKind::configuration, "worker count must be >= 1");

  ThroughputReport summary;
  bool first = true;
  for (int w : worker_counts) {
    JobConfig c = cfg;
    c.workers = w;
    run_batch(classifier, count, source, c);  // warm-up
    std::vector<double> wall, fps, mean_ms, median_ms;
    std::vector<std::vector<double>> util;
    for (int r = 0; r < repeats; ++r) {
      const BatchResult b = run_batch(classifier, count, source, c);
      wall.push_back(b.throughput.wall_seconds);
      fps.push_back(b.throughput.fps);
      mean_ms.push_back(b.throughput.mean_latency_ms);
      median_ms.push_back(b.throughput.median_latency_ms);
      util.push_back(b.throughput.utilization);
    }
    const double med_fps = median(fps);
    summary.scaling.emplace_back(w, med_fps);
    if (first) {
      first = false;
      summary.frames = count;
      summary.workers = w;
      summary.wall_seconds = median(wall);
      summary.fps = med_fps;
      summary.mean_latency_ms = median(mean_ms);
      summary.median_latency_ms = median(median_ms);
      for (std::size_t k = 0; k < util.front().size(); ++k) {
        std::vector<double> col;
        for (const auto& u : util) col.push_back(k < u.size() ? u[k] : 0.0);
        summary.utilization.push_back(median(col));
      }
    }
  }
  summary.machine = machine_descriptor();
  return summary;
}

ThroughputReport bench(const JobConfig& cfg, int repeats, std::vector<int> worker_counts) {
  cfg.validate();
  const Classifier classifier = Classifier::load(cfg.method, cfg.model);
  // Frames are held in memory so the timing excludes disk reads.
  const Dataset data = read_npd(cfg.data);
  check_compatible(classifier, data.rows(), data.cols());
  return bench(classifier, data.count(), [&](std::size_t i) { return data.frames[i]; }, cfg, repeats,
               std::move(worker_counts));
}

std::string machine_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(colon + 2);
      break;
    }
  }
  std::ostringstream os;
  os << cpu << "; " << std::thread::hardware_concurrency() << " hardware threads";
#if defined(__clang__)
  os << "; clang " << __clang_major__ << "." << __clang_minor__;
#elif defined(__GNUC__)
  os << "; gcc " << __GNUC__ << "." << __GNUC_MINOR__;
#endif
  return os.str();
}

std::string throughput_json(const ThroughputReport& r) {
  nlohmann::json j;
  j["frames"] = r.frames;
  j["workers"] = r.workers;
  j["wall_seconds"] = r.wall_seconds;
  j["fps"] = r.fps;
  j["mean_latency_ms"] = r.mean_latency_ms;
  j["median_latency_ms"] = r.median_latency_ms;
  j["utilization"] = r.utilization;
  auto& s = j["scaling"] = nlohmann::json::array();
  for (const auto& [w, fps] : r.scaling) s.push_back({{"workers", w}, {"fps", fps}});
  j["machine"] = r.machine;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Results CSV

namespace {

constexpr const char* kResultsHeader =
    "frame_id,method,matched_id,matched_label,score,phi_hat,scale_hat,diameter_hat,c_error,accepted";

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double parse_double(const std::string& s, const fs::path& file, std::size_t line) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::schema, file.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
}

}  // namespace

void write_results_csv(std::span<const MatchReport> reports, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
  out << kResultsHeader << '\n';
  for (const auto& r : reports) {
    out << r.frame_id << ',' << r.method << ',' << r.matched_id << ',' << r.matched_label << ',' << fmt(r.score) << ','
        << fmt(r.phi_hat) << ',' << fmt(r.scale_hat) << ',' << fmt(r.diameter_hat) << ',' << fmt(r.c_error) << ','
        << (r.accepted ? 1 : 0) << '\n';
  }
  if (!out) fail(ErrorKind::io, "failed writing " + file.string());
}

std::vector<MatchReport> read_results_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::io, "cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader)
    fail(ErrorKind::schema, file.string() + ": unexpected header");
  std::vector<MatchReport> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 10)
      fail(ErrorKind::schema, file.string() + ":" + std::to_string(lineno) + ": expected 10 fields");
    MatchReport r;
    r.frame_id = static_cast<std::size_t>(parse_double(f[0], file, lineno));
    r.method = f[1];
    r.matched_id = static_cast<int>(parse_double(f[2], file, lineno));
    r.matched_label = f[3];
    r.score = parse_double(f[4], file, lineno);
    r.phi_hat = parse_double(f[5], file, lineno);
    r.scale_hat = parse_double(f[6], file, lineno);
    r.diameter_hat = parse_double(f[7], file, lineno);
    r.c_error = parse_double(f[8], file, lineno);
    r.accepted = f[9] == "1";
    if (r.matched_label == "error") r.error = "error";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fxisort

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fxisort/classifier_ei.hpp"
#include "fxisort/classifier_ll.hpp"
#include "fxisort/core.hpp"
#include "fxisort/metrics.hpp"
#include "fxisort/report.hpp"

namespace fxisort {

enum class Method { ei, ll };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

struct JobConfig {
  Method method = Method::ei;
  std::filesystem::path model;  // EI model directory, or an NPD template set
  std::filesystem::path data;   // NPD dataset to classify
  std::filesystem::path results;
  int workers = 1;
  bool search_scale = false;
  ScaleSearch search;
  std::optional<double> threshold;  // no rejection when unset
  std::uint64_t seed = 0;

  void validate() const;
};

/// A loaded, immutable classifier. Copies share the model.
class Classifier {
 public:
  explicit Classifier(EiModel model);
  explicit Classifier(LlModel model);

  /// EI accepts a model directory or trains on an NPD template set; LL reads
  /// the templates of either.
  static Classifier load(Method method, const std::filesystem::path& model);

  Method method() const { return method_; }
  const Dataset& templates() const;

  /// Nearest template only; no error metrics.
  MatchReport match(const Pattern& p) const;

 private:
  Method method_;
  std::shared_ptr<const EiModel> ei_;
  std::shared_ptr<const LlModel> ll_;
};

/// Match, then c_error against the matched template (with optional zoom
/// search), fluence and size estimates, and the rejection rule.
MatchReport classify_frame(const Classifier& classifier, const Pattern& p, const JobConfig& cfg);

struct ThroughputReport {
  std::size_t frames = 0;
  int workers = 1;
  double wall_seconds = 0.0;
  double mean_latency_ms = 0.0;    // per-frame thread CPU time of classify_frame
  double median_latency_ms = 0.0;
  double fps = 0.0;
  std::vector<double> utilization;  // busy CPU time / wall time per worker
  std::vector<std::pair<int, double>> scaling;  // workers -> fps
  std::string machine;
};

struct BatchResult {
  std::vector<MatchReport> reports;  // input order
  ThroughputReport throughput;
};

/// Frame source for run_batch; called concurrently from worker threads.
using FrameSource = std::function<Pattern(std::size_t)>;

BatchResult run_batch(const Classifier& classifier, std::size_t count, const FrameSource& source, const JobConfig& cfg);
BatchResult run_batch(const Classifier& classifier, const Dataset& data, const JobConfig& cfg);
/// Loads cfg.model and streams frames lazily from cfg.data.
BatchResult run_batch(const JobConfig& cfg);

/// One warm-up pass, then `repeats` timed passes per worker count; reports the
/// median. The scaling table covers `worker_counts` (cfg.workers if empty).
ThroughputReport bench(const Classifier& classifier, std::size_t count, const FrameSource& source, const JobConfig& cfg,
                       int repeats = 3, std::vector<int> worker_counts = {});
ThroughputReport bench(const JobConfig& cfg, int repeats = 3, std::vector<int> worker_counts = {});

std::string machine_descriptor();
std::string throughput_json(const ThroughputReport& report);

void write_results_csv(std::span<const MatchReport> reports, const std::filesystem::path& file);
std::vector<MatchReport> read_results_csv(const std::filesystem::path& file);

}  // namespace fxisort

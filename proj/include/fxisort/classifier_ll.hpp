#pragma once

#include <vector>

#include "fxisort/core.hpp"
#include "fxisort/report.hpp"

namespace fxisort {

/// Noiseless templates with per-template sums and a floored log cache.
class LlModel {
 public:
  LlModel() = default;
  explicit LlModel(Dataset templates, double floor_ratio = 1e-12);

  const Dataset& templates() const { return templates_; }
  std::size_t size() const { return templates_.count(); }
  double floor_ratio() const { return floor_ratio_; }

  double template_sum(std::size_t k) const { return sums_[k]; }
  const std::vector<double>& log_template(std::size_t k) const { return logs_[k]; }

 private:
  Dataset templates_;
  double floor_ratio_ = 1e-12;
  std::vector<double> sums_;
  std::vector<std::vector<double>> logs_;
};

/// log(max(T_i, floor_ratio * max_unmasked(T))) per pixel; masked pixels 0.
std::vector<double> floored_log(const Pattern& t, double floor_ratio = 1e-12);

/// phi = sum P / sum T over the pixels unmasked in both frames.
double estimate_fluence(const Pattern& p, const Pattern& t);

/// sum_i P_i log T_i + P_i log phi - phi T_i over shared unmasked pixels.
/// The -log P_i! terms are constant in the template and never computed.
double log_likelihood(const Pattern& p, const Pattern& t, double phi, double floor_ratio = 1e-12);

/// Maximum-likelihood template with its own fitted fluence; ties go to the
/// smallest index. The report carries phi of the winning template.
MatchReport ll_classify(const LlModel& model, const Pattern& p);

}  // namespace fxisort

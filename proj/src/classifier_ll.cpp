#include "fxisort/classifier_ll.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fxisort {

namespace {

void check_shapes(const Pattern& p, const Pattern& t) {
  if (!p.same_shape(t))
    fail(ErrorKind::contract, "frame shape " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                                  " does not match the template (" + std::to_string(t.rows()) + "x" +
                                  std::to_string(t.cols()) + ")");
}

// Log-likelihood from the three shared-mask sums. phi = 0 with no counts is 0.
double likelihood_from_sums(double sum_p, double sum_t, double sum_p_log_t, double phi) {
  if (phi < 0.0 || !std::isfinite(phi)) fail(ErrorKind::domain, "fluence must be finite and >= 0");
  if (phi == 0.0) {
    if (sum_p > 0.0) fail(ErrorKind::domain, "zero fluence cannot explain a frame with counts");
    return 0.0;
  }
  return sum_p_log_t + sum_p * std::log(phi) - phi * sum_t;
}

}  // namespace

std::vector<double> floored_log(const Pattern& t, double floor_ratio) {
  const auto data = t.data();
  double peak = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (t.mask().valid(i)) peak = std::max(peak, static_cast<double>(data[i]));
  const double floor = floor_ratio * peak;
  std::vector<double> logs(data.size(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (t.mask().valid(i)) logs[i] = std::log(std::max(static_cast<double>(data[i]), floor));
  return logs;
}

LlModel::LlModel(Dataset templates, double floor_ratio) : templates_(std::move(templates)), floor_ratio_(floor_ratio) {
  templates_.validate();
  if (!(floor_ratio_ > 0.0) || floor_ratio_ >= 1.0) fail(ErrorKind::configuration, "log floor ratio must lie in (0, 1)");
  sums_.reserve(templates_.count());
  logs_.reserve(templates_.count());
  for (std::size_t k = 0; k < templates_.count(); ++k) {
    const auto& t = templates_.frames[k];
    const double s = masked_sum(t);
    if (!(s > 0.0)) fail(ErrorKind::degenerate, "template " + std::to_string(k) + " has no signal on unmasked pixels");
    sums_.push_back(s);
    logs_.push_back(floored_log(t, floor_ratio_));
  }
}

double estimate_fluence(const Pattern& p, const Pattern& t) {
  check_shapes(p, t);
  const auto pd = p.data(), td = t.data();
  double sum_p = 0.0, sum_t = 0.0;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    if (!p.mask().valid(i) || !t.mask().valid(i)) continue;
    sum_p += pd[i];
    sum_t += td[i];
  }
  if (!(sum_t > 0.0)) fail(ErrorKind::degenerate, "template has zero intensity on the shared unmasked pixels");
  return sum_p / sum_t;
}

double log_likelihood(const Pattern& p, const Pattern& t, double phi, double floor_ratio) {
  check_shapes(p, t);
  const auto logs = floored_log(t, floor_ratio);
  const auto pd = p.data(), td = t.data();
  double sum_p = 0.0, sum_t = 0.0, sum_p_log_t = 0.0;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    if (!p.mask().valid(i) || !t.mask().valid(i)) continue;
    sum_p += pd[i];
    sum_t += td[i];
    sum_p_log_t += pd[i] * logs[i];
  }
  return likelihood_from_sums(sum_p, sum_t, sum_p_log_t, phi);
}

MatchReport ll_classify(const LlModel& model, const Pattern& p) {
  if (model.size() == 0) fail(ErrorKind::contract, "empty model");
  check_shapes(p, model.templates().frames.front());
  const auto pd = p.data();
  const auto pmask = p.mask().bits();

  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  double best_phi = 0.0;
  for (std::size_t k = 0; k < model.size(); ++k) {
    const Pattern& t = model.templates().frames[k];
    const auto td = t.data();
    const auto tmask = t.mask().bits();
    const auto& logs = model.log_template(k);
    double sum_p = 0.0, sum_t = 0.0, sum_p_log_t = 0.0;
    for (std::size_t i = 0; i < pd.size(); ++i) {
      if (!(pmask[i] & tmask[i])) continue;
      const double v = pd[i];
      sum_p += v;
      sum_t += td[i];
      sum_p_log_t += v * logs[i];
    }
    if (!(sum_t > 0.0))
      fail(ErrorKind::degenerate, "template " + std::to_string(k) + " has zero intensity on the frame's unmasked pixels");
    const double phi = sum_p / sum_t;
    const double score = likelihood_from_sums(sum_p, sum_t, sum_p_log_t, phi);
    if (score > best_score) {
      best_score = score;
      best = k;
      best_phi = phi;
    }
  }
  MatchReport r;
  r.method = "ll";
  r.matched_id = static_cast<int>(best);
  r.matched_label = std::string(to_string(model.templates().frames[best].meta().label));
  r.score = best_score;
  r.phi_hat = best_phi;
  return r;
}

}  // namespace fxisort

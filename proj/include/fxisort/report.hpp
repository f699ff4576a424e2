#pragma once

#include <cstddef>
#include <limits>
#include <string>

namespace fxisort {

/// Classification outcome for one frame.
struct MatchReport {
  std::size_t frame_id = 0;
  std::string method;
  int matched_id = -1;
  std::string matched_label = "unknown";  // "rejected" once thresholded out
  double score = 0.0;                     // EI distance or LL log-likelihood
  double phi_hat = 0.0;
  double scale_hat = 1.0;
  double diameter_hat = std::numeric_limits<double>::quiet_NaN();  // nm
  double c_error = 0.0;
  bool accepted = true;
  std::string error;  // non-empty when the frame could not be classified
};

}  // namespace fxisort

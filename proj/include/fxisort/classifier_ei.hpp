#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fxisort/core.hpp"
#include "fxisort/report.hpp"

namespace fxisort {

struct EiOptions {
  int rank = 0;                  // retained eigenpairs; 0 keeps the numerical rank
  bool normalize = true;         // L2-normalize frames over active pixels
  double rank_tolerance = 1e-12; // relative to the largest eigenvalue
};

/// Mean-shifted training matrix and the eigendecomposition of its Gram matrix.
struct GramDecomposition {
  std::vector<std::size_t> active;  // pixel indices unmasked in every frame
  Eigen::VectorXd mean;             // M_pix
  Eigen::MatrixXd shifted;          // A, M_pix x M_data
  Eigen::MatrixXd gram;             // A^T A
  Eigen::VectorXd eigenvalues;      // descending, negatives clipped to 0
  Eigen::MatrixXd eigenvectors;     // V, columns match eigenvalues
};

GramDecomposition gram_decomposition(const Dataset& train, bool normalize);

/// Trained eigen-image state. Immutable after training.
struct EiModel {
  int rows = 0;
  int cols = 0;
  bool normalize = true;
  double rank_tolerance = 1e-12;
  std::vector<std::size_t> active;
  Eigen::VectorXd mean;          // M_pix
  Eigen::MatrixXd basis;         // U, M_pix x m, orthonormal columns
  Eigen::MatrixXd projections;   // Omega = U^T A, m x M_data
  Eigen::VectorXd eigenvalues;   // m, descending
  bool truncated = false;        // requested rank exceeded the numerical rank
  Dataset templates;             // raw training frames, for labels and error metrics

  int rank() const { return static_cast<int>(basis.cols()); }
  std::size_t size() const { return templates.count(); }

  /// Active-pixel vector of a frame, normalized when the model normalizes.
  Eigen::VectorXd frame_vector(const Pattern& p) const;

  /// W = U^T (p' - mean).
  Eigen::VectorXd project(const Pattern& p) const;
};

EiModel ei_train(const Dataset& train, const EiOptions& options = {});

/// Nearest training projection to W in L2; ties go to the smallest index.
MatchReport ei_classify(const EiModel& model, const Pattern& p);

void save_ei_model(const EiModel& model, const std::filesystem::path& dir);
EiModel load_ei_model(const std::filesystem::path& dir);

}  // namespace fxisort

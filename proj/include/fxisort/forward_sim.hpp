#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "fxisort/core.hpp"
#include "fxisort/rng.hpp"

namespace fxisort {

/// Uniform-density particle. Diameter is the circumscribed diameter for an
/// icosahedron and the major-axis length for a spheroid (nm).
struct ParticleSpec {
  ShapeLabel shape = ShapeLabel::icosahedron;
  double diameter = 180.0;
  double aspect_ratio = 1.0;
  Quaternion orientation;

  void validate() const;
};

struct BeamSpec {
  double wavelength = 1e-9;       // m
  double pulse_energy = 1e-3;     // J
  double focus_diameter = 10e-6;  // m
  double nominal_fluence = 1.0;

  void validate() const;
  /// Photon flux per area relative to the reference beam (1 mJ into 10 um).
  double relative_flux() const;
};

struct FluenceDistribution {
  enum class Kind { constant, uniform };
  Kind kind = Kind::constant;
  double lo = 1.0;
  double hi = 1.0;

  static FluenceDistribution constant(double value) { return {Kind::constant, value, value}; }
  static FluenceDistribution uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }

  void validate() const;
  double sample(Rng& rng) const;
};

struct ForwardModelConfig {
  int voxels = 64;               // real-space samples across the sampling box
  double box = 256.0;            // sampling box side, nm
  int supersample = 2;           // sub-rays per sample along each axis
  double photon_budget = 8.5e4;  // reference particle, full unmasked detector
  double reference_diameter = 180.0;

  void validate() const;
  double spacing() const { return box / voxels; }
};

/// Far-field diffraction under the flat-Ewald approximation. The projected
/// density of the particle along the beam is sampled on a square grid and
/// Fourier transformed exactly at the detector's spatial frequencies.
class ForwardModel {
 public:
  explicit ForwardModel(DetectorGeometry geometry = {}, BeamSpec beam = {}, ForwardModelConfig config = {});

  const DetectorGeometry& geometry() const { return geometry_; }
  const BeamSpec& beam() const { return beam_; }
  const ForwardModelConfig& config() const { return config_; }

  /// Expected photon counts over the full detector, masked disc zeroed.
  Pattern diffract(const ParticleSpec& spec) const;

  /// Same values as crop_center(diffract(spec), side) without computing the rest.
  Pattern diffract_center(const ParticleSpec& spec, int side) const;

  /// Intensity scale C applied to |F|^2 (F in nm^3).
  double scale() const { return scale_; }

  /// Unscaled |F|^2 of the projected density at the given frequencies (1/nm).
  std::vector<double> form_factor_squared(const ParticleSpec& spec, std::span<const double> k_rows,
                                          std::span<const double> k_cols) const;

 private:
  Pattern render(const ParticleSpec& spec, int side) const;

  DetectorGeometry geometry_;
  BeamSpec beam_;
  ForwardModelConfig config_;
  double scale_ = 1.0;
};

Pattern diffract(const ParticleSpec& spec, const BeamSpec& beam, const DetectorGeometry& geom,
                 const ForwardModelConfig& config = {});

/// Each unmasked pixel ~ Poisson(fluence * value); masked pixels stay 0.
Pattern apply_poisson(const Pattern& p, double fluence, Rng& rng);

/// Poisson noise on a binned frame whose pixels average `multiplicity`
/// detector pixels: the value becomes Poisson(n * fluence * value) / n, which
/// is the exact law of averaging n independent detector counts.
Pattern apply_poisson(const Pattern& p, double fluence, std::span<const int> multiplicity, Rng& rng);

/// Uniform over SO(3); normalized 4D Gaussian with w >= 0.
Quaternion random_orientation(Rng& rng);

/// Icosahedron with circumradius 1: 12 vertices.
std::vector<Vec3> icosahedron_vertices();

/// The 60 proper rotations mapping the icosahedron onto itself.
std::vector<Mat3> icosahedral_rotations();

/// Chord length of the particle along the beam axis at lateral offset (x, y) nm.
double projected_thickness(const ParticleSpec& spec, double x, double y);

enum class Recipe { T, D, P, F, S, X };

std::string_view to_string(Recipe recipe);
Recipe parse_recipe(std::string_view text);

struct DatasetSizes {
  int templates = 290;
  int homogeneous = 1000;
  int sizes = 2000;
  int shape_icosahedra = 1000;
  int shape_spheroids = 200;
};

struct DatasetOptions {
  DetectorGeometry geometry;
  BeamSpec beam;
  ForwardModelConfig model;
  Preprocess preprocess{480, 4};
  DatasetSizes sizes;
  double template_diameter = 180.0;
  double diameter_lo = 150.0;
  double diameter_hi = 210.0;
  double aspect_lo = 0.6;
  double aspect_hi = 1.0;
  FluenceDistribution fluence = FluenceDistribution::uniform(0.01, 1.1);
  // Minimum pairwise relative distance ||a - b|| / max(||a||, ||b||) within T.
  double separation = 0.005;
  int max_candidates = 20000;
  // Appends one sphere of template_diameter to T (shape-discrimination training).
  bool add_sphere_template = false;
  int workers = 1;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

Dataset build_dataset(Recipe recipe, std::uint64_t seed, const DatasetOptions& options = {});

/// P or F from an already built D of the same seed; identical to building
/// the recipe directly, without re-rendering.
Dataset noisy_from_clean(const Dataset& clean, Recipe recipe, std::uint64_t seed, const DatasetOptions& options = {});

}  // namespace fxisort

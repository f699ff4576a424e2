#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fxisort/errors.hpp"

namespace fxisort {

enum class ShapeLabel { icosahedron, spheroid, sphere, unknown };

std::string_view to_string(ShapeLabel label);
ShapeLabel parse_shape_label(std::string_view text);

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

/// Unit quaternion (w, x, y, z) describing a particle rotation.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const;
  Quaternion normalized() const;
  Mat3 to_matrix() const;
  static Quaternion from_matrix(const Mat3& m);
};

Vec3 rotate(const Mat3& m, const Vec3& v);

/// Detector and beam-axis geometry. Lengths in meters, pixel counts as ints.
struct DetectorGeometry {
  int n_fast = 960;
  int n_slow = 960;
  double pixel_pitch = 75e-6;
  double distance = 0.74;
  double wavelength = 1e-9;
  double missing_diameter = 80.0;

  void validate() const;

  /// Spatial-frequency step per detector pixel in 1/m (flat-Ewald mapping).
  double frequency_step() const { return pixel_pitch / (wavelength * distance); }

  bool operator==(const DetectorGeometry&) const = default;
};

/// Per-pixel validity, row-major; true means the pixel participates.
class PixelMask {
 public:
  PixelMask() = default;
  PixelMask(int rows, int cols, bool valid = true);
  PixelMask(int rows, int cols, std::vector<std::uint8_t> bits);

  /// Full-resolution mask: false on the centered missing-data disc.
  static PixelMask missing_disc(const DetectorGeometry& geom);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return bits_.size(); }

  bool valid(std::size_t i) const { return bits_[i] != 0; }
  bool valid(int r, int c) const { return bits_[index(r, c)] != 0; }
  void set(int r, int c, bool v) { bits_[index(r, c)] = v ? 1 : 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

  std::size_t count_valid() const;
  std::span<const std::uint8_t> bits() const { return bits_; }

  PixelMask operator&(const PixelMask& other) const;
  bool operator==(const PixelMask&) const = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct FrameMeta {
  ShapeLabel label = ShapeLabel::unknown;
  std::optional<Quaternion> orientation;
  std::optional<double> true_fluence;
  std::optional<double> true_diameter;  // nm
  std::optional<double> aspect_ratio;
  // Index of the training frame this frame was derived from (benchmark frames).
  std::optional<int> source_id;
};

/// One detector frame. Values are finite and non-negative; masked pixels hold 0.
class Pattern {
 public:
  Pattern() = default;
  Pattern(int rows, int cols, std::vector<float> data, PixelMask mask, FrameMeta meta = {});
  Pattern(int rows, int cols, std::vector<float> data);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  std::span<const float> data() const { return data_; }
  float operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
                 static_cast<std::size_t>(c)];
  }
  const PixelMask& mask() const { return mask_; }
  const FrameMeta& meta() const { return meta_; }
  FrameMeta& meta() { return meta_; }

  bool same_shape(const Pattern& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  /// True when every value is a non-negative integer (photon counts).
  bool integral() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<float> data_;
  PixelMask mask_;
  FrameMeta meta_;
};

enum class Dtype { f32, u32 };

std::string_view to_string(Dtype dtype);
Dtype parse_dtype(std::string_view text);

/// Crop and binning applied to every frame of a dataset, in that order.
struct Preprocess {
  int crop = 0;  // 0 keeps the full frame
  int bin = 1;
  bool operator==(const Preprocess&) const = default;
};

/// Ordered frames sharing one geometry and one preprocessing.
struct Dataset {
  DetectorGeometry geometry;
  Preprocess preprocess;
  std::string recipe;
  std::uint64_t seed = 0;
  Dtype dtype = Dtype::f32;
  std::vector<Pattern> frames;

  std::size_t count() const { return frames.size(); }
  int rows() const;
  int cols() const;

  /// Checks M_data >= 1 and a common frame shape.
  void validate() const;
};

Pattern crop_center(const Pattern& p, int side);

/// Block mean over unmasked members; fully masked blocks become masked zeros.
Pattern bin(const Pattern& p, int factor);

/// Sum over unmasked pixels, accumulated in double.
double masked_sum(const Pattern& p);

/// Full-resolution missing-data mask after the given crop and binning.
PixelMask preprocessed_mask(const DetectorGeometry& geom, const Preprocess& pre);

/// Number of unmasked full-resolution pixels contributing to each output pixel.
std::vector<int> preprocessed_multiplicity(const DetectorGeometry& geom, const Preprocess& pre);

Pattern preprocess(const Pattern& p, const Preprocess& pre);

}  // namespace fxisort

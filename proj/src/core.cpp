#include "fxisort/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fxisort {

std::string_view to_string(ShapeLabel label) {
  switch (label) {
    case ShapeLabel::icosahedron: return "icosahedron";
    case ShapeLabel::spheroid: return "spheroid";
    case ShapeLabel::sphere: return "sphere";
    case ShapeLabel::unknown: return "unknown";
  }
  return "unknown";
}

ShapeLabel parse_shape_label(std::string_view text) {
  if (text == "icosahedron") return ShapeLabel::icosahedron;
  if (text == "spheroid") return ShapeLabel::spheroid;
  if (text == "sphere") return ShapeLabel::sphere;
  if (text == "unknown") return ShapeLabel::unknown;
  fail(ErrorKind::schema, "unknown shape label '" + std::string(text) + "'");
}

std::string_view to_string(Dtype dtype) { return dtype == Dtype::f32 ? "f32" : "u32"; }

Dtype parse_dtype(std::string_view text) {
  if (text == "f32") return Dtype::f32;
  if (text == "u32") return Dtype::u32;
  fail(ErrorKind::schema, "unknown dtype '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Quaternion

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (!(n > 0.0) || !std::isfinite(n)) fail(ErrorKind::domain, "cannot normalize a zero quaternion");
  return {w / n, x / n, y / n, z / n};
}

Mat3 Quaternion::to_matrix() const {
  const Quaternion q = normalized();
  const double ww = q.w * q.w, xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
  const double wx = q.w * q.x, wy = q.w * q.y, wz = q.w * q.z;
  const double xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
  return {{{ww + xx - yy - zz, 2.0 * (xy - wz), 2.0 * (xz + wy)},
           {2.0 * (xy + wz), ww - xx + yy - zz, 2.0 * (yz - wx)},
           {2.0 * (xz - wy), 2.0 * (yz + wx), ww - xx - yy + zz}}};
}

Quaternion Quaternion::from_matrix(const Mat3& m) {
  // Shepperd's method: pick the largest diagonal combination for stability.
  const double trace = m[0][0] + m[1][1] + m[2][2];
  Quaternion q;
  if (trace > 0.0) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    q = {0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s};
  } else if (m[0][0] > m[1][1] && m[0][0] > m[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]);
    q = {(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s};
  } else if (m[1][1] > m[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]);
    q = {(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]);
    q = {(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s};
  }
  return q.normalized();
}

Vec3 rotate(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

// ---------------------------------------------------------------------------
// DetectorGeometry

void DetectorGeometry::validate() const {
  if (n_fast <= 0 || n_slow <= 0) fail(ErrorKind::configuration, "detector must have a positive pixel count");
  if (!(pixel_pitch > 0.0) || !(distance > 0.0) || !(wavelength > 0.0))
    fail(ErrorKind::configuration, "pixel pitch, distance and wavelength must be positive");
  if (!(missing_diameter >= 0.0) || missing_diameter >= std::min(n_fast, n_slow))
    fail(ErrorKind::configuration, "missing-data diameter must be smaller than the detector");
}

// ---------------------------------------------------------------------------
// PixelMask

PixelMask::PixelMask(int rows, int cols, bool valid)
    : rows_(rows), cols_(cols),
      bits_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), valid ? 1 : 0) {
  if (rows < 0 || cols < 0) fail(ErrorKind::dimension, "negative mask shape");
}

PixelMask::PixelMask(int rows, int cols, std::vector<std::uint8_t> bits)
    : rows_(rows), cols_(cols), bits_(std::move(bits)) {
  if (bits_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    fail(ErrorKind::dimension, "mask size does not match its shape");
  for (auto& b : bits_) b = b ? 1 : 0;
}

PixelMask PixelMask::missing_disc(const DetectorGeometry& geom) {
  geom.validate();
  PixelMask mask(geom.n_slow, geom.n_fast, true);
  const double cr = 0.5 * (geom.n_slow - 1);
  const double cc = 0.5 * (geom.n_fast - 1);
  const double r2 = 0.25 * geom.missing_diameter * geom.missing_diameter;
  for (int r = 0; r < geom.n_slow; ++r) {
    for (int c = 0; c < geom.n_fast; ++c) {
      const double dr = r - cr, dc = c - cc;
      if (dr * dr + dc * dc < r2) mask.set(r, c, false);
    }
  }
  return mask;
}

std::size_t PixelMask::count_valid() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

PixelMask PixelMask::operator&(const PixelMask& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) fail(ErrorKind::dimension, "mask shapes differ");
  PixelMask out(rows_, cols_, false);
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] & other.bits_[i];
  return out;
}

// ---------------------------------------------------------------------------
// Pattern

Pattern::Pattern(int rows, int cols, std::vector<float> data, PixelMask mask, FrameMeta meta)
    : rows_(rows), cols_(cols), data_(std::move(data)), mask_(std::move(mask)), meta_(std::move(meta)) {
  if (rows <= 0 || cols <= 0) fail(ErrorKind::dimension, "pattern shape must be positive");
  if (data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    fail(ErrorKind::dimension, "pattern data size does not match its shape");
  if (mask_.rows() != rows || mask_.cols() != cols)
    fail(ErrorKind::dimension, "pattern mask shape does not match the data");
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i]) || data_[i] < 0.0f)
      fail(ErrorKind::domain, "pattern values must be finite and non-negative");
    if (!mask_.valid(i)) data_[i] = 0.0f;
  }
}

Pattern::Pattern(int rows, int cols, std::vector<float> data)
    : Pattern(rows, cols, std::move(data), PixelMask(rows, cols, true)) {}

bool Pattern::integral() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::floor(v) == v; });
}

// ---------------------------------------------------------------------------
// Dataset

int Dataset::rows() const { return frames.empty() ? 0 : frames.front().rows(); }
int Dataset::cols() const { return frames.empty() ? 0 : frames.front().cols(); }

void Dataset::validate() const {
  if (frames.empty()) fail(ErrorKind::schema, "dataset must contain at least one frame");
  for (const auto& f : frames)
    if (!f.same_shape(frames.front())) fail(ErrorKind::schema, "dataset frames differ in shape");
  if (dtype == Dtype::u32)
    for (const auto& f : frames)
      if (!f.integral()) fail(ErrorKind::schema, "u32 dataset holds non-integral values");
}

// ---------------------------------------------------------------------------
// Operations

Pattern crop_center(const Pattern& p, int side) {
  if (side <= 0 || side > std::min(p.rows(), p.cols()))
    fail(ErrorKind::dimension, "crop side " + std::to_string(side) + " exceeds the frame");
  if (side % 2 != 0 || (p.rows() - side) % 2 != 0 || (p.cols() - side) % 2 != 0)
    fail(ErrorKind::dimension, "crop side must be even and leave an even margin");
  const int r0 = (p.rows() - side) / 2;
  const int c0 = (p.cols() - side) / 2;
  std::vector<float> data(static_cast<std::size_t>(side) * side);
  std::vector<std::uint8_t> bits(data.size());
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const std::size_t o = static_cast<std::size_t>(r) * side + c;
      data[o] = p(r0 + r, c0 + c);
      bits[o] = p.mask().valid(r0 + r, c0 + c) ? 1 : 0;
    }
  }
  return Pattern(side, side, std::move(data), PixelMask(side, side, std::move(bits)), p.meta());
}

Pattern bin(const Pattern& p, int factor) {
  if (factor <= 0 || p.rows() % factor != 0 || p.cols() % factor != 0)
    fail(ErrorKind::dimension, "bin factor " + std::to_string(factor) + " does not divide the frame");
  if (factor == 1) return p;
  const int rows = p.rows() / factor;
  const int cols = p.cols() / factor;
  std::vector<float> data(static_cast<std::size_t>(rows) * cols, 0.0f);
  std::vector<std::uint8_t> bits(data.size(), 0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double sum = 0.0;
      int n = 0;
      for (int dr = 0; dr < factor; ++dr) {
        for (int dc = 0; dc < factor; ++dc) {
          const int rr = r * factor + dr, cc = c * factor + dc;
          if (!p.mask().valid(rr, cc)) continue;
          sum += p(rr, cc);
          ++n;
        }
      }
      const std::size_t o = static_cast<std::size_t>(r) * cols + c;
      if (n > 0) {
        data[o] = static_cast<float>(sum / n);
        bits[o] = 1;
      }
    }
  }
  return Pattern(rows, cols, std::move(data), PixelMask(rows, cols, std::move(bits)), p.meta());
}

double masked_sum(const Pattern& p) {
  double sum = 0.0;
  const auto data = p.data();
  for (std::size_t i = 0; i < data.size(); ++i)
    if (p.mask().valid(i)) sum += data[i];
  return sum;
}

namespace {

void check_preprocess(const DetectorGeometry& geom, const Preprocess& pre) {
  const int side = pre.crop == 0 ? std::min(geom.n_fast, geom.n_slow) : pre.crop;
  if (pre.crop == 0 && geom.n_fast != geom.n_slow && pre.bin != 1)
    fail(ErrorKind::dimension, "binning a non-square frame requires an explicit crop");
  if (pre.bin <= 0 || side % pre.bin != 0) fail(ErrorKind::dimension, "bin factor does not divide the crop");
}

}  // namespace

PixelMask preprocessed_mask(const DetectorGeometry& geom, const Preprocess& pre) {
  check_preprocess(geom, pre);
  const auto mask = PixelMask::missing_disc(geom);
  Pattern frame(mask.rows(), mask.cols(), std::vector<float>(mask.size(), 1.0f), mask);
  return preprocess(frame, pre).mask();
}

std::vector<int> preprocessed_multiplicity(const DetectorGeometry& geom, const Preprocess& pre) {
  check_preprocess(geom, pre);
  auto mask = PixelMask::missing_disc(geom);
  Pattern frame(mask.rows(), mask.cols(), std::vector<float>(mask.size(), 1.0f), mask);
  if (pre.crop != 0) frame = crop_center(frame, pre.crop);
  const int b = pre.bin;
  const int rows = frame.rows() / b, cols = frame.cols() / b;
  std::vector<int> counts(static_cast<std::size_t>(rows) * cols, 0);
  for (int r = 0; r < frame.rows(); ++r)
    for (int c = 0; c < frame.cols(); ++c)
      if (frame.mask().valid(r, c)) ++counts[static_cast<std::size_t>(r / b) * cols + c / b];
  return counts;
}

Pattern preprocess(const Pattern& p, const Preprocess& pre) {
  Pattern out = pre.crop != 0 ? crop_center(p, pre.crop) : p;
  return bin(out, pre.bin);
}

}  // namespace fxisort

#include "fxisort/forward_sim.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "fxisort/parallel.hpp"

namespace fxisort {

// ---------------------------------------------------------------------------
// Specs

void ParticleSpec::validate() const {
  if (!(diameter > 0.0) || !std::isfinite(diameter)) fail(ErrorKind::domain, "particle diameter must be positive");
  if (!(aspect_ratio > 0.0) || aspect_ratio > 1.0) fail(ErrorKind::domain, "aspect ratio must lie in (0, 1]");
  if (shape == ShapeLabel::unknown) fail(ErrorKind::domain, "particle shape must be known");
  if (std::fabs(orientation.norm() - 1.0) > 1e-12) fail(ErrorKind::domain, "orientation must be a unit quaternion");
}

void BeamSpec::validate() const {
  if (!(wavelength > 0.0) || !(pulse_energy > 0.0) || !(focus_diameter > 0.0) || !(nominal_fluence > 0.0))
    fail(ErrorKind::configuration, "beam parameters must be positive");
}

double BeamSpec::relative_flux() const {
  const double focus_ratio = 10e-6 / focus_diameter;
  return nominal_fluence * (pulse_energy / 1e-3) * focus_ratio * focus_ratio;
}

void FluenceDistribution::validate() const {
  if (kind == Kind::constant) {
    if (lo != hi || !(lo >= 0.0)) fail(ErrorKind::configuration, "constant fluence needs lo == hi >= 0");
  } else if (!(lo > 0.0) || !(hi > lo)) {
    fail(ErrorKind::configuration, "uniform fluence needs 0 < lo < hi");
  }
}

double FluenceDistribution::sample(Rng& rng) const {
  return kind == Kind::constant ? lo : rng.uniform(lo, hi);
}

void ForwardModelConfig::validate() const {
  if (voxels < 8) fail(ErrorKind::configuration, "at least 8 samples across the sampling box are required");
  if (!(box > 0.0)) fail(ErrorKind::configuration, "sampling box must be positive");
  if (supersample < 1) fail(ErrorKind::configuration, "supersampling factor must be >= 1");
  if (!(photon_budget > 0.0)) fail(ErrorKind::configuration, "photon budget must be positive");
  if (!(reference_diameter > 0.0) || reference_diameter > box)
    fail(ErrorKind::configuration, "reference particle must fit the sampling box");
}

// ---------------------------------------------------------------------------
// Geometry

std::vector<Vec3> icosahedron_vertices() {
  const double phi = std::numbers::phi;
  const double r = std::sqrt(1.0 + phi * phi);
  std::vector<Vec3> v;
  for (double a : {-1.0, 1.0}) {
    for (double b : {-phi, phi}) {
      v.push_back({0.0, a / r, b / r});
      v.push_back({a / r, b / r, 0.0});
      v.push_back({b / r, 0.0, a / r});
    }
  }
  return v;
}

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalize(const Vec3& a) {
  const double n = std::sqrt(dot(a, a));
  return {a[0] / n, a[1] / n, a[2] / n};
}

struct HalfSpace {
  Vec3 normal;
  double offset;  // in units of the circumradius
};

// Faces of the unit-circumradius icosahedron as half-spaces n . r <= offset.
const std::vector<HalfSpace>& icosahedron_faces() {
  static const std::vector<HalfSpace> faces = [] {
    const auto v = icosahedron_vertices();
    double edge2 = std::numeric_limits<double>::max();
    for (std::size_t i = 1; i < v.size(); ++i) {
      const Vec3 d{v[i][0] - v[0][0], v[i][1] - v[0][1], v[i][2] - v[0][2]};
      edge2 = std::min(edge2, dot(d, d));
    }
    auto adjacent = [&](std::size_t a, std::size_t b) {
      const Vec3 d{v[a][0] - v[b][0], v[a][1] - v[b][1], v[a][2] - v[b][2]};
      return std::fabs(dot(d, d) - edge2) < 1e-9;
    };
    std::vector<HalfSpace> out;
    for (std::size_t a = 0; a < v.size(); ++a)
      for (std::size_t b = a + 1; b < v.size(); ++b)
        for (std::size_t c = b + 1; c < v.size(); ++c) {
          if (!adjacent(a, b) || !adjacent(b, c) || !adjacent(a, c)) continue;
          const Vec3 centroid{(v[a][0] + v[b][0] + v[c][0]) / 3.0, (v[a][1] + v[b][1] + v[c][1]) / 3.0,
                              (v[a][2] + v[b][2] + v[c][2]) / 3.0};
          const Vec3 n = normalize(centroid);
          out.push_back({n, dot(n, v[a])});
        }
    return out;
  }();
  return faces;
}

Mat3 frame_from(const Vec3& a, const Vec3& b) {
  const Vec3 e1 = normalize(a);
  const double p = dot(b, e1);
  const Vec3 e2 = normalize({b[0] - p * e1[0], b[1] - p * e1[1], b[2] - p * e1[2]});
  const Vec3 e3 = cross(e1, e2);
  // Columns e1, e2, e3.
  return {{{e1[0], e2[0], e3[0]}, {e1[1], e2[1], e3[1]}, {e1[2], e2[2], e3[2]}}};
}

Mat3 multiply_transpose(const Mat3& a, const Mat3& b) {  // a * b^T
  Mat3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) out[i][j] += a[i][k] * b[j][k];
  return out;
}

}  // namespace

std::vector<Mat3> icosahedral_rotations() {
  const auto v = icosahedron_vertices();
  std::size_t neighbor = 1;
  double best = -2.0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (dot(v[0], v[i]) > best) {
      best = dot(v[0], v[i]);
      neighbor = i;
    }
  }
  const Mat3 source = frame_from(v[0], v[neighbor]);
  std::vector<Mat3> rotations;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (i == j || std::fabs(dot(v[i], v[j]) - best) > 1e-9) continue;
      rotations.push_back(multiply_transpose(frame_from(v[i], v[j]), source));
    }
  return rotations;
}

double projected_thickness(const ParticleSpec& spec, double x, double y) {
  const Mat3 rot = spec.orientation.to_matrix();
  const double radius = 0.5 * spec.diameter;
  if (spec.shape == ShapeLabel::icosahedron) {
    double zmin = -std::numeric_limits<double>::infinity();
    double zmax = std::numeric_limits<double>::infinity();
    for (const auto& face : icosahedron_faces()) {
      const Vec3 n = rotate(rot, face.normal);
      const double rhs = face.offset * radius - n[0] * x - n[1] * y;
      if (std::fabs(n[2]) < 1e-14) {
        if (rhs < 0.0) return 0.0;
      } else if (n[2] > 0.0) {
        zmax = std::min(zmax, rhs / n[2]);
      } else {
        zmin = std::max(zmin, rhs / n[2]);
      }
    }
    return std::max(0.0, zmax - zmin);
  }
  // Spheroid (sphere when aspect is 1): equatorial semi-axis d/2, body z axis
  // scaled by the aspect ratio. Lab quadric M = R diag(1/a^2, 1/a^2, 1/c^2) R^T.
  const double a = radius;
  const double c = spec.shape == ShapeLabel::sphere ? radius : radius * spec.aspect_ratio;
  const double inv[3] = {1.0 / (a * a), 1.0 / (a * a), 1.0 / (c * c)};
  double m[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] = rot[i][0] * inv[0] * rot[j][0] + rot[i][1] * inv[1] * rot[j][1] + rot[i][2] * inv[2] * rot[j][2];
  const double qa = m[2][2];
  const double qb = m[0][2] * x + m[1][2] * y;
  const double qc = m[0][0] * x * x + 2.0 * m[0][1] * x * y + m[1][1] * y * y - 1.0;
  const double disc = qb * qb - qa * qc;
  return disc > 0.0 ? 2.0 * std::sqrt(disc) / qa : 0.0;
}

// ---------------------------------------------------------------------------
// ForwardModel

namespace {

double sinc(double x) { return std::fabs(x) < 1e-12 ? 1.0 : std::sin(x) / x; }

std::vector<double> frequencies(int first, int count, int total, double step) {
  std::vector<double> k(static_cast<std::size_t>(count));
  const double center = 0.5 * (total - 1);
  for (int i = 0; i < count; ++i) k[static_cast<std::size_t>(i)] = (first + i - center) * step;
  return k;
}

}  // namespace

ForwardModel::ForwardModel(DetectorGeometry geometry, BeamSpec beam, ForwardModelConfig config)
    : geometry_(geometry), beam_(beam), config_(config) {
  geometry_.validate();
  beam_.validate();
  config_.validate();
  if (std::fabs(beam_.wavelength - geometry_.wavelength) > 1e-9 * geometry_.wavelength)
    fail(ErrorKind::configuration, "beam and detector wavelengths differ");

  // Calibrate C on the reference icosahedron over the whole unmasked detector.
  ParticleSpec reference;
  reference.diameter = config_.reference_diameter;
  const double step = geometry_.frequency_step() * 1e-9;
  const auto kr = frequencies(0, geometry_.n_slow, geometry_.n_slow, step);
  const auto kc = frequencies(0, geometry_.n_fast, geometry_.n_fast, step);
  const auto f2 = form_factor_squared(reference, kr, kc);
  const auto mask = PixelMask::missing_disc(geometry_);
  double total = 0.0;
  for (std::size_t i = 0; i < f2.size(); ++i)
    if (mask.valid(i)) total += f2[i];
  if (!(total > 0.0)) fail(ErrorKind::configuration, "reference particle scatters no photons onto the detector");
  scale_ = config_.photon_budget / total;
}

std::vector<double> ForwardModel::form_factor_squared(const ParticleSpec& spec, std::span<const double> k_rows,
                                                      std::span<const double> k_cols) const {
  spec.validate();
  const double h = config_.spacing();
  if (spec.diameter > config_.box)
    fail(ErrorKind::resolution, "particle diameter " + std::to_string(spec.diameter) +
                                    " nm exceeds the sampling box of " + std::to_string(config_.box) +
                                    " nm; raise --box or the voxel count accordingly");
  const double radius = 0.5 * spec.diameter;
  const int n = 2 * static_cast<int>(std::ceil(radius / h + 1.0));

  // Projected density (thickness times sample area), averaged over sub-rays.
  const int sub = config_.supersample;
  Eigen::MatrixXd rho = Eigen::MatrixXd::Zero(n, n);
  const double center = 0.5 * (n - 1);
  const double reach2 = (radius + h) * (radius + h);
  for (int a = 0; a < n; ++a) {
    const double y0 = (a - center) * h;
    for (int b = 0; b < n; ++b) {
      const double x0 = (b - center) * h;
      if (x0 * x0 + y0 * y0 > reach2) continue;
      double acc = 0.0;
      for (int sa = 0; sa < sub; ++sa) {
        const double y = y0 + ((sa + 0.5) / sub - 0.5) * h;
        for (int sb = 0; sb < sub; ++sb) {
          const double x = x0 + ((sb + 0.5) / sub - 0.5) * h;
          acc += projected_thickness(spec, x, y);
        }
      }
      rho(a, b) = acc / (sub * sub) * h * h;
    }
  }

  // Every supported shape is centrosymmetric and the grid is symmetric about
  // the origin, so the transform is real: F = Cy rho Cx^T - Sy rho Sx^T.
  const auto nr = static_cast<Eigen::Index>(k_rows.size());
  const auto nc = static_cast<Eigen::Index>(k_cols.size());
  Eigen::MatrixXd cy(nr, n), sy(nr, n), cx(nc, n), sx(nc, n);
  const double two_pi = 2.0 * std::numbers::pi;
  for (Eigen::Index i = 0; i < nr; ++i)
    for (int j = 0; j < n; ++j) {
      const double t = two_pi * k_rows[static_cast<std::size_t>(i)] * (j - center) * h;
      cy(i, j) = std::cos(t);
      sy(i, j) = std::sin(t);
    }
  for (Eigen::Index i = 0; i < nc; ++i)
    for (int j = 0; j < n; ++j) {
      const double t = two_pi * k_cols[static_cast<std::size_t>(i)] * (j - center) * h;
      cx(i, j) = std::cos(t);
      sx(i, j) = std::sin(t);
    }
  const Eigen::MatrixXd g_cos = rho * cx.transpose();
  const Eigen::MatrixXd g_sin = rho * sx.transpose();
  Eigen::MatrixXd f = cy * g_cos;
  f.noalias() -= sy * g_sin;

  // Undo the sample-area averaging (box filter) of the projected density.
  std::vector<double> out(static_cast<std::size_t>(nr * nc));
  for (Eigen::Index i = 0; i < nr; ++i) {
    const double wr = sinc(std::numbers::pi * k_rows[static_cast<std::size_t>(i)] * h);
    for (Eigen::Index j = 0; j < nc; ++j) {
      const double wc = sinc(std::numbers::pi * k_cols[static_cast<std::size_t>(j)] * h);
      const double value = f(i, j) / (wr * wc);
      out[static_cast<std::size_t>(i * nc + j)] = value * value;
    }
  }
  return out;
}

Pattern ForwardModel::render(const ParticleSpec& spec, int side) const {
  const bool full = side == 0;
  const int rows = full ? geometry_.n_slow : side;
  const int cols = full ? geometry_.n_fast : side;
  if (!full && (side > std::min(geometry_.n_slow, geometry_.n_fast) || side % 2 != 0 ||
                (geometry_.n_slow - side) % 2 != 0 || (geometry_.n_fast - side) % 2 != 0))
    fail(ErrorKind::dimension, "window side " + std::to_string(side) + " does not fit the detector centrally");
  const int r0 = (geometry_.n_slow - rows) / 2;
  const int c0 = (geometry_.n_fast - cols) / 2;
  const double step = geometry_.frequency_step() * 1e-9;
  const auto kr = frequencies(r0, rows, geometry_.n_slow, step);
  const auto kc = frequencies(c0, cols, geometry_.n_fast, step);
  const auto f2 = form_factor_squared(spec, kr, kc);

  const auto full_mask = PixelMask::missing_disc(geometry_);
  std::vector<std::uint8_t> bits(f2.size());
  std::vector<float> data(f2.size());
  const double c = scale_ * beam_.relative_flux();
  for (int r = 0; r < rows; ++r)
    for (int q = 0; q < cols; ++q) {
      const std::size_t o = static_cast<std::size_t>(r) * cols + q;
      bits[o] = full_mask.valid(r0 + r, c0 + q) ? 1 : 0;
      data[o] = bits[o] ? static_cast<float>(c * f2[o]) : 0.0f;
    }
  FrameMeta meta;
  meta.label = spec.shape;
  meta.orientation = spec.orientation;
  meta.true_diameter = spec.diameter;
  meta.aspect_ratio = spec.shape == ShapeLabel::spheroid ? spec.aspect_ratio : 1.0;
  return Pattern(rows, cols, std::move(data), PixelMask(rows, cols, std::move(bits)), std::move(meta));
}

Pattern ForwardModel::diffract(const ParticleSpec& spec) const { return render(spec, 0); }

Pattern ForwardModel::diffract_center(const ParticleSpec& spec, int side) const {
  if (side <= 0) fail(ErrorKind::dimension, "window side must be positive");
  return render(spec, side);
}

Pattern diffract(const ParticleSpec& spec, const BeamSpec& beam, const DetectorGeometry& geom,
                 const ForwardModelConfig& config) {
  return ForwardModel(geom, beam, config).diffract(spec);
}

// ---------------------------------------------------------------------------
// Noise and orientations

Pattern apply_poisson(const Pattern& p, double fluence, Rng& rng) {
  const std::vector<int> ones(p.size(), 1);
  return apply_poisson(p, fluence, ones, rng);
}

Pattern apply_poisson(const Pattern& p, double fluence, std::span<const int> multiplicity, Rng& rng) {
  if (!(fluence >= 0.0) || !std::isfinite(fluence)) fail(ErrorKind::domain, "fluence must be finite and >= 0");
  if (multiplicity.size() != p.size()) fail(ErrorKind::dimension, "multiplicity does not match the frame");
  std::vector<float> data(p.size(), 0.0f);
  const auto in = p.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!p.mask().valid(i)) continue;
    const int n = std::max(multiplicity[i], 1);
    const auto count = rng.poisson(fluence * n * static_cast<double>(in[i]));
    data[i] = static_cast<float>(static_cast<double>(count) / n);
  }
  FrameMeta meta = p.meta();
  meta.true_fluence = fluence;
  return Pattern(p.rows(), p.cols(), std::move(data), p.mask(), std::move(meta));
}

Quaternion random_orientation(Rng& rng) {
  Quaternion q;
  double n2 = 0.0;
  do {
    q = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    n2 = q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z;
  } while (n2 < 1e-12);
  q = q.normalized();
  if (q.w < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
  return q;
}

// ---------------------------------------------------------------------------
// Dataset recipes

std::string_view to_string(Recipe recipe) {
  switch (recipe) {
    case Recipe::T: return "T";
    case Recipe::D: return "D";
    case Recipe::P: return "P";
    case Recipe::F: return "F";
    case Recipe::S: return "S";
    case Recipe::X: return "X";
  }
  return "?";
}

Recipe parse_recipe(std::string_view text) {
  if (text == "T") return Recipe::T;
  if (text == "D") return Recipe::D;
  if (text == "P") return Recipe::P;
  if (text == "F") return Recipe::F;
  if (text == "S") return Recipe::S;
  if (text == "X") return Recipe::X;
  fail(ErrorKind::configuration, "unknown recipe '" + std::string(text) + "' (expected T, D, P, F, S or X)");
}

namespace {

class Builder {
 public:
  Builder(std::uint64_t seed, const DatasetOptions& options)
      : seed_(seed),
        options_(options),
        model_(options.geometry, options.beam, options.model),
        multiplicity_(preprocessed_multiplicity(options.geometry, options.preprocess)) {
    options_.fluence.validate();
    if (options_.separation < 0.0) fail(ErrorKind::configuration, "separation must be >= 0");
  }

  Dataset dataset(Recipe recipe, bool noisy) const {
    Dataset d;
    d.geometry = options_.geometry;
    d.preprocess = options_.preprocess;
    d.recipe = std::string(to_string(recipe));
    d.seed = seed_;
    d.dtype = noisy && options_.preprocess.bin == 1 ? Dtype::u32 : Dtype::f32;
    return d;
  }

  Pattern render(const ParticleSpec& spec) const {
    const auto& pre = options_.preprocess;
    Pattern frame = pre.crop != 0 ? model_.diffract_center(spec, pre.crop) : model_.diffract(spec);
    return bin(frame, pre.bin);
  }

  Pattern noisy(const Pattern& p, double fluence, std::string_view purpose, std::size_t index) const {
    Rng rng(seed_, purpose, index);
    return apply_poisson(p, fluence, multiplicity_, rng);
  }

  ParticleSpec icosahedron(const Quaternion& q, double diameter) const {
    ParticleSpec spec;
    spec.diameter = diameter;
    spec.orientation = q;
    return spec;
  }

  void progress(std::size_t done, std::size_t total) const {
    if (options_.progress) options_.progress(done, total);
  }

  template <typename Fn>
  std::vector<Pattern> generate(std::size_t count, Fn&& make) const {
    std::vector<Pattern> out(count);
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    parallel_for(count, options_.workers, [&](std::size_t i) {
      out[i] = make(i);
      const auto finished = ++done;
      if (options_.progress && (finished % 50 == 0 || finished == count)) {
        std::lock_guard lock(progress_mutex);
        progress(finished, count);
      }
    });
    return out;
  }

  Dataset templates() const {
    const auto target = static_cast<std::size_t>(options_.sizes.templates);
    Dataset d = dataset(Recipe::T, false);
    std::vector<double> norms;
    std::size_t candidate = 0;
    const auto batch = static_cast<std::size_t>(std::max(options_.workers, 1)) * 4;
    while (d.frames.size() < target) {
      if (candidate >= static_cast<std::size_t>(options_.max_candidates))
        fail(ErrorKind::configuration,
             "template rejection sampling admitted only " + std::to_string(d.frames.size()) + " of " +
                 std::to_string(target) + " frames within " + std::to_string(options_.max_candidates) +
                 " candidates; lower the separation threshold");
      const std::size_t first = candidate;
      auto frames = generate(batch, [&](std::size_t i) {
        Rng rng(seed_, "T-orientation", first + i);
        Pattern p = render(icosahedron(random_orientation(rng), options_.template_diameter));
        p.meta().true_fluence = 1.0;
        return p;
      });
      candidate += batch;
      // Admission is sequential in candidate order, so the result does not
      // depend on the batch size or worker count.
      for (auto& p : frames) {
        if (d.frames.size() >= target) break;
        const double norm = frame_norm(p);
        bool admitted = true;
        for (std::size_t j = 0; j < d.frames.size() && admitted; ++j) {
          const double threshold = options_.separation * std::max(norm, norms[j]);
          admitted = distance(p, d.frames[j]) >= threshold;
        }
        if (!admitted) continue;
        p.meta().source_id = static_cast<int>(d.frames.size());
        norms.push_back(norm);
        d.frames.push_back(std::move(p));
      }
      progress(d.frames.size(), target);
    }
    if (options_.add_sphere_template) {
      ParticleSpec sphere;
      sphere.shape = ShapeLabel::sphere;
      sphere.diameter = options_.template_diameter;
      Pattern p = render(sphere);
      p.meta().true_fluence = 1.0;
      p.meta().source_id = static_cast<int>(d.frames.size());
      d.frames.push_back(std::move(p));
    }
    return d;
  }

  Dataset homogeneous(Recipe recipe) const {
    const Dataset t = templates();
    const auto total = static_cast<std::size_t>(std::max(options_.sizes.homogeneous, 0));
    const std::size_t n_templates = std::min(total, t.frames.size());
    Dataset d = dataset(recipe, recipe != Recipe::D);
    auto extra = generate(total - n_templates, [&](std::size_t i) {
      Rng rng(seed_, "D-orientation", n_templates + i);
      Pattern p = render(icosahedron(random_orientation(rng), options_.template_diameter));
      p.meta().true_fluence = 1.0;
      return p;
    });
    std::vector<Pattern> frames(t.frames.begin(), t.frames.begin() + static_cast<std::ptrdiff_t>(n_templates));
    for (auto& p : extra) frames.push_back(std::move(p));
    d.frames = std::move(frames);
    return recipe == Recipe::D ? d : with_noise(d, recipe);
  }

  Dataset with_noise(const Dataset& clean, Recipe recipe) const {
    Dataset d = dataset(recipe, true);
    d.frames = generate(clean.count(), [&](std::size_t k) {
      if (recipe == Recipe::P) return noisy(clean.frames[k], 1.0, "P-noise", k);
      Rng rng(seed_, "F-fluence", k);
      const double phi = options_.fluence.sample(rng);
      return noisy(clean.frames[k], phi, "F-noise", k);
    });
    return d;
  }

  Pattern sized_icosahedron(std::size_t k) const {
    Rng rng(seed_, "S-frame", k);
    const double diameter = rng.uniform(options_.diameter_lo, options_.diameter_hi);
    const Quaternion q = random_orientation(rng);
    const double phi = options_.fluence.sample(rng);
    return noisy(render(icosahedron(q, diameter)), phi, "S-noise", k);
  }

  Dataset sizes() const {
    Dataset d = dataset(Recipe::S, true);
    d.frames = generate(static_cast<std::size_t>(options_.sizes.sizes), [&](std::size_t k) { return sized_icosahedron(k); });
    return d;
  }

  Dataset shapes() const {
    const auto pool = static_cast<std::size_t>(options_.sizes.sizes);
    const auto n_ico = static_cast<std::size_t>(options_.sizes.shape_icosahedra);
    if (n_ico > pool) fail(ErrorKind::configuration, "shape dataset draws more icosahedra than the size dataset holds");
    // Partial Fisher-Yates over the size-dataset indices.
    std::vector<std::size_t> indices(pool);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    Rng pick(seed_, "X-select", 0);
    for (std::size_t i = 0; i < n_ico; ++i) std::swap(indices[i], indices[i + pick.below(pool - i)]);
    indices.resize(n_ico);
    std::sort(indices.begin(), indices.end());

    const auto n_sph = static_cast<std::size_t>(options_.sizes.shape_spheroids);
    Dataset d = dataset(Recipe::X, true);
    d.frames = generate(n_ico + n_sph, [&](std::size_t k) {
      if (k < n_ico) return sized_icosahedron(indices[k]);
      const std::size_t j = k - n_ico;
      Rng rng(seed_, "X-spheroid", j);
      ParticleSpec spec;
      spec.shape = ShapeLabel::spheroid;
      spec.diameter = rng.uniform(options_.diameter_lo, options_.diameter_hi);
      spec.aspect_ratio = rng.uniform(options_.aspect_lo, options_.aspect_hi);
      spec.orientation = random_orientation(rng);
      const double phi = options_.fluence.sample(rng);
      return noisy(render(spec), phi, "X-spheroid-noise", j);
    });
    return d;
  }

 private:
  static double frame_norm(const Pattern& p) {
    double s = 0.0;
    for (float v : p.data()) s += static_cast<double>(v) * v;
    return std::sqrt(s);
  }

  static double distance(const Pattern& a, const Pattern& b) {
    double s = 0.0;
    const auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
      const double d = static_cast<double>(da[i]) - db[i];
      s += d * d;
    }
    return std::sqrt(s);
  }

  std::uint64_t seed_;
  DatasetOptions options_;
  ForwardModel model_;
  std::vector<int> multiplicity_;
};

}  // namespace

Dataset noisy_from_clean(const Dataset& clean, Recipe recipe, std::uint64_t seed, const DatasetOptions& options) {
  if (recipe != Recipe::P && recipe != Recipe::F) fail(ErrorKind::configuration, "only P and F derive from D");
  if (clean.recipe != "D" || clean.seed != seed) fail(ErrorKind::contract, "expected dataset D built with the same seed");
  return Builder(seed, options).with_noise(clean, recipe);
}

Dataset build_dataset(Recipe recipe, std::uint64_t seed, const DatasetOptions& options) {
  Builder builder(seed, options);
  switch (recipe) {
    case Recipe::T: return builder.templates();
    case Recipe::D:
    case Recipe::P:
    case Recipe::F: return builder.homogeneous(recipe);
    case Recipe::S: return builder.sizes();
    case Recipe::X: return builder.shapes();
  }
  fail(ErrorKind::configuration, "unknown recipe");
}

}  // namespace fxisort

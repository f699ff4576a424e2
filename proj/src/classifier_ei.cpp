#include "fxisort/classifier_ei.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "fxisort/npd.hpp"

namespace fxisort {

namespace fs = std::filesystem;

namespace {

std::vector<std::size_t> common_active_pixels(const Dataset& d) {
  std::vector<std::size_t> active;
  const std::size_t n = d.frames.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    const bool valid = std::all_of(d.frames.begin(), d.frames.end(), [i](const Pattern& p) { return p.mask().valid(i); });
    if (valid) active.push_back(i);
  }
  return active;
}

Eigen::VectorXd gather(const Pattern& p, const std::vector<std::size_t>& active, bool normalize) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(active.size()));
  const auto data = p.data();
  for (std::size_t i = 0; i < active.size(); ++i) x[static_cast<Eigen::Index>(i)] = data[active[i]];
  if (normalize) {
    const double n = x.norm();
    if (n > 0.0) x /= n;
  }
  return x;
}

}  // namespace

GramDecomposition gram_decomposition(const Dataset& train, bool normalize) {
  train.validate();
  GramDecomposition g;
  g.active = common_active_pixels(train);
  if (g.active.empty()) fail(ErrorKind::degenerate, "training frames share no unmasked pixel");
  const auto m_pix = static_cast<Eigen::Index>(g.active.size());
  const auto m_data = static_cast<Eigen::Index>(train.count());

  g.shifted.resize(m_pix, m_data);
  for (Eigen::Index k = 0; k < m_data; ++k)
    g.shifted.col(k) = gather(train.frames[static_cast<std::size_t>(k)], g.active, normalize);
  g.mean = g.shifted.rowwise().mean();
  g.shifted.colwise() -= g.mean;

  g.gram = g.shifted.transpose() * g.shifted;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g.gram);
  if (solver.info() != Eigen::Success) fail(ErrorKind::degenerate, "Gram eigendecomposition did not converge");
  // Solver order is ascending; reverse to descending.
  g.eigenvalues = solver.eigenvalues().reverse();
  g.eigenvectors = solver.eigenvectors().rowwise().reverse();
  const double lambda_max = std::max(g.eigenvalues.size() > 0 ? g.eigenvalues[0] : 0.0, 0.0);
  for (Eigen::Index i = 0; i < g.eigenvalues.size(); ++i) {
    if (g.eigenvalues[i] < 0.0) {
      if (g.eigenvalues[i] < -1e-10 * lambda_max)
        fail(ErrorKind::degenerate, "Gram matrix has a significantly negative eigenvalue");
      g.eigenvalues[i] = 0.0;
    }
  }
  return g;
}

EiModel ei_train(const Dataset& train, const EiOptions& options) {
  if (options.rank < 0) fail(ErrorKind::configuration, "rank must be >= 0");
  if (options.rank > static_cast<int>(train.count()))
    fail(ErrorKind::configuration, "rank cannot exceed the number of training frames");
  const GramDecomposition g = gram_decomposition(train, options.normalize);

  const double lambda_max = g.eigenvalues.size() > 0 ? g.eigenvalues[0] : 0.0;
  Eigen::Index numerical_rank = 0;
  while (numerical_rank < g.eigenvalues.size() && lambda_max > 0.0 &&
         g.eigenvalues[numerical_rank] > options.rank_tolerance * lambda_max)
    ++numerical_rank;
  if (numerical_rank == 0) fail(ErrorKind::degenerate, "all training frames are identical (rank 0)");

  EiModel model;
  model.rows = train.rows();
  model.cols = train.cols();
  model.normalize = options.normalize;
  model.rank_tolerance = options.rank_tolerance;
  model.active = g.active;
  model.mean = g.mean;

  Eigen::Index m = options.rank == 0 ? numerical_rank : options.rank;
  if (m > numerical_rank) {
    model.truncated = true;
    m = numerical_rank;
  }
  model.eigenvalues = g.eigenvalues.head(m);
  // U = A V with unit columns (the raw column norms are sqrt(lambda)).
  model.basis = g.shifted * g.eigenvectors.leftCols(m);
  for (Eigen::Index j = 0; j < m; ++j) model.basis.col(j) /= model.basis.col(j).norm();
  // Columns for eigenvalues near the rank cutoff carry rounding from A V at
  // the 1e-6 level; a QR pass restores orthonormality without changing the
  // span or the column order. Signs follow the original columns.
  {
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(model.basis);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(model.basis.rows(), m);
    for (Eigen::Index j = 0; j < m; ++j)
      if (qr.matrixQR()(j, j) < 0.0) q.col(j) = -q.col(j);
    model.basis = std::move(q);
  }
  model.projections = model.basis.transpose() * g.shifted;
  model.templates = train;
  return model;
}

Eigen::VectorXd EiModel::frame_vector(const Pattern& p) const {
  if (p.rows() != rows || p.cols() != cols)
    fail(ErrorKind::contract, "frame shape " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                                  " does not match the model (" + std::to_string(rows) + "x" + std::to_string(cols) +
                                  ")");
  return gather(p, active, normalize);
}

Eigen::VectorXd EiModel::project(const Pattern& p) const {
  return basis.transpose() * (frame_vector(p) - mean);
}

MatchReport ei_classify(const EiModel& model, const Pattern& p) {
  if (model.size() == 0) fail(ErrorKind::contract, "empty model");
  const Eigen::VectorXd w = model.project(p);
  Eigen::Index best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < model.projections.cols(); ++k) {
    const double d2 = (model.projections.col(k) - w).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  MatchReport r;
  r.method = "ei";
  r.matched_id = static_cast<int>(best);
  r.matched_label = std::string(to_string(model.templates.frames[static_cast<std::size_t>(best)].meta().label));
  r.score = std::sqrt(best_d2);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {
constexpr int kModelVersion = 1;
}

void save_ei_model(const EiModel& model, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir.string());
  nlohmann::json j;
  j["format"] = "fxisort-ei";
  j["version"] = kModelVersion;
  j["rows"] = model.rows;
  j["cols"] = model.cols;
  j["rank"] = model.rank();
  j["m_data"] = model.size();
  j["m_pix"] = model.active.size();
  j["normalize"] = model.normalize;
  j["rank_tolerance"] = model.rank_tolerance;
  j["truncated"] = model.truncated;
  {
    std::ofstream out(dir / "model.json");
    if (!out) fail(ErrorKind::io, "cannot write " + (dir / "model.json").string());
    out << j.dump(1) << "\n";
  }
  std::vector<std::uint8_t> active(static_cast<std::size_t>(model.rows) * model.cols, 0);
  for (auto i : model.active) active[i] = 1;
  {
    std::ofstream out(dir / "active.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(active.data()), static_cast<std::streamsize>(active.size()));
    if (!out) fail(ErrorKind::io, "cannot write active.bin");
  }
  write_f64(dir / "mean.bin", {model.mean.data(), static_cast<std::size_t>(model.mean.size())});
  write_f64(dir / "basis.bin", {model.basis.data(), static_cast<std::size_t>(model.basis.size())});
  write_f64(dir / "omega.bin", {model.projections.data(), static_cast<std::size_t>(model.projections.size())});
  write_f64(dir / "eigvals.bin", {model.eigenvalues.data(), static_cast<std::size_t>(model.eigenvalues.size())});
  write_npd(model.templates, dir / "templates");
}

EiModel load_ei_model(const fs::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) fail(ErrorKind::io, "cannot open " + (dir / "model.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::schema, "malformed model.json: " + std::string(e.what()));
  }
  EiModel model;
  std::size_t m_data = 0, m_pix = 0;
  Eigen::Index rank = 0;
  try {
    if (j.at("format").get<std::string>() != "fxisort-ei") fail(ErrorKind::schema, "not an EI model directory");
    if (j.at("version").get<int>() != kModelVersion) fail(ErrorKind::schema, "unsupported EI model version");
    model.rows = j.at("rows").get<int>();
    model.cols = j.at("cols").get<int>();
    rank = j.at("rank").get<Eigen::Index>();
    m_data = j.at("m_data").get<std::size_t>();
    m_pix = j.at("m_pix").get<std::size_t>();
    model.normalize = j.at("normalize").get<bool>();
    model.rank_tolerance = j.at("rank_tolerance").get<double>();
    model.truncated = j.at("truncated").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::schema, "invalid model.json: " + std::string(e.what()));
  }
  {
    const std::size_t n = static_cast<std::size_t>(model.rows) * model.cols;
    std::vector<std::uint8_t> active(n);
    std::ifstream a(dir / "active.bin", std::ios::binary);
    a.read(reinterpret_cast<char*>(active.data()), static_cast<std::streamsize>(n));
    if (!a) fail(ErrorKind::io, "cannot read active.bin");
    for (std::size_t i = 0; i < n; ++i)
      if (active[i]) model.active.push_back(i);
    if (model.active.size() != m_pix) fail(ErrorKind::schema, "active pixel count does not match model.json");
  }
  const auto pix = static_cast<Eigen::Index>(m_pix);
  const auto frames = static_cast<Eigen::Index>(m_data);
  auto mean = read_f64(dir / "mean.bin", m_pix);
  auto basis = read_f64(dir / "basis.bin", m_pix * static_cast<std::size_t>(rank));
  auto omega = read_f64(dir / "omega.bin", static_cast<std::size_t>(rank) * m_data);
  auto eig = read_f64(dir / "eigvals.bin", static_cast<std::size_t>(rank));
  model.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), pix);
  model.basis = Eigen::Map<Eigen::MatrixXd>(basis.data(), pix, rank);
  model.projections = Eigen::Map<Eigen::MatrixXd>(omega.data(), rank, frames);
  model.eigenvalues = Eigen::Map<Eigen::VectorXd>(eig.data(), rank);
  model.templates = read_npd(dir / "templates");
  if (model.templates.count() != m_data) fail(ErrorKind::schema, "template count does not match model.json");
  return model;
}

}  // namespace fxisort

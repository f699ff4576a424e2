#include "fxisort/npd.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace fxisort {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json meta_to_json(const FrameMeta& m) {
  json j;
  j["label"] = std::string(to_string(m.label));
  j["orientation"] = m.orientation ? json::array({m.orientation->w, m.orientation->x, m.orientation->y, m.orientation->z})
                                   : json(nullptr);
  j["true_fluence"] = optional_json(m.true_fluence);
  j["true_diameter"] = optional_json(m.true_diameter);
  j["aspect_ratio"] = optional_json(m.aspect_ratio);
  j["source_id"] = optional_json(m.source_id);
  return j;
}

template <typename T>
std::optional<T> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

FrameMeta meta_from_json(const json& j) {
  FrameMeta m;
  m.label = parse_shape_label(j.at("label").get<std::string>());
  if (j.contains("orientation") && !j.at("orientation").is_null()) {
    const auto& q = j.at("orientation");
    if (!q.is_array() || q.size() != 4) fail(ErrorKind::schema, "orientation must be [w, x, y, z]");
    m.orientation = Quaternion{q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()};
  }
  m.true_fluence = optional_from<double>(j, "true_fluence");
  m.true_diameter = optional_from<double>(j, "true_diameter");
  m.aspect_ratio = optional_from<double>(j, "aspect_ratio");
  m.source_id = optional_from<int>(j, "source_id");
  return m;
}

json geometry_to_json(const DetectorGeometry& g) {
  return {{"n_fast", g.n_fast},           {"n_slow", g.n_slow},         {"pixel_pitch", g.pixel_pitch},
          {"distance", g.distance},       {"wavelength", g.wavelength}, {"missing_diameter", g.missing_diameter}};
}

DetectorGeometry geometry_from_json(const json& j) {
  DetectorGeometry g;
  g.n_fast = j.at("n_fast").get<int>();
  g.n_slow = j.at("n_slow").get<int>();
  g.pixel_pitch = j.at("pixel_pitch").get<double>();
  g.distance = j.at("distance").get<double>();
  g.wavelength = j.at("wavelength").get<double>();
  g.missing_diameter = j.at("missing_diameter").get<double>();
  return g;
}

std::size_t frame_size(const NpdManifest& m) {
  return static_cast<std::size_t>(m.rows) * static_cast<std::size_t>(m.cols);
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
  out << text;
  if (!out) fail(ErrorKind::io, "failed writing " + file.string());
}

void check_file_size(const fs::path& file, std::uintmax_t expected) {
  std::error_code ec;
  const auto size = fs::file_size(file, ec);
  if (ec) fail(ErrorKind::io, "cannot stat " + file.string());
  if (size != expected)
    fail(ErrorKind::schema, file.filename().string() + " holds " + std::to_string(size) + " bytes, expected " +
                                std::to_string(expected));
}

}  // namespace

void write_npd(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir.string());

  json manifest;
  manifest["format"] = "npd";
  manifest["version"] = kNpdVersion;
  manifest["count"] = dataset.count();
  manifest["shape"] = {dataset.rows(), dataset.cols()};
  manifest["dtype"] = std::string(to_string(dataset.dtype));
  manifest["recipe"] = dataset.recipe;
  manifest["seed"] = dataset.seed;
  manifest["geometry"] = geometry_to_json(dataset.geometry);
  manifest["preprocess"] = {{"crop", dataset.preprocess.crop}, {"bin", dataset.preprocess.bin}};
  json frames = json::array();
  for (const auto& f : dataset.frames) frames.push_back(meta_to_json(f.meta()));
  manifest["frames"] = std::move(frames);
  write_text(dir / "manifest.json", manifest.dump(1) + "\n");

  std::ofstream data(dir / "patterns.bin", std::ios::binary);
  std::ofstream mask(dir / "mask.bin", std::ios::binary);
  if (!data || !mask) fail(ErrorKind::io, "cannot write frame data under " + dir.string());
  const std::size_t n = static_cast<std::size_t>(dataset.rows()) * static_cast<std::size_t>(dataset.cols());
  std::vector<std::uint32_t> words(n);
  for (const auto& f : dataset.frames) {
    const auto values = f.data();
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t w;
      if (dataset.dtype == Dtype::u32) {
        w = static_cast<std::uint32_t>(values[i]);
      } else {
        std::memcpy(&w, &values[i], sizeof w);
      }
      words[i] = to_little(w);
    }
    data.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
    const auto bits = f.mask().bits();
    mask.write(reinterpret_cast<const char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
  }
  if (!data || !mask) fail(ErrorKind::io, "failed writing frame data under " + dir.string());
}

NpdManifest read_npd_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) fail(ErrorKind::io, "cannot open " + (dir / "manifest.json").string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::schema, "malformed manifest: " + std::string(e.what()));
  }
  NpdManifest m;
  try {
    if (j.value("format", std::string("npd")) != "npd") fail(ErrorKind::schema, "not an NPD manifest");
    m.version = j.at("version").get<int>();
    if (m.version != kNpdVersion) fail(ErrorKind::schema, "unsupported NPD version " + std::to_string(m.version));
    m.count = j.at("count").get<std::size_t>();
    m.rows = j.at("shape").at(0).get<int>();
    m.cols = j.at("shape").at(1).get<int>();
    m.dtype = parse_dtype(j.at("dtype").get<std::string>());
    m.geometry = geometry_from_json(j.at("geometry"));
    if (j.contains("preprocess")) {
      m.preprocess.crop = j.at("preprocess").value("crop", 0);
      m.preprocess.bin = j.at("preprocess").value("bin", 1);
    }
    m.recipe = j.value("recipe", std::string());
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& f : j.at("frames")) m.frames.push_back(meta_from_json(f));
  } catch (const json::exception& e) {
    fail(ErrorKind::schema, "invalid manifest: " + std::string(e.what()));
  }
  if (m.count < 1) fail(ErrorKind::schema, "dataset must contain at least one frame");
  if (m.rows <= 0 || m.cols <= 0) fail(ErrorKind::schema, "manifest shape must be positive");
  if (m.frames.size() != m.count) fail(ErrorKind::schema, "per-frame metadata does not match the frame count");
  check_file_size(dir / "patterns.bin", m.count * frame_size(m) * sizeof(std::uint32_t));
  check_file_size(dir / "mask.bin", m.count * frame_size(m));
  return m;
}

NpdReader::NpdReader(fs::path dir) : dir_(std::move(dir)), manifest_(read_npd_manifest(dir_)) {}

Pattern NpdReader::read(std::size_t index) const {
  if (index >= manifest_.count) fail(ErrorKind::contract, "frame index out of range");
  const std::size_t n = frame_size(manifest_);
  std::ifstream data(dir_ / "patterns.bin", std::ios::binary);
  std::ifstream mask(dir_ / "mask.bin", std::ios::binary);
  if (!data || !mask) fail(ErrorKind::io, "cannot open frame data under " + dir_.string());
  data.seekg(static_cast<std::streamoff>(index * n * sizeof(std::uint32_t)));
  mask.seekg(static_cast<std::streamoff>(index * n));
  std::vector<std::uint32_t> words(n);
  std::vector<std::uint8_t> bits(n);
  data.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
  mask.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(n));
  if (!data || !mask) fail(ErrorKind::io, "truncated frame " + std::to_string(index));
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t w = to_little(words[i]);
    if (manifest_.dtype == Dtype::u32) {
      values[i] = static_cast<float>(w);
    } else {
      std::memcpy(&values[i], &w, sizeof w);
    }
  }
  for (auto b : bits)
    if (b > 1) fail(ErrorKind::schema, "mask bytes must be 0 or 1");
  return Pattern(manifest_.rows, manifest_.cols, std::move(values),
                 PixelMask(manifest_.rows, manifest_.cols, std::move(bits)), manifest_.frames[index]);
}

Dataset read_npd(const fs::path& dir) {
  NpdReader reader(dir);
  const auto& m = reader.manifest();
  Dataset d;
  d.geometry = m.geometry;
  d.preprocess = m.preprocess;
  d.recipe = m.recipe;
  d.seed = m.seed;
  d.dtype = m.dtype;
  d.frames.reserve(m.count);
  for (std::size_t k = 0; k < m.count; ++k) d.frames.push_back(reader.read(k));
  return d;
}

void write_f64(const fs::path& file, std::span<const double> values) {
  std::ofstream out(file, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
  for (double v : values) {
    std::uint64_t w;
    std::memcpy(&w, &v, sizeof w);
    w = to_little(w);
    out.write(reinterpret_cast<const char*>(&w), sizeof w);
  }
  if (!out) fail(ErrorKind::io, "failed writing " + file.string());
}

std::vector<double> read_f64(const fs::path& file, std::size_t expected) {
  check_file_size(file, expected * sizeof(double));
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + file.string());
  std::vector<double> values(expected);
  for (auto& v : values) {
    std::uint64_t w;
    in.read(reinterpret_cast<char*>(&w), sizeof w);
    w = to_little(w);
    std::memcpy(&v, &w, sizeof w);
  }
  if (!in) fail(ErrorKind::io, "truncated " + file.string());
  return values;
}

}  // namespace fxisort

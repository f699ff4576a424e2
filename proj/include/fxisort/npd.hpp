#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fxisort/core.hpp"

namespace fxisort {

// NPD dataset container: a directory holding
//   manifest.json  version, count, shape [rows, cols], dtype, geometry,
//                  preprocessing, recipe, seed and per-frame metadata
//   patterns.bin   frames in manifest order, row-major, little-endian
//   mask.bin       one byte (0/1) per pixel per frame, same order
inline constexpr int kNpdVersion = 1;

struct NpdManifest {
  int version = kNpdVersion;
  std::size_t count = 0;
  int rows = 0;
  int cols = 0;
  Dtype dtype = Dtype::f32;
  DetectorGeometry geometry;
  Preprocess preprocess;
  std::string recipe;
  std::uint64_t seed = 0;
  std::vector<FrameMeta> frames;
};

void write_npd(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_npd(const std::filesystem::path& dir);

NpdManifest read_npd_manifest(const std::filesystem::path& dir);

/// Random access to the frames of an NPD directory without loading them all.
/// Each read opens its own stream, so concurrent reads are safe.
class NpdReader {
 public:
  explicit NpdReader(std::filesystem::path dir);

  const NpdManifest& manifest() const { return manifest_; }
  std::size_t count() const { return manifest_.count; }
  Pattern read(std::size_t index) const;

 private:
  std::filesystem::path dir_;
  NpdManifest manifest_;
};

// Little-endian float64 arrays used by the model files.
void write_f64(const std::filesystem::path& file, std::span<const double> values);
std::vector<double> read_f64(const std::filesystem::path& file, std::size_t expected);

}  // namespace fxisort

#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "fxisort/forward_sim.hpp"

namespace fxisort::test {

// Small frames (60x60 after a 120 crop and 2x2 binning) keep unit tests fast.
inline DatasetOptions small_options(int count = 12) {
  DatasetOptions opt;
  opt.preprocess = {120, 2};
  opt.sizes.templates = count;
  opt.sizes.homogeneous = count + 8;
  opt.sizes.sizes = count;
  opt.sizes.shape_icosahedra = count;
  opt.sizes.shape_spheroids = 4;
  opt.model.voxels = 48;
  opt.separation = 0.002;
  return opt;
}

inline const Dataset& small_templates() {
  static const Dataset t = build_dataset(Recipe::T, 7, small_options());
  return t;
}

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fxisort-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fxisort::test

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fxisort {

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic 64-bit tag for a named stream; FNV-1a over the text.
std::uint64_t stream_tag(std::string_view name);

/// Seed for the stream (job seed, purpose, frame index). Frames never share a
/// stream, so results do not depend on generation order or worker count.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index);

/// mt19937_64 with platform-independent draws. The standard distributions are
/// implementation-defined, so every variate is produced here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view purpose, std::uint64_t index)
      : engine_(derive_seed(seed, purpose, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n);

  double normal();

  /// Poisson variate: sequential inversion below mean 10, PTRS above.
  std::uint64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fxisort

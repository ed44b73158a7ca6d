#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>

namespace pfscale {

std::uint64_t splitmix64(std::uint64_t x);

/// Seeded random stream with platform-independent conversions.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Uniform, integer and Gaussian draws are derived by hand so that
/// seeded runs are bit-identical across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }
  std::uint64_t operator()() { return engine_(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer on [0, n). n must be positive.
  std::size_t below(std::size_t n);
  /// Standard normal (Box-Muller, one value per call).
  double normal();
  /// Fresh independent stream seeded from this one.
  Rng split() { return Rng(next_u64()); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pfscale

#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace dropfleet {

/// Deterministic random stream. std::mt19937_64 output is fully specified by
/// the standard; the sampling routines here avoid std::*_distribution, whose
/// algorithms are implementation-defined, so identical seeds give identical
/// draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n);

  /// Poisson-distributed count with the given mean.
  int poisson(double mean);

  /// Index drawn proportionally to non-negative weights (at least one > 0).
  int categorical(std::span<const double> weights);

  /// Derived stream, decorrelated from this one and from other stream ids.
  Rng split(std::uint64_t stream_id);

 private:
  std::mt19937_64 engine_;
};

/// Stable 64-bit mix for building per-(seed, episode, module) stream ids.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace dropfleet

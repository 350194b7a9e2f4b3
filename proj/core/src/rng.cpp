#include "dropfleet/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dropfleet {

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t span = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<int>(x % span);
}

int Rng::poisson(double mean) {
  if (mean < 0 || !std::isfinite(mean))
    throw std::invalid_argument("poisson: mean must be finite and >= 0");
  if (mean == 0) return 0;
  // Knuth's product method, chunked so the running product stays away from
  // underflow for large means (Poisson(a+b) = Poisson(a) + Poisson(b)).
  int total = 0;
  double remaining = mean;
  while (remaining > 30.0) {
    total += poisson(30.0);
    remaining -= 30.0;
  }
  const double threshold = std::exp(-remaining);
  double product = 1.0;
  int count = -1;
  do {
    ++count;
    product *= uniform01();
  } while (product > threshold);
  return total + count;
}

int Rng::categorical(std::span<const double> weights) {
  double total = 0;
  for (double w : weights) {
    if (w < 0 || !std::isfinite(w))
      throw std::invalid_argument("categorical: weights must be finite and >= 0");
    total += w;
  }
  if (total <= 0) throw std::invalid_argument("categorical: all weights zero");
  double x = uniform01() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    x -= weights[i];
    if (x < 0) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;  // guard against rounding
}

Rng Rng::split(std::uint64_t stream_id) {
  return Rng(mix_seed(engine_(), stream_id));
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dropfleet

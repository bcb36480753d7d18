#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace scgn {

/// Seeded random stream with platform-independent output.
///
/// Only the raw mt19937_64 engine is taken from the standard library; all
/// distributions are implemented here because libstdc++, libc++ and MSVC
/// disagree on std::normal_distribution and friends.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream keyed by `tag`; does not advance this stream.
  RngStream derive(std::uint64_t tag) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n).
  std::uint64_t index(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  double gamma(double shape);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[index(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Beta(alpha, beta) draw via the Gamma-ratio construction.
double sample_beta(double alpha, double beta, RngStream& rng);

}  // namespace scgn

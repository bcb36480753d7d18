#include "scgn/rng.hpp"

#include <cmath>
#include <string>

#include "scgn/errors.hpp"

namespace scgn {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream RngStream::derive(std::uint64_t tag) const {
  return RngStream(splitmix64(seed_ ^ splitmix64(tag + 0x632be59bd9b4e019ULL)));
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::index(std::uint64_t n) {
  if (n == 0) throw DomainError("RngStream::index: empty range");
  // Rejection on the top of the range keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  cached_normal_ = v * m;
  has_cached_normal_ = true;
  return u * m;
}

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) throw DomainError("gamma: shape must be positive");
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia & Tsang (2000).
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_beta(double alpha, double beta, RngStream& rng) {
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw DomainError("sample_beta: parameters must be positive (alpha=" +
                      std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
  }
  const double x = rng.gamma(alpha);
  const double y = rng.gamma(beta);
  const double sum = x + y;
  // Both gammas can underflow to zero for tiny shapes.
  if (sum == 0.0) return rng.uniform() < alpha / (alpha + beta) ? 1.0 : 0.0;
  return x / sum;
}

}  // namespace scgn

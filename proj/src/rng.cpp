#include "poismix/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace poismix {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += kGolden);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = seed;
  (void)splitmix64(h);
  for (std::uint64_t key : path) {
    h ^= key + kGolden + (h << 6) + (h >> 2);
    (void)splitmix64(h);
  }
  for (auto& s : s_) s = splitmix64(h);
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RngStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform01_pos() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::normal(double mean, double sd) {
  const double u1 = uniform01_pos();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + sd * r * std::cos(2.0 * M_PI * u2);
}

long RngStream::poisson(double mu) {
  if (!(mu >= 0.0) || mu > 1e8) {
    throw std::domain_error("poisson: mean " + std::to_string(mu) +
                            " outside supported range [0, 1e8]");
  }
  if (mu == 0.0) return 0;
  if (mu < 10.0) {
    // Knuth: count uniforms until their product drops below exp(-mu).
    const double limit = std::exp(-mu);
    long k = 0;
    double prod = uniform01_pos();
    while (prod > limit) {
      ++k;
      prod *= uniform01_pos();
    }
    return k;
  }
  // PTRS transformed rejection (Hormann 1993), valid for mu >= 10.
  const double smu = std::sqrt(mu);
  const double b = 0.931 + 2.53 * smu;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mu = std::log(mu);
  for (;;) {
    const double u = uniform01() - 0.5;
    double v = uniform01();
    const double us = 0.5 - std::fabs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + mu + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<long>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    const long k = static_cast<long>(kf);
    const double lhs = std::log(v) + std::log(inv_alpha) -
                       std::log(a / (us * us) + b);
    const double rhs = kf * log_mu - mu - std::lgamma(kf + 1.0);
    if (lhs <= rhs) return k;
  }
}

}  // namespace poismix

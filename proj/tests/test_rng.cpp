#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "poismix/rng.hpp"

using namespace poismix;

TEST_CASE("streams are reproducible and path-separated") {
  RngStream a(42, {1, 2, 3});
  RngStream b(42, {1, 2, 3});
  RngStream c(42, {1, 2, 4});
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    any_diff = any_diff || (va != c.next_u64());
  }
  CHECK(any_diff);
}

TEST_CASE("uniform01 stays in [0, 1)") {
  RngStream s(7, {0});
  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("normal moments") {
  RngStream s(11, {1});
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal(1.0, 2.0);
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - 1.0) < 3.0 * 2.0 / std::sqrt(double(n)));
  // var(Z^2)/n for Z ~ N(0, 4): sd of sample variance ~ sqrt(2/n) * 4
  CHECK(std::abs(var - 4.0) < 4.0 * std::sqrt(2.0 / n) * 4.0);
}

TEST_CASE("normal with zero sd is exactly the mean") {
  RngStream s(13, {2});
  for (int i = 0; i < 10; ++i) CHECK(s.normal(0.7, 0.0) == 0.7);
}

TEST_CASE("poisson moments across the sampler split") {
  const std::vector<double> mus = {0.3, 3.7, 9.9, 10.1, 47.5, 300.0};
  for (double mu : mus) {
    RngStream s(17, {3, static_cast<std::uint64_t>(mu * 100)});
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double k = static_cast<double>(s.poisson(mu));
      sum += k;
      sum2 += k * k;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean - mu) < 3.5 * std::sqrt(mu / n));
    // var of the sample variance of Poisson ~= (mu + 2 mu^2) / n
    CHECK(std::abs(var - mu) <
          4.0 * std::sqrt((mu + 2.0 * mu * mu) / n));
  }
}

TEST_CASE("poisson tail probabilities match the exact cdf") {
  auto exact_cdf = [](double mu, long k0) {
    double acc = 0.0;
    for (long k = 0; k <= k0; ++k) {
      acc += std::exp(k * std::log(mu) - mu - std::lgamma(double(k) + 1.0));
    }
    return acc;
  };
  struct Case {
    double mu;
    long k0;
  };
  for (const Case& c : {Case{4.0, 2}, Case{25.0, 20}, Case{120.0, 110}}) {
    RngStream s(23, {4, static_cast<std::uint64_t>(c.mu)});
    const int n = 150000;
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += s.poisson(c.mu) <= c.k0;
    const double p = exact_cdf(c.mu, c.k0);
    const double se = std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(double(hits) / n - p) < 3.5 * se);
  }
}

TEST_CASE("poisson rejects invalid means") {
  RngStream s(1, {5});
  CHECK_THROWS_AS((void)s.poisson(-1.0), std::domain_error);
  CHECK_THROWS_AS((void)s.poisson(2e8), std::domain_error);
  CHECK(s.poisson(0.0) == 0);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pbn/linalg.hpp"
#include "pbn/rng.hpp"

using namespace pbn;

namespace {

Vec random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  Vec v(n);
  for (double& x : v) x = rng.normal(0.0, scale);
  return v;
}

// Independent per-coordinate sum-of-squares oracle.
double euclid_oracle(const Vec& a, const Vec& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - b[i];
    s += d * d;
  }
  return static_cast<double>(std::sqrt(s));
}

}  // namespace

TEST_CASE("euclidean_distance basics") {
  CHECK(euclidean_distance({1, 2}, {1, 2}) == 0.0);
  CHECK(euclidean_distance({0, 0}, {3, 4}) == 5.0);

  const Vec a = {0.2, -1.1, 0.5};
  const Vec b = {1.0, 0.3, -0.4};
  CHECK(euclidean_distance(a, b) == Catch::Approx(euclid_oracle(a, b)).epsilon(1e-14));

  CHECK_THROWS_AS(euclidean_distance({1, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_WITH(euclidean_distance({1, 2}, {1, 2, 3}),
                    Catch::Matchers::ContainsSubstring("2") &&
                        Catch::Matchers::ContainsSubstring("3"));
}

TEST_CASE("euclidean_distance symmetry and triangle inequality") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.uniform_below(8);
    const Vec a = random_vec(rng, n), b = random_vec(rng, n), c = random_vec(rng, n);
    CHECK(euclidean_distance(a, b) == euclidean_distance(b, a));
    CHECK(euclidean_distance(a, c) <=
          euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-9);
  }
}

TEST_CASE("cosine_distance basics") {
  CHECK(cosine_distance({1, 0}, {2, 0}) == Catch::Approx(0.0).margin(1e-15));
  CHECK(cosine_distance({1, 0}, {0, 1}) == Catch::Approx(1.0));
  CHECK(cosine_distance({1, 0}, {-1, 0}) == Catch::Approx(2.0));
  // Zero-norm input treated as orthogonal.
  CHECK(cosine_distance({0, 0}, {1, 2}) == 1.0);
  CHECK_THROWS_AS(cosine_distance({1}, {1, 2}), std::invalid_argument);
}

TEST_CASE("cosine_distance range on random inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.uniform_below(10);
    const double d = cosine_distance(random_vec(rng, n), random_vec(rng, n));
    CHECK(d >= 0.0 - 1e-12);
    CHECK(d <= 2.0 + 1e-12);
  }
}

TEST_CASE("softmax basics") {
  const Vec u = softmax({0, 0});
  CHECK(u[0] == Catch::Approx(0.5));
  CHECK(u[1] == Catch::Approx(0.5));

  const Vec big = softmax({1000, 1000});
  CHECK(big[0] == Catch::Approx(0.5));
  CHECK(std::isfinite(big[0]));

  // High-precision exp-normalize oracle for [1, 2, 3].
  long double e1 = std::exp(1.0L), e2 = std::exp(2.0L), e3 = std::exp(3.0L);
  const long double z = e1 + e2 + e3;
  const Vec s = softmax({1, 2, 3});
  CHECK(s[0] == Catch::Approx(static_cast<double>(e1 / z)).epsilon(1e-12));
  CHECK(s[1] == Catch::Approx(static_cast<double>(e2 / z)).epsilon(1e-12));
  CHECK(s[2] == Catch::Approx(static_cast<double>(e3 / z)).epsilon(1e-12));
}

TEST_CASE("softmax properties") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_below(8);
    Vec x = random_vec(rng, n, 3.0);
    const Vec s = softmax(x);
    double sum = 0.0;
    for (double v : s) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));

    // Shift invariance.
    const double c = rng.normal(0.0, 10.0);
    Vec shifted = x;
    for (double& v : shifted) v += c;
    const Vec s2 = softmax(shifted);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(s2[i] == Catch::Approx(s[i]).margin(1e-12));

    // Permutation equivariance: reverse as the permutation.
    Vec rev(x.rbegin(), x.rend());
    const Vec sr = softmax(rev);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(sr[i] == Catch::Approx(s[n - 1 - i]).margin(1e-12));
  }
}

TEST_CASE("finite_difference_gradient") {
  auto quad = [](const Vec& x) { return dot(x, x); };
  const Vec g = finite_difference_gradient(quad, {1, 2}, 1e-5);
  CHECK(g[0] == Catch::Approx(2.0).margin(1e-6));
  CHECK(g[1] == Catch::Approx(4.0).margin(1e-6));

  auto constant = [](const Vec&) { return 3.5; };
  const Vec gz = finite_difference_gradient(constant, {0.3, -2, 7}, 1e-5);
  for (double v : gz) CHECK(std::abs(v) <= 1e-9);

  auto bad = [](const Vec& x) { return std::log(x[0]); };
  CHECK_THROWS_WITH(finite_difference_gradient(bad, {-1.0}, 1e-5),
                    Catch::Matchers::ContainsSubstring("coordinate 0"));
  CHECK_THROWS_AS(finite_difference_gradient(quad, {1.0}, 0.0),
                  std::invalid_argument);
}

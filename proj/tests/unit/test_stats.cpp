#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "htesel/stats.hpp"

using namespace htesel;

namespace {

// Alternating series P(K > x) = 2 sum (-1)^{k-1} exp(-2 k^2 x^2), summed to convergence.
double kolmogorov_sf_series(double x) {
  double s = 0.0;
  for (int k = 1; k < 200; ++k) s += (k % 2 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * x * x);
  return 2.0 * s;
}

}  // namespace

TEST_CASE("normal quantile and cdf") {
  CHECK(stats::normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-13));
  CHECK(stats::normal_quantile(0.9) == doctest::Approx(1.2815515655446004).epsilon(1e-13));
  CHECK(stats::normal_cdf(0.0) == 0.5);
  for (double p : {0.01, 0.3, 0.5, 0.77, 0.999}) {
    CHECK(stats::normal_cdf(stats::normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK_THROWS(stats::normal_quantile(1.0));
}

TEST_CASE("kolmogorov survival function matches the alternating series") {
  for (double x : {0.6, 0.8, 1.0, 1.17, 1.19, 1.36, 1.63, 2.5}) {
    CAPTURE(x);
    CHECK(stats::kolmogorov_sf(x) == doctest::Approx(kolmogorov_sf_series(x)).epsilon(1e-10));
  }
  // Classical 5% and 1% critical points.
  CHECK(stats::kolmogorov_sf(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(stats::kolmogorov_sf(1.6276) == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(stats::kolmogorov_sf(0.0) == 1.0);
  CHECK(stats::kolmogorov_sf(0.1) == doctest::Approx(1.0));
}

TEST_CASE("KS statistic on exact normal quantile points") {
  const int n = 200;
  std::vector<double> pts;
  for (int i = 0; i < n; ++i) pts.push_back(stats::normal_quantile((i + 0.5) / n));
  const auto r = stats::ks_test_normal(pts);
  CHECK(r.statistic == doctest::Approx(0.5 / n).epsilon(1e-9));
  CHECK(r.p_value > 0.99);

  std::vector<double> shifted;
  for (double v : pts) shifted.push_back(v + 1.0);
  CHECK(stats::ks_test_normal(shifted).p_value < 1e-6);
}

TEST_CASE("descriptive statistics") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(stats::mean(v) == 2.5);
  CHECK(stats::sample_sd(v) == doctest::Approx(1.2909944487358056).epsilon(1e-14));
  CHECK(stats::quantile(v, 0.5) == doctest::Approx(2.5));
  CHECK(stats::quantile(v, 0.9) == doctest::Approx(3.7));
  CHECK(stats::quantile(v, 0.0) == 1.0);
  CHECK(stats::quantile(v, 1.0) == 4.0);

  const std::vector<double> x{0, 1, 2, 3, 4};
  const std::vector<double> y{1, 3, 5, 7, 9};
  CHECK(stats::ols_slope(x, y) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("percentile bootstrap interval") {
  std::vector<double> v;
  for (int i = 0; i < 100; ++i) v.push_back(i % 3 == 0 ? 1.0 : 0.0);
  const auto a = stats::bootstrap_mean_ci(v, 2000, 0.95, 5);
  const auto b = stats::bootstrap_mean_ci(v, 2000, 0.95, 5);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
  CHECK(a.lower < stats::mean(v));
  CHECK(a.upper > stats::mean(v));
  // Binomial se is about 0.047, so the 95% half-width is near 0.09.
  CHECK(a.half_width() == doctest::Approx(0.092).epsilon(0.2));
  CHECK(a.excludes_zero());

  const std::vector<double> zeros(50, 0.0);
  const auto z = stats::bootstrap_mean_ci(zeros, 2000, 0.95, 1);
  CHECK(z.lower == 0.0);
  CHECK(z.upper == 0.0);
  CHECK_FALSE(z.excludes_zero());
}

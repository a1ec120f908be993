#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace htesel::stats {

double normal_cdf(double x);
double normal_quantile(double p);

/// Survival function of the limiting Kolmogorov distribution, P(K > x).
double kolmogorov_sf(double x);

struct KsResult {
  double statistic = 0.0;  // sup |F_n - Phi|
  double p_value = 1.0;
};

/// One-sample two-sided KS test of `samples` against N(0, 1). The p-value
/// uses the asymptotic distribution with Stephens' finite-n correction.
KsResult ks_test_normal(std::span<const double> samples);

double mean(std::span<const double> v);
/// Sample standard deviation with the n - 1 denominator.
double sample_sd(std::span<const double> v);

/// Linear-interpolated empirical quantile (Hyndman-Fan type 7). Sorts a copy.
double quantile(std::span<const double> v, double prob);
/// Same, on data already sorted ascending.
double quantile_sorted(std::span<const double> sorted, double prob);

/// Least-squares slope of y on x.
double ols_slope(std::span<const double> x, std::span<const double> y);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double half_width() const { return 0.5 * (upper - lower); }
  bool excludes_zero() const { return lower > 0.0 || upper < 0.0; }
};

/// Percentile bootstrap CI for the mean of `values` (resampling entries).
Interval bootstrap_mean_ci(std::span<const double> values, int resamples,
                           double level, std::uint64_t seed);

}  // namespace htesel::stats

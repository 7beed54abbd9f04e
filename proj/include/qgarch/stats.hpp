#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "qgarch/error.hpp"

namespace qgarch {

inline double normal_quantile(double p) {
  detail::require_domain(p > 0.0 && p < 1.0, "normal_quantile: p must lie in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double normal_pdf(double x) {
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Upper tail probability P(chi2_df > x).
inline double chi_squared_sf(double x, double df) {
  detail::require(df > 0.0, "chi_squared_sf: degrees of freedom must be positive");
  if (!(x > 0.0)) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), x));
}

/// Empirical p-quantile with linear interpolation between order statistics
/// (the "type 7" rule).
inline double empirical_quantile(std::span<const double> data, double p) {
  detail::require(!data.empty(), "empirical_quantile: empty sample");
  detail::require(p >= 0.0 && p <= 1.0, "empirical_quantile: p must lie in [0,1]");
  std::vector<double> v(data.begin(), data.end());
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double mean(std::span<const double> x) {
  detail::require(!x.empty(), "mean: empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample standard deviation with the n-1 divisor.
inline double stddev(std::span<const double> x) {
  detail::require(x.size() > 1, "stddev: at least two values required");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

}  // namespace qgarch

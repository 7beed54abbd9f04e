#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <vector>

#include "qgarch/error.hpp"
#include "qgarch/stats.hpp"
#include "qgarch/types.hpp"

namespace qgarch {

struct SelfWeightConfig {
  double c_quantile = 0.95;
  double truncation_tol = 1e-12;
  std::optional<double> threshold;  // fixed c; overrides c_quantile
};

namespace detail {

// Coefficients e^{-log^2(i+1)}, i = 0, 1, ..., up to (excluding) the first below tol.
inline std::vector<double> self_weight_coefficients(double tol) {
  std::vector<double> c;
  for (std::size_t i = 0;; ++i) {
    const double l = std::log(static_cast<double>(i + 1));
    const double v = std::exp(-l * l);
    if (v < tol) break;
    c.push_back(v);
  }
  return c;
}

}  // namespace detail

/// Threshold c of the self-weights: the c_quantile sample quantile of the
/// returns y_1..y_n.
inline double self_weight_threshold(std::span<const double> y, double c_quantile) {
  detail::require(c_quantile > 0.0 && c_quantile < 1.0, "self-weights: c_quantile must lie in (0,1)");
  return empirical_quantile(y, c_quantile);
}

/// Self-weights
///   w_t = ( sum_{i>=0} e^{-log^2(i+1)} max(1, |y_{t-i-1}| / c) )^{-3},
/// with y_s = 0 for s <= 0. Lags whose coefficient is below the truncation
/// tolerance are dropped, so the all-quiet sum equals S_inf = sum of the
/// retained coefficients.
inline std::vector<double> compute_self_weights(std::span<const double> y, const SelfWeightConfig& cfg = {}) {
  detail::require(!y.empty(), "self-weights: empty series");
  detail::require(cfg.truncation_tol > 0.0, "self-weights: truncation_tol must be positive");
  const double c = cfg.threshold ? *cfg.threshold : self_weight_threshold(y, cfg.c_quantile);
  detail::require_domain(c > 0.0, "self-weights: threshold c must be positive (is the series degenerate?)");

  const std::vector<double> coef = detail::self_weight_coefficients(cfg.truncation_tol);
  double s_inf = 0.0;
  for (double v : coef) s_inf += v;

  const std::size_t n = y.size();
  std::vector<double> excess(n);
  for (std::size_t s = 0; s < n; ++s) excess[s] = std::max(std::abs(y[s]) / c, 1.0) - 1.0;

  std::vector<double> w(n);
  for (std::size_t t = 0; t < n; ++t) {
    double sum = s_inf;
    const std::size_t lags = std::min(t, coef.size());
    for (std::size_t i = 0; i < lags; ++i) sum += coef[i] * excess[t - i - 1];
    w[t] = 1.0 / (sum * sum * sum);
  }
  return w;
}

inline std::vector<double> compute_self_weights(const ReturnSeries& series, const SelfWeightConfig& cfg = {}) {
  return compute_self_weights(series.values(), cfg);
}

/// FNV-1a hash of a weight vector, used to tag fits that share weights.
inline std::uint64_t weights_id(std::span<const double> w) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : w) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xffU;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace qgarch

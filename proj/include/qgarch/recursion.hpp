#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "qgarch/error.hpp"
#include "qgarch/types.hpp"

namespace qgarch {

/// Truncated geometric sums of past absolute values, with y_s = 0 for s <= 0.
///
/// For t = 1..n (stored at index t-1):
///   level[t] = sum_{j=1}^{t-1} beta^{j-1} |y_{t-j}|
///   d1[t]    = sum_{j=2}^{t-1} (j-1) beta^{j-2} |y_{t-j}|          (d level / d beta)
///   d2[t]    = sum_{j=3}^{t-1} (j-1)(j-2) beta^{j-3} |y_{t-j}|     (d^2 level / d beta^2)
/// computed by the O(n) recursions level_t = |y_{t-1}| + beta level_{t-1},
/// d1_t = level_{t-1} + beta d1_{t-1}, d2_t = 2 d1_{t-1} + beta d2_{t-1}.
struct GeometricSums {
  std::vector<double> level;
  std::vector<double> d1;
  std::vector<double> d2;
};

inline std::vector<double> geometric_level(std::span<const double> y, double beta) {
  std::vector<double> level(y.size(), 0.0);
  for (std::size_t t = 1; t < y.size(); ++t) level[t] = std::abs(y[t - 1]) + beta * level[t - 1];
  return level;
}

/// Fills `level` (resized to y.size()) without allocating when capacity allows.
inline void geometric_level_into(std::span<const double> y, double beta, std::vector<double>& level) {
  level.resize(y.size());
  if (y.empty()) return;
  level[0] = 0.0;
  for (std::size_t t = 1; t < y.size(); ++t) level[t] = std::abs(y[t - 1]) + beta * level[t - 1];
}

/// order = 0 fills level only, 1 adds d1, 2 adds d2.
inline GeometricSums geometric_sums(std::span<const double> y, double beta, int order = 2) {
  const std::size_t n = y.size();
  GeometricSums s;
  s.level.assign(n, 0.0);
  if (order >= 1) s.d1.assign(n, 0.0);
  if (order >= 2) s.d2.assign(n, 0.0);
  for (std::size_t t = 1; t < n; ++t) {
    s.level[t] = std::abs(y[t - 1]) + beta * s.level[t - 1];
    if (order >= 1) s.d1[t] = s.level[t - 1] + beta * s.d1[t - 1];
    if (order >= 2) s.d2[t] = 2.0 * s.d1[t - 1] + beta * s.d2[t - 1];
  }
  return s;
}

namespace detail {
inline double history_sum(std::span<const double> abs_history, double beta, std::size_t t) {
  require_domain(t >= 1, "conditional quantile: t must be >= 1");
  require(abs_history.size() + 1 >= t, "conditional quantile: history shorter than t-1");
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < t; ++i) s = abs_history[i] + beta * s;
  return s;
}
}  // namespace detail

/// q~_t(theta) = omega + alpha1 sum_{j=1}^{t-1} beta1^{j-1} |y_{t-j}|.
/// `abs_history` holds |y_1|, ..., |y_{t-1}| (extra trailing entries are ignored).
inline double cond_quantile(const QGarchParams& theta, std::span<const double> abs_history, std::size_t t) {
  return theta.omega + theta.alpha1 * detail::history_sum(abs_history, theta.beta1, t);
}

/// Gradient of cond_quantile with respect to (omega, alpha1, beta1).
inline std::array<double, 3> cond_quantile_grad(const QGarchParams& theta, std::span<const double> abs_history,
                                                std::size_t t) {
  detail::require_domain(t >= 1, "conditional quantile: t must be >= 1");
  detail::require(abs_history.size() + 1 >= t, "conditional quantile: history shorter than t-1");
  double level = 0.0;
  double d1 = 0.0;
  for (std::size_t i = 0; i + 1 < t; ++i) {
    d1 = level + theta.beta1 * d1;
    level = abs_history[i] + theta.beta1 * level;
  }
  return {1.0, level, theta.alpha1 * d1};
}

/// In-sample fitted conditional quantiles q~_t(theta), t = 1..n.
inline std::vector<double> fitted_quantiles(const QGarchParams& theta, std::span<const double> y) {
  std::vector<double> q = geometric_level(y, theta.beta1);
  for (double& v : q) v = theta.omega + theta.alpha1 * v;
  return q;
}

/// One-step-ahead forecast q~_{n+1}(theta) from the full history y_1..y_n.
inline double forecast_quantile(const QGarchParams& theta, std::span<const double> y) {
  double s = 0.0;
  for (double v : y) s = std::abs(v) + theta.beta1 * s;
  return theta.omega + theta.alpha1 * s;
}

}  // namespace qgarch

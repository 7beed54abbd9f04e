#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qgarch/qgarch.hpp"

namespace oracle {

// Direct truncated sum omega + alpha sum_{j=1}^{t-1} beta^{j-1} |y_{t-j}| (t is 1-based).
inline double direct_quantile(const qgarch::QGarchParams& th, std::span<const double> y, std::size_t t) {
  double s = 0.0;
  for (std::size_t j = 1; j < t; ++j) s += std::pow(th.beta1, static_cast<double>(j - 1)) * std::abs(y[t - 1 - j]);
  return th.omega + th.alpha1 * s;
}

inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline bool rel_close(double a, double b, double rel, double abs_floor = 1e-9) {
  return std::abs(a - b) <= rel * std::max(std::abs(b), 1.0) || std::abs(a - b) <= abs_floor;
}

// Weighted check loss of a linear fit b over rows (x1[i], x2[i]).
inline double linear_loss(std::span<const double> y, std::span<const double> x1, std::span<const double> x2,
                          std::span<const double> w, double tau, double b1, double b2) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * qgarch::check_loss(tau, y[i] - b1 * x1[i] - b2 * x2[i]);
  return s;
}

// Minimum over all vertices (pairs of interpolated rows) of the two-regressor problem.
inline double brute_force_qr2(std::span<const double> y, std::span<const double> x1, std::span<const double> x2,
                              std::span<const double> w, double tau) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double det = x1[i] * x2[j] - x1[j] * x2[i];
      if (std::abs(det) < 1e-12) continue;
      const double b1 = (y[i] * x2[j] - y[j] * x2[i]) / det;
      const double b2 = (x1[i] * y[j] - x1[j] * y[i]) / det;
      best = std::min(best, linear_loss(y, x1, x2, w, tau, b1, b2));
    }
  return best;
}

// Weighted tau-quantile minimizing sum w rho_tau(y - q): the smallest order
// statistic whose cumulative weight reaches tau * W.
inline double weighted_quantile(std::span<const double> y, std::span<const double> w, double tau) {
  std::vector<std::size_t> idx(y.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
  double total = 0.0;
  for (double v : w) total += v;
  double acc = 0.0;
  for (std::size_t i : idx) {
    acc += w[i];
    if (acc >= tau * total) return y[i];
  }
  return y[idx.back()];
}

// n/(n-d) n^{-1} sum_t sum_s K((t-s)/B) X_t X_s'.
inline Eigen::MatrixXd brute_force_hac(const Eigen::MatrixXd& X, double B, int d) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  for (Eigen::Index t = 0; t < n; ++t)
    for (Eigen::Index u = 0; u < n; ++u)
      s += qgarch::qs_kernel(static_cast<double>(t - u) / B) * X.row(t).transpose() * X.row(u);
  return s / static_cast<double>(n - d);
}

inline std::vector<double> normal_sample(std::size_t n, std::uint64_t seed) {
  qgarch::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = qgarch::normal_quantile(rng.uniform());
  return v;
}

}  // namespace oracle

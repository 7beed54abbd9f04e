#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qgarch/error.hpp"
#include "qgarch/loss.hpp"
#include "qgarch/stats.hpp"
#include "qgarch/types.hpp"

namespace qgarch {

/// Linear GARCH(1,1) scale model h_t = a0 + a1 |y_{t-1}| + b1 h_{t-1} fitted by
/// Gaussian QMLE, with empirical quantiles of the residuals y_t / h_t.
struct FhsModel {
  double a0 = 0.0;
  double a1 = 0.0;
  double b1 = 0.0;
  double h1 = 0.0;  // initial scale
  double neg_loglik = 0.0;
  std::vector<double> scale;      // h_t, t = 1..n
  std::vector<double> residuals;  // y_t / h_t
  double h_next = 0.0;            // h_{n+1}

  double residual_quantile(double tau) const { return empirical_quantile(residuals, tau); }
  double forecast(double tau) const { return residual_quantile(tau) * h_next; }
};

/// Scale path for given coefficients: h_1 = h1, h_t = a0 + a1 |y_{t-1}| + b1 h_{t-1}.
/// The returned vector has n + 1 entries; the last is the one-step forecast.
inline std::vector<double> fhs_scale(std::span<const double> y, double a0, double a1, double b1, double h1) {
  std::vector<double> h(y.size() + 1);
  h[0] = h1;
  for (std::size_t t = 1; t <= y.size(); ++t) h[t] = a0 + a1 * std::abs(y[t - 1]) + b1 * h[t - 1];
  return h;
}

namespace detail {

struct FhsProfile {
  double a0 = 0.0;
  double a1 = 0.0;
  double nll = std::numeric_limits<double>::infinity();
};

// Gaussian QMLE in (a0, a1) for fixed b1 by projected Fisher scoring; h_t is
// linear in (a0, a1): h_t = a0 A_t + a1 B_t + C_t.
inline FhsProfile fhs_profile(std::span<const double> y, double b1, double h1, FhsProfile start) {
  const std::size_t n = y.size();
  std::vector<double> A(n);
  std::vector<double> B(n);
  std::vector<double> C(n);
  A[0] = 0.0;
  B[0] = 0.0;
  C[0] = h1;
  for (std::size_t t = 1; t < n; ++t) {
    A[t] = 1.0 + b1 * A[t - 1];
    B[t] = std::abs(y[t - 1]) + b1 * B[t - 1];
    C[t] = b1 * C[t - 1];
  }
  const double floor0 = 1e-8 * h1;
  auto nll = [&](double a0, double a1) {
    double s = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double h = a0 * A[t] + a1 * B[t] + C[t];
      if (!(h > 0.0)) return std::numeric_limits<double>::infinity();
      s += std::log(h) + y[t] * y[t] / (2.0 * h * h);
    }
    return s;
  };
  double a0 = std::max(start.a0, floor0);
  double a1 = std::max(start.a1, 0.0);
  double f = nll(a0, a1);
  for (int it = 0; it < 200; ++it) {
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
    for (std::size_t t = 0; t < n; ++t) {
      const double h = a0 * A[t] + a1 * B[t] + C[t];
      const Eigen::Vector2d z(A[t], B[t]);
      g += (1.0 / h - y[t] * y[t] / (h * h * h)) * z;
      info += (2.0 / (h * h)) * z * z.transpose();
    }
    info.diagonal().array() += 1e-12 * (info.diagonal().array().abs() + 1.0);
    const Eigen::Vector2d step = info.ldlt().solve(g);
    double s = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, s *= 0.5) {
      const double n0 = std::max(a0 - s * step(0), floor0);
      const double n1 = std::max(a1 - s * step(1), 0.0);
      const double fn = nll(n0, n1);
      if (fn <= f - 1e-4 * s * std::abs(g.dot(step)) || (fn < f && ls > 30)) {
        moved = std::abs(n0 - a0) > 1e-12 * (1.0 + a0) || std::abs(n1 - a1) > 1e-12 * (1.0 + a1);
        const double rel = (f - fn) / (1.0 + std::abs(f));
        a0 = n0;
        a1 = n1;
        f = fn;
        if (rel < 1e-13) moved = false;
        break;
      }
    }
    if (!moved) break;
  }
  return {a0, a1, f};
}

}  // namespace detail

/// Gaussian QMLE of the linear GARCH(1,1) scale model: b1 profiled over a grid
/// then golden section; (a0, a1) by projected Fisher scoring with a0 > 0, a1 >= 0.
inline FhsModel fhs_fit(const ReturnSeries& series) {
  const std::span<const double> y = series.values();
  const std::size_t n = y.size();
  detail::require(n >= 200, "fhs_fit: at least 200 observations are required");
  double mabs = 0.0;
  for (double v : y) mabs += std::abs(v);
  mabs /= static_cast<double>(n);
  if (!(mabs > 0.0)) throw NumericalError("fhs_fit: degenerate series (all observations are zero)");
  const double h1 = mabs / std::sqrt(2.0 / std::numbers::pi);

  std::vector<double> grid{0.0};
  for (int i = 1; i <= 49; ++i) grid.push_back(0.02 * i);
  detail::FhsProfile start{h1 * 0.1, 0.05, 0.0};
  std::size_t bi = 0;
  detail::FhsProfile best;
  detail::FhsProfile prev = start;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    detail::FhsProfile p = detail::fhs_profile(y, grid[i], h1, {std::max(prev.a0, h1 * 1e-3), prev.a1, 0.0});
    if (std::isfinite(p.nll)) prev = p;
    if (p.nll < best.nll) {
      best = p;
      bi = i;
    }
  }
  if (!std::isfinite(best.nll)) throw NumericalError("fhs_fit: quasi-likelihood is not finite on the b1 grid");
  double best_b = grid[bi];
  double lo = bi > 0 ? grid[bi - 1] : 0.0;
  double hi = bi + 1 < grid.size() ? grid[bi + 1] : 1.0 - kBoxEps;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - gr * (hi - lo);
  double d = lo + gr * (hi - lo);
  detail::FhsProfile pc = detail::fhs_profile(y, c, h1, best);
  detail::FhsProfile pd = detail::fhs_profile(y, d, h1, best);
  for (int it = 0; it < 40; ++it) {
    if (pc.nll < best.nll) {
      best = pc;
      best_b = c;
    }
    if (pd.nll < best.nll) {
      best = pd;
      best_b = d;
    }
    if (pc.nll <= pd.nll) {
      hi = d;
      d = c;
      pd = pc;
      c = hi - gr * (hi - lo);
      pc = detail::fhs_profile(y, c, h1, pd);
    } else {
      lo = c;
      c = d;
      pc = pd;
      d = lo + gr * (hi - lo);
      pd = detail::fhs_profile(y, d, h1, pc);
    }
  }

  FhsModel m;
  m.a0 = best.a0;
  m.a1 = best.a1;
  m.b1 = best_b;
  m.h1 = h1;
  m.neg_loglik = best.nll;
  std::vector<double> h = fhs_scale(y, m.a0, m.a1, m.b1, h1);
  m.h_next = h.back();
  h.pop_back();
  m.residuals.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    if (!(h[t] > 0.0) || !std::isfinite(h[t])) throw NumericalError("fhs_fit: nonpositive fitted scale");
    m.residuals[t] = y[t] / h[t];
  }
  m.scale = std::move(h);
  return m;
}

}  // namespace qgarch

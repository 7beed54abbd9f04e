#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qgarch/error.hpp"
#include "qgarch/linear_qr.hpp"
#include "qgarch/loss.hpp"
#include "qgarch/recursion.hpp"
#include "qgarch/stats.hpp"
#include "qgarch/types.hpp"
#include "qgarch/weights.hpp"

namespace qgarch {

/// Bounds for (omega, alpha1, beta1). A coordinate with lower == upper is held fixed.
struct Box {
  std::array<double, 3> lower{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0.0};
  std::array<double, 3> upper{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                              1.0 - kBoxEps};

  bool fixed(int k) const { return lower[k] == upper[k]; }
  void fix(int k, double v) { lower[k] = upper[k] = v; }

  void validate() const {
    for (int k = 0; k < 3; ++k)
      detail::require(lower[k] <= upper[k], "Box: lower bound exceeds upper bound");
    detail::require(lower[2] >= 0.0 && upper[2] <= 1.0 - kBoxEps, "Box: beta1 bounds must lie in [0, 1 - 1e-6]");
  }
};

inline std::vector<double> default_beta_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 49; ++i) g.push_back(0.02 * i);
  return g;
}

struct QrFitConfig {
  double tau = 0.05;
  std::vector<double> weights;  // empty: self-weights
  SelfWeightConfig weight_cfg{};
  std::vector<double> beta_grid = default_beta_grid();
  int refine_iters = 40;
  Box box{};
};

enum class BandwidthRule { Bofinger, HallSheather };

inline const char* to_string(BandwidthRule r) { return r == BandwidthRule::Bofinger ? "bofinger" : "hall-sheather"; }

struct QuantileFit {
  double tau = 0.0;
  QGarchParams theta_hat{};
  double objective_value = 0.0;
  std::optional<Eigen::Matrix3d> cov;  // covariance of theta_hat, i.e. Sigma / n
  BandwidthRule bandwidth_rule = BandwidthRule::HallSheather;
  double bandwidth = 0.0;
  std::uint64_t weights_id = 0;
  std::size_t density_dropped = 0;  // observations left out of the Omega_1 average
  bool ill_conditioned = false;

  std::array<double, 3> asd() const {
    detail::require(cov.has_value(), "QuantileFit: covariance not computed");
    return {std::sqrt(std::max((*cov)(0, 0), 0.0)), std::sqrt(std::max((*cov)(1, 1), 0.0)),
            std::sqrt(std::max((*cov)(2, 2), 0.0))};
  }
};

/// sum_t w_t rho_tau(y_t - q_t).
inline double weighted_check_loss(std::span<const double> y, std::span<const double> q, std::span<const double> w,
                                  double tau) {
  detail::check_tau(tau);
  double s = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double r = y[t] - q[t];
    s += w[t] * (r < 0.0 ? r * (tau - 1.0) : r * tau);
  }
  return s;
}

namespace detail {

struct InnerSolution {
  double omega = 0.0;
  double alpha = 0.0;
  double objective = std::numeric_limits<double>::infinity();
  std::array<std::size_t, 2> basis{};
  bool has_basis = false;
};

inline double profile_loss(std::span<const double> y, std::span<const double> x, std::span<const double> w,
                           double tau, double omega, double alpha) {
  double s = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double r = y[t] - omega - alpha * x[t];
    s += w[t] * (r < 0.0 ? r * (tau - 1.0) : r * tau);
  }
  return s;
}

inline double clamp_to(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// One free coefficient: the other one is held at `held`. k = 0 solves for omega, k = 1 for alpha.
inline InnerSolution solve_one(std::span<const double> y, std::span<const double> x, std::span<const double> w,
                               double tau, const Box& box, int k, double held) {
  const std::size_t n = y.size();
  std::vector<double> resp(n);
  std::vector<double> reg(n);
  for (std::size_t t = 0; t < n; ++t) {
    resp[t] = k == 0 ? y[t] - held * x[t] : y[t] - held;
    reg[t] = k == 0 ? 1.0 : x[t];
  }
  const double tau_arr[1] = {tau};
  LinearQrData<1> d{resp, {std::span<const double>(reg)}, w, tau_arr};
  const auto sol = solve_linear_qr<1>(d);
  const double v = clamp_to(sol.coef(0), box.lower[k], box.upper[k]);
  InnerSolution out;
  out.omega = k == 0 ? v : held;
  out.alpha = k == 0 ? held : v;
  out.objective = profile_loss(y, x, w, tau, out.omega, out.alpha);
  return out;
}

// Exact minimizer of sum w rho_tau(y - omega - alpha x) over the (omega, alpha) box.
inline InnerSolution solve_inner(std::span<const double> y, std::span<const double> x, std::span<const double> w,
                                 double tau, const Box& box, const InnerSolution* warm) {
  const bool fo = box.fixed(0);
  const bool fa = box.fixed(1);
  if (fo && fa) {
    InnerSolution s;
    s.omega = box.lower[0];
    s.alpha = box.lower[1];
    s.objective = profile_loss(y, x, w, tau, s.omega, s.alpha);
    return s;
  }
  if (fa) return solve_one(y, x, w, tau, box, 0, box.lower[1]);
  if (fo) return solve_one(y, x, w, tau, box, 1, box.lower[0]);

  static thread_local std::vector<double> ones;
  if (ones.size() != y.size()) ones.assign(y.size(), 1.0);
  const double tau_arr[1] = {tau};
  LinearQrData<2> d{y, {std::span<const double>(ones), x}, w, tau_arr};
  const std::array<std::size_t, 2>* start = (warm != nullptr && warm->has_basis) ? &warm->basis : nullptr;
  const auto sol = solve_linear_qr<2>(d, start);
  InnerSolution best;
  best.omega = sol.coef(0);
  best.alpha = sol.coef(1);
  best.objective = sol.objective;
  best.basis = sol.basis;
  best.has_basis = true;
  const bool feasible = best.omega >= box.lower[0] && best.omega <= box.upper[0] && best.alpha >= box.lower[1] &&
                        best.alpha <= box.upper[1];
  if (feasible) return best;

  // The constrained optimum lies on a face: solve each finite face in one dimension.
  InnerSolution cand;
  cand.objective = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 2; ++k) {
    for (double bound : {box.lower[k], box.upper[k]}) {
      if (!std::isfinite(bound)) continue;
      const InnerSolution s = solve_one(y, x, w, tau, box, 1 - k, bound);
      if (s.objective < cand.objective) cand = s;
    }
  }
  if (!std::isfinite(cand.objective)) throw NumericalError("qr_fit: no feasible inner solution in the box");
  cand.basis = best.basis;
  cand.has_basis = true;
  return cand;
}

}  // namespace detail

/// Self-weighted quantile regression fit at one level. For each beta1 the model
/// is linear in (omega, alpha1); that problem is solved exactly, the profile over
/// the beta1 grid is scanned, and the best bracket is refined by golden section.
inline QuantileFit qr_fit(const ReturnSeries& series, const QrFitConfig& cfg) {
  detail::check_tau(cfg.tau);
  cfg.box.validate();
  const std::size_t n = series.size();
  detail::require(n >= 30, "qr_fit: at least 30 observations are required");
  const std::span<const double> y = series.values();
  std::vector<double> w = cfg.weights.empty() ? compute_self_weights(y, cfg.weight_cfg) : cfg.weights;
  detail::require(w.size() == n, "qr_fit: weights length must equal the series length");

  bool any_nonzero = false;
  for (double v : y) any_nonzero = any_nonzero || v != 0.0;
  if (!any_nonzero) throw NumericalError("qr_fit: degenerate series (all observations are zero)");

  const double blo = cfg.box.lower[2];
  const double bhi = cfg.box.upper[2];
  std::vector<double> grid;
  if (cfg.box.fixed(2)) {
    grid.push_back(blo);
  } else {
    for (double b : cfg.beta_grid) {
      detail::require(b >= 0.0 && b < 1.0 - kBoxEps + 1e-15, "qr_fit: beta grid must lie in [0, 1)");
      if (b >= blo && b <= bhi) grid.push_back(b);
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    if (grid.empty())
      for (int i = 0; i <= 10; ++i) grid.push_back(blo + (bhi - blo) * i / 10.0);
  }

  std::vector<double> x;
  detail::InnerSolution warm;
  auto evaluate = [&](double beta) {
    geometric_level_into(y, beta, x);
    detail::InnerSolution s = detail::solve_inner(y, x, w, cfg.tau, cfg.box, &warm);
    if (s.has_basis) warm = s;
    return s;
  };

  double best_beta = grid.front();
  detail::InnerSolution best = evaluate(best_beta);
  std::size_t best_idx = 0;
  auto better = [&](double obj, double beta) {
    const double tol = 1e-12 * std::max(1.0, std::abs(best.objective));
    return obj < best.objective - tol || (obj <= best.objective + tol && beta < best_beta);
  };
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const detail::InnerSolution s = evaluate(grid[i]);
    if (better(s.objective, grid[i])) {
      best = s;
      best_beta = grid[i];
      best_idx = i;
    }
  }

  if (!cfg.box.fixed(2) && cfg.refine_iters > 0) {
    double a = best_idx > 0 ? grid[best_idx - 1] : blo;
    double b = best_idx + 1 < grid.size() ? grid[best_idx + 1] : bhi;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    warm = best;
    detail::InnerSolution sc = evaluate(c);
    detail::InnerSolution sd = evaluate(d);
    int evals = 2;
    auto consider = [&](const detail::InnerSolution& s, double beta) {
      if (better(s.objective, beta)) {
        best = s;
        best_beta = beta;
      }
    };
    consider(sc, c);
    consider(sd, d);
    while (evals < cfg.refine_iters) {
      if (sc.objective <= sd.objective) {
        b = d;
        d = c;
        sd = sc;
        c = b - g * (b - a);
        sc = evaluate(c);
        consider(sc, c);
      } else {
        a = c;
        c = d;
        sc = sd;
        d = a + g * (b - a);
        sd = evaluate(d);
        consider(sd, d);
      }
      ++evals;
    }
  }

  QuantileFit fit;
  fit.tau = cfg.tau;
  fit.theta_hat = {best.omega, best.alpha, best_beta};
  fit.objective_value = best.objective;
  fit.weights_id = weights_id(w);
  return fit;
}

/// Bofinger bandwidth n^{-1/5} {4.5 f^4(z) / (2 z^2 + 1)^2}^{1/5}, z = Phi^{-1}(tau).
inline double bandwidth_bofinger(double tau, std::size_t n) {
  detail::check_tau(tau);
  detail::require(n >= 2, "bandwidth: n must be at least 2");
  const double z = normal_quantile(tau);
  const double f = normal_pdf(z);
  const double q = 2.0 * z * z + 1.0;
  return std::pow(static_cast<double>(n), -0.2) * std::pow(4.5 * std::pow(f, 4) / (q * q), 0.2);
}

/// Hall-Sheather bandwidth n^{-1/3} z_a^{2/3} {1.5 f^2(z) / (2 z^2 + 1)}^{1/3}, z_a = Phi^{-1}(1 - alpha/2).
inline double bandwidth_hall_sheather(double tau, std::size_t n, double alpha = 0.05) {
  detail::check_tau(tau);
  detail::require(n >= 2, "bandwidth: n must be at least 2");
  detail::require(alpha > 0.0 && alpha < 1.0, "bandwidth: alpha must lie in (0,1)");
  const double z = normal_quantile(tau);
  const double za = normal_quantile(1.0 - alpha / 2.0);
  const double f = normal_pdf(z);
  return std::pow(static_cast<double>(n), -1.0 / 3.0) * std::pow(za, 2.0 / 3.0) *
         std::pow(1.5 * f * f / (2.0 * z * z + 1.0), 1.0 / 3.0);
}

inline double bandwidth(BandwidthRule rule, double tau, std::size_t n) {
  return rule == BandwidthRule::Bofinger ? bandwidth_bofinger(tau, n) : bandwidth_hall_sheather(tau, n);
}

/// Bandwidth shrunk so that tau - l and tau + l stay inside (0,1).
inline double usable_bandwidth(double tau, double ell) {
  if (tau - ell <= 0.0 || tau + ell >= 1.0) return 0.5 * std::min(tau, 1.0 - tau);
  return ell;
}

/// Monotone rearrangement of values indexed by increasing levels: the sorted values.
inline std::vector<double> rearrange(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return values;
}

inline constexpr double kDensityCap = 1e3;

struct SandwichParts {
  Eigen::Matrix3d omega0 = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d omega1 = Eigen::Matrix3d::Zero();
  std::size_t dropped = 0;
  double condition = 0.0;  // of omega1
};

/// Sample averages Omega_0 = n^{-1} sum w^2 qdot qdot' and
/// Omega_1 = n^{-1} sum f w qdot qdot', with the conditional density estimated by
/// 2 l / (Q_{tau+l} - Q_{tau-l}) after sorting the three fitted quantiles.
inline SandwichParts qr_sandwich(std::span<const double> y, std::span<const double> w, const QGarchParams& theta,
                                 const QGarchParams& theta_lo, const QGarchParams& theta_hi, double ell) {
  const std::size_t n = y.size();
  detail::require(w.size() == n, "qr covariance: weights length mismatch");
  detail::require(ell > 0.0, "qr covariance: bandwidth must be positive");
  const GeometricSums gs = geometric_sums(y, theta.beta1, 1);
  const std::vector<double> xlo = geometric_level(y, theta_lo.beta1);
  const std::vector<double> xhi = geometric_level(y, theta_hi.beta1);
  SandwichParts p;
  for (std::size_t t = 0; t < n; ++t) {
    const Eigen::Vector3d qd(1.0, gs.level[t], theta.alpha1 * gs.d1[t]);
    const Eigen::Matrix3d outer = qd * qd.transpose();
    p.omega0 += w[t] * w[t] * outer;
    std::array<double, 3> trip{theta_lo.omega + theta_lo.alpha1 * xlo[t], theta.omega + theta.alpha1 * gs.level[t],
                               theta_hi.omega + theta_hi.alpha1 * xhi[t]};
    std::sort(trip.begin(), trip.end());
    const double spread = trip[2] - trip[0];
    if (!(spread > 0.0)) {
      ++p.dropped;
      continue;
    }
    const double f = std::min(std::max(2.0 * ell / spread, 0.0), kDensityCap);
    p.omega1 += f * w[t] * outer;
  }
  p.omega0 /= static_cast<double>(n);
  p.omega1 /= static_cast<double>(n);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(p.omega1);
  const auto sv = svd.singularValues();
  p.condition = sv(2) > 0.0 ? sv(0) / sv(2) : std::numeric_limits<double>::infinity();
  return p;
}

/// Sigma = tau(1-tau) Omega_1^{-1} Omega_0 Omega_1^{-1}; returns Sigma / n,
/// the covariance of the estimator itself.
inline Eigen::Matrix3d qr_asymptotic_cov(const SandwichParts& p, double tau, std::size_t n) {
  const auto lu = p.omega1.fullPivLu();
  if (!lu.isInvertible()) throw NumericalError("qr covariance: Omega_1 is singular");
  const Eigen::Matrix3d a = lu.solve(p.omega0);
  Eigen::Matrix3d sigma = tau * (1.0 - tau) * lu.solve(a.transpose()).transpose();
  sigma = 0.5 * (sigma + sigma.transpose());
  return sigma / static_cast<double>(n);
}

/// Resolves the weights of a config against a series (self-weights when empty).
inline std::vector<double> resolve_weights(const ReturnSeries& series, const QrFitConfig& cfg) {
  if (cfg.weights.empty()) return compute_self_weights(series.values(), cfg.weight_cfg);
  detail::require(cfg.weights.size() == series.size(), "weights length must equal the series length");
  return cfg.weights;
}

/// Adds the sandwich covariance to `fit` using auxiliary fits at tau -/+ l.
inline void attach_covariance(const ReturnSeries& series, const QrFitConfig& cfg, QuantileFit& fit,
                              BandwidthRule rule = BandwidthRule::HallSheather) {
  QrFitConfig c = cfg;
  if (c.weights.empty()) c.weights = compute_self_weights(series.values(), cfg.weight_cfg);
  const double ell = usable_bandwidth(fit.tau, bandwidth(rule, fit.tau, series.size()));
  c.tau = fit.tau - ell;
  const QuantileFit lo = qr_fit(series, c);
  c.tau = fit.tau + ell;
  const QuantileFit hi = qr_fit(series, c);
  const SandwichParts p = qr_sandwich(series.values(), c.weights, fit.theta_hat, lo.theta_hat, hi.theta_hat, ell);
  fit.cov = qr_asymptotic_cov(p, fit.tau, series.size());
  fit.bandwidth_rule = rule;
  fit.bandwidth = ell;
  fit.density_dropped = p.dropped;
  fit.ill_conditioned = p.condition > 1e12;
}

inline QuantileFit qr_fit_with_cov(const ReturnSeries& series, const QrFitConfig& cfg,
                                   BandwidthRule rule = BandwidthRule::HallSheather) {
  QrFitConfig c = cfg;
  if (c.weights.empty()) c.weights = compute_self_weights(series.values(), cfg.weight_cfg);
  QuantileFit fit = qr_fit(series, c);
  attach_covariance(series, c, fit, rule);
  return fit;
}

/// Independent fits at increasing levels sharing one set of weights.
inline std::vector<QuantileFit> multi_tau_fit(const ReturnSeries& series, std::span<const double> taus,
                                              const QrFitConfig& cfg) {
  detail::require(!taus.empty(), "multi_tau_fit: no levels given");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    detail::check_tau(taus[i]);
    if (i > 0) detail::require(taus[i] > taus[i - 1], "multi_tau_fit: levels must be strictly increasing");
  }
  QrFitConfig c = cfg;
  if (c.weights.empty()) c.weights = compute_self_weights(series.values(), cfg.weight_cfg);
  std::vector<QuantileFit> out;
  out.reserve(taus.size());
  for (double tau : taus) {
    c.tau = tau;
    try {
      out.push_back(qr_fit(series, c));
    } catch (const NumericalError& e) {
      throw NumericalError("multi_tau_fit: fit at tau=" + std::to_string(tau) + " failed: " + e.what());
    }
  }
  return out;
}

}  // namespace qgarch

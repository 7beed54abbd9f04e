#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qgarch/error.hpp"
#include "qgarch/linear_qr.hpp"
#include "qgarch/loss.hpp"
#include "qgarch/parallel.hpp"
#include "qgarch/qr.hpp"
#include "qgarch/recursion.hpp"
#include "qgarch/tukey.hpp"
#include "qgarch/types.hpp"
#include "qgarch/weights.hpp"

namespace qgarch {

inline std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int i = -18; i <= 18; ++i)
    if (i != 0) g.push_back(0.05 * i);
  return g;
}

/// Lower bound used for a0 / (1 - b1) in the inner problem.
inline constexpr double kCqrA0Floor = 1e-8;

struct CqrConfig {
  double tau0 = 0.005;
  double h = 0.1;
  int K = 19;
  std::vector<double> weights;  // empty: self-weights
  SelfWeightConfig weight_cfg{};
  std::vector<double> b1_grid = default_beta_grid();
  std::vector<double> lambda_grid = default_lambda_grid();
  int refine_rounds = 3;
  bool a1_fixed_zero = false;  // constant-scale model
};

struct CqrFit {
  TukeyGarchParams phi_hat{};
  double objective_value = 0.0;
  std::optional<Eigen::Matrix4d> cov;  // covariance of phi_hat, i.e. Sigma / n
  double hac_bandwidth = 0.0;
  std::vector<double> tau_levels;
  std::uint64_t weights_id = 0;
};

/// tau_k = tau0 + h (k-1)/(K-1) below the median, tau0 - h (k-1)/(K-1) above it.
inline std::vector<double> cqr_levels(double tau0, double h, int K) {
  detail::check_tau(tau0);
  detail::require(K >= 3, "CQR: K must be at least 3");
  detail::require(h > 0.0 && std::isfinite(h), "CQR: bandwidth h must be positive");
  detail::require(tau0 != 0.5, "CQR: tau0 must differ from 0.5");
  const double sign = tau0 < 0.5 ? 1.0 : -1.0;
  std::vector<double> t(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    t[static_cast<std::size_t>(k)] = tau0 + sign * h * k / (K - 1);
    const double v = t[static_cast<std::size_t>(k)];
    detail::require(v > 0.0 && v < 1.0 && (v - 0.5) * (tau0 - 0.5) > 0.0,
                    "CQR: levels must stay in (0,1) on one side of 0.5 (tau0=" + std::to_string(tau0) +
                        ", h=" + std::to_string(h) + ")");
  }
  return t;
}

/// theta = (a0 Q_tau(lambda) / (1 - b1), a1 Q_tau(lambda), b1).
inline QGarchParams g_transform(const TukeyGarchParams& phi, double tau) {
  const double q = tukey_quantile(tau, phi.lambda);
  return {phi.a0 * q / (1.0 - phi.b1), phi.a1 * q, phi.b1};
}

/// Jacobian of g_transform with respect to (a0, a1, b1, lambda).
inline Eigen::Matrix<double, 3, 4> g_jacobian(const TukeyGarchParams& phi, double tau) {
  const TukeyQuantile q = tukey_quantile_derivs(tau, phi.lambda);
  const double c = 1.0 / (1.0 - phi.b1);
  Eigen::Matrix<double, 3, 4> j;
  j << q.value * c, 0.0, phi.a0 * q.value * c * c, phi.a0 * q.d1 * c,
      0.0, q.value, 0.0, phi.a1 * q.d1,
      0.0, 0.0, 1.0, 0.0;
  return j;
}

/// Scale h_t(phi) = a0 / (1 - b1) + a1 sum_{j>=1} b1^{j-1} |y_{t-j}|, t = 1..n.
inline std::vector<double> cqr_scale(const TukeyGarchParams& phi, std::span<const double> y) {
  std::vector<double> h = geometric_level(y, phi.b1);
  const double c = phi.a0 / (1.0 - phi.b1);
  for (double& v : h) v = c + phi.a1 * v;
  return h;
}

/// Composite objective sum_t sum_k w_t rho_{tau_k}(y_t - Q_{tau_k}(lambda) h_t(phi)).
inline double cqr_objective(std::span<const double> y, std::span<const double> w, std::span<const double> levels,
                            const TukeyGarchParams& phi) {
  detail::require(w.size() == y.size(), "CQR: weights length mismatch");
  const std::vector<double> h = cqr_scale(phi, y);
  double s = 0.0;
  for (double tau : levels) {
    const double q = tukey_quantile(tau, phi.lambda);
    for (std::size_t t = 0; t < y.size(); ++t) s += w[t] * check_loss(tau, y[t] - q * h[t]);
  }
  return s;
}

namespace detail {

// Stacked rows i = k n + t of the composite problem for fixed (b1, lambda):
// response y_t, regressors (Q_k, Q_k x_t), weight w_t, level tau_k.
struct CqrStack {
  std::vector<double> resp;
  std::vector<double> w;
  std::vector<double> tau;
  std::vector<double> r0;
  std::vector<double> r1;
  std::vector<double> x;
  std::vector<double> tmp;
};

struct CqrInner {
  double a0p = 0.0;  // a0 / (1 - b1)
  double a1 = 0.0;
  double objective = std::numeric_limits<double>::infinity();
  std::array<std::size_t, 2> basis{};
  bool has_basis = false;
};

inline CqrStack make_stack(std::span<const double> y, std::span<const double> w, std::span<const double> levels) {
  const std::size_t n = y.size();
  const std::size_t N = n * levels.size();
  CqrStack s;
  s.resp.resize(N);
  s.w.resize(N);
  s.tau.resize(N);
  s.r0.resize(N);
  s.r1.resize(N);
  s.tmp.resize(N);
  for (std::size_t k = 0; k < levels.size(); ++k)
    for (std::size_t t = 0; t < n; ++t) {
      s.resp[k * n + t] = y[t];
      s.w[k * n + t] = w[t];
      s.tau[k * n + t] = levels[k];
    }
  return s;
}

inline double stack_loss(const CqrStack& s, double a0p, double a1) {
  double o = 0.0;
  for (std::size_t i = 0; i < s.resp.size(); ++i)
    o += s.w[i] * check_loss(s.tau[i], s.resp[i] - a0p * s.r0[i] - a1 * s.r1[i]);
  return o;
}

// One coordinate free, the other held at `held`; result clamped to its bound.
inline CqrInner cqr_face(CqrStack& s, int free_k, double held) {
  const std::vector<double>& fixed_reg = free_k == 0 ? s.r1 : s.r0;
  for (std::size_t i = 0; i < s.resp.size(); ++i) s.tmp[i] = s.resp[i] - held * fixed_reg[i];
  LinearQrData<1> d{s.tmp, {std::span<const double>(free_k == 0 ? s.r0 : s.r1)}, s.w, s.tau};
  const auto sol = solve_linear_qr<1>(d);
  const double lo = free_k == 0 ? kCqrA0Floor : 0.0;
  CqrInner out;
  const double v = std::max(sol.coef(0), lo);
  out.a0p = free_k == 0 ? v : held;
  out.a1 = free_k == 0 ? held : v;
  out.objective = stack_loss(s, out.a0p, out.a1);
  return out;
}

// Exact constrained inner solve at (b1, lambda); fills r0, r1 from x and the levels.
inline CqrInner cqr_inner(CqrStack& s, std::span<const double> y, std::span<const double> levels, double b1,
                          double lambda, bool a1_zero, const CqrInner* warm) {
  const std::size_t n = y.size();
  geometric_level_into(y, b1, s.x);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const double q = tukey_quantile(levels[k], lambda);
    for (std::size_t t = 0; t < n; ++t) {
      s.r0[k * n + t] = q;
      s.r1[k * n + t] = q * s.x[t];
    }
  }
  if (a1_zero) return cqr_face(s, 0, 0.0);
  LinearQrData<2> d{s.resp, {std::span<const double>(s.r0), std::span<const double>(s.r1)}, s.w, s.tau};
  const std::array<std::size_t, 2>* start = (warm != nullptr && warm->has_basis) ? &warm->basis : nullptr;
  const auto sol = solve_linear_qr<2>(d, start);
  CqrInner best;
  best.a0p = sol.coef(0);
  best.a1 = sol.coef(1);
  best.objective = sol.objective;
  best.basis = sol.basis;
  best.has_basis = true;
  if (best.a0p >= kCqrA0Floor && best.a1 >= 0.0) return best;
  // Convex objective on a quadrant: the optimum lies on one of the two edges.
  CqrInner e0 = cqr_face(s, 0, 0.0);
  CqrInner e1 = cqr_face(s, 1, kCqrA0Floor);
  CqrInner out = e0.objective <= e1.objective ? e0 : e1;
  out.basis = best.basis;
  out.has_basis = true;
  return out;
}

}  // namespace detail

/// Weighted composite quantile regression over the K levels: 2-D grid over
/// (b1, lambda) with the exact inner problem in (a0 / (1 - b1), a1), then
/// `refine_rounds` rounds of a 3x3 neighbourhood search with halved steps.
inline CqrFit cqr_fit(const ReturnSeries& series, const CqrConfig& cfg) {
  const std::size_t n = series.size();
  detail::require(n >= 100, "cqr_fit: at least 100 observations are required");
  const std::vector<double> levels = cqr_levels(cfg.tau0, cfg.h, cfg.K);
  detail::require(!cfg.b1_grid.empty() && !cfg.lambda_grid.empty(), "cqr_fit: empty search grid");
  for (double b : cfg.b1_grid) detail::require(b >= 0.0 && b <= 1.0 - kBoxEps, "cqr_fit: b1 grid must lie in [0, 1)");
  for (double l : cfg.lambda_grid)
    detail::require(std::isfinite(l) && std::abs(l) >= 1e-8, "cqr_fit: lambda grid must exclude 0");
  detail::require(cfg.refine_rounds >= 0, "cqr_fit: refine_rounds must be nonnegative");

  const std::span<const double> y = series.values();
  bool any_nonzero = false;
  for (double v : y) any_nonzero = any_nonzero || v != 0.0;
  if (!any_nonzero) throw NumericalError("cqr_fit: degenerate series (all observations are zero)");
  const std::vector<double> w = cfg.weights.empty() ? compute_self_weights(y, cfg.weight_cfg) : cfg.weights;
  detail::require(w.size() == n, "cqr_fit: weights length must equal the series length");

  const std::size_t nb = cfg.b1_grid.size();
  const std::size_t nl = cfg.lambda_grid.size();
  std::vector<detail::CqrInner> cells(nb * nl);
  parallel_for(nb, [&](std::size_t i) {
    detail::CqrStack s = detail::make_stack(y, w, levels);
    const detail::CqrInner* warm = nullptr;
    for (std::size_t j = 0; j < nl; ++j) {
      cells[i * nl + j] =
          detail::cqr_inner(s, y, levels, cfg.b1_grid[i], cfg.lambda_grid[j], cfg.a1_fixed_zero, warm);
      warm = &cells[i * nl + j];
    }
  });

  double best_b = cfg.b1_grid[0];
  double best_l = cfg.lambda_grid[0];
  detail::CqrInner best = cells[0];
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nl; ++j) {
      const auto& c = cells[i * nl + j];
      if (c.objective < best.objective - 1e-12 * std::max(1.0, std::abs(best.objective))) {
        best = c;
        best_b = cfg.b1_grid[i];
        best_l = cfg.lambda_grid[j];
      }
    }

  auto spacing = [](std::vector<double> g, double fallback) {
    std::sort(g.begin(), g.end());
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < g.size(); ++i)
      if (g[i] > g[i - 1]) m = std::min(m, g[i] - g[i - 1]);
    return std::isfinite(m) ? m : fallback;
  };
  double step_b = spacing(cfg.b1_grid, 0.02);
  double step_l = spacing(cfg.lambda_grid, 0.05);
  detail::CqrStack s = detail::make_stack(y, w, levels);
  for (int round = 0; round < cfg.refine_rounds; ++round) {
    step_b *= 0.5;
    step_l *= 0.5;
    const double cb = best_b;
    const double cl = best_l;
    detail::CqrInner warm = best;
    for (int db = -1; db <= 1; ++db)
      for (int dl = -1; dl <= 1; ++dl) {
        if (db == 0 && dl == 0) continue;
        const double b = cb + db * step_b;
        const double l = cl + dl * step_l;
        if (b < 0.0 || b > 1.0 - kBoxEps || std::abs(l) < 1e-8) continue;
        const detail::CqrInner c = detail::cqr_inner(s, y, levels, b, l, cfg.a1_fixed_zero, &warm);
        if (c.has_basis) warm = c;
        if (c.objective < best.objective - 1e-12 * std::max(1.0, std::abs(best.objective))) {
          best = c;
          best_b = b;
          best_l = l;
        }
      }
  }

  CqrFit fit;
  fit.phi_hat = {best.a0p * (1.0 - best_b), best.a1, best_b, best_l};
  fit.objective_value = best.objective;
  fit.tau_levels = levels;
  fit.weights_id = weights_id(w);
  return fit;
}

/// Quadratic spectral kernel 25/(12 pi^2 x^2) [sin(6 pi x/5)/(6 pi x/5) - cos(6 pi x/5)].
inline double qs_kernel(double x) {
  const double z = 6.0 * std::numbers::pi * x / 5.0;
  const double c = 25.0 / (12.0 * std::numbers::pi * std::numbers::pi);
  if (std::abs(z) < 1e-3) {
    // sin z / z - cos z = z^2/3 - z^4/30 + ...
    const double z2 = z * z;
    return c * (36.0 * std::numbers::pi * std::numbers::pi / 25.0) * (1.0 / 3.0 - z2 / 30.0);
  }
  return c / (x * x) * (std::sin(z) / z - std::cos(z));
}

/// Kernel estimate n/(n-d) sum_{|l|<n} K(l/B) Gamma(l) of the long-run covariance
/// of the rows of X, Gamma(l) = n^{-1} sum_t X_t X_{t-l}'.
inline Eigen::MatrixXd hac_cov(const Eigen::MatrixXd& X, double B, int d = 4) {
  const Eigen::Index n = X.rows();
  detail::require(n > d, "HAC: need more rows than the parameter dimension");
  detail::require(B > 0.0 && std::isfinite(B), "HAC: bandwidth must be positive");
  Eigen::MatrixXd s = X.transpose() * X;
  for (Eigen::Index l = 1; l < n; ++l) {
    const double k = qs_kernel(static_cast<double>(l) / B);
    if (k == 0.0) continue;
    const Eigen::MatrixXd g = X.bottomRows(n - l).transpose() * X.topRows(n - l);
    s += k * (g + g.transpose());
  }
  s /= static_cast<double>(n);
  s *= static_cast<double>(n) / static_cast<double>(n - d);
  return 0.5 * (s + s.transpose());
}

/// QS bandwidth 1.3221 (n alpha(2))^{1/5} from per-column AR(1) coefficients
/// rho_i and innovation variances s2_i, floored at 1.
inline double qs_bandwidth(std::size_t n, std::span<const double> rho, std::span<const double> s2,
                           std::span<const double> iota = {}) {
  detail::require(rho.size() == s2.size() && !rho.empty(), "QS bandwidth: rho and s2 differ in length");
  detail::require(iota.empty() || iota.size() == rho.size(), "auto bandwidth: iota length mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double io = iota.empty() ? 1.0 : iota[i];
    const double s4 = s2[i] * s2[i];
    num += io * 4.0 * rho[i] * rho[i] * s4 / std::pow(1.0 - rho[i], 8);
    den += io * s4 / std::pow(1.0 - rho[i], 4);
  }
  if (!(den > 0.0)) throw NumericalError("auto bandwidth: degenerate AR(1) fits");
  return std::max(1.0, 1.3221 * std::pow(static_cast<double>(n) * num / den, 0.2));
}

/// Automatic QS bandwidth from least-squares AR(1) fits (no intercept) to each column of X.
inline double auto_bandwidth(const Eigen::MatrixXd& X, std::span<const double> iota = {}) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  detail::require(n >= 3, "auto bandwidth: need at least 3 rows");
  detail::require(iota.empty() || static_cast<Eigen::Index>(iota.size()) == p, "auto bandwidth: iota length mismatch");
  std::vector<double> rho(static_cast<std::size_t>(p));
  std::vector<double> s2(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) {
    const Eigen::VectorXd c = X.col(i);
    const double m = c.mean();
    if (!((c.array() - m).square().sum() > 0.0))
      throw NumericalError("auto bandwidth: column " + std::to_string(i) + " has zero variance");
    const Eigen::VectorXd cur = c.tail(n - 1);
    const Eigen::VectorXd lag = c.head(n - 1);
    const double ll = lag.squaredNorm();
    const double r = ll > 0.0 ? lag.dot(cur) / ll : 0.0;
    rho[static_cast<std::size_t>(i)] = r;
    s2[static_cast<std::size_t>(i)] = (cur - r * lag).squaredNorm() / static_cast<double>(n - 1);
  }
  return qs_bandwidth(static_cast<std::size_t>(n), rho, s2, iota);
}

/// First derivative of q_{t,tau}(phi) = Q_tau(lambda) h_t(phi) in (a0, a1, b1, lambda).
inline Eigen::Vector4d cqr_qdot(const TukeyQuantile& q, double a0, double a1, double b1, double level, double d1) {
  const double c = 1.0 / (1.0 - b1);
  const double h = a0 * c + a1 * level;
  return {q.value * c, q.value * level, q.value * (a0 * c * c + a1 * d1), q.d1 * h};
}

/// Second derivative of q_{t,tau}(phi).
inline Eigen::Matrix4d cqr_qddot(const TukeyQuantile& q, double a0, double a1, double b1, double level, double d1,
                                 double d2) {
  const double c = 1.0 / (1.0 - b1);
  const double h = a0 * c + a1 * level;
  const Eigen::Vector3d hd(c, level, a0 * c * c + a1 * d1);
  Eigen::Matrix3d hdd = Eigen::Matrix3d::Zero();
  hdd(0, 2) = hdd(2, 0) = c * c;
  hdd(1, 2) = hdd(2, 1) = d1;
  hdd(2, 2) = 2.0 * a0 * c * c * c + a1 * d2;
  Eigen::Matrix4d m;
  m.topLeftCorner<3, 3>() = q.value * hdd;
  m.topRightCorner<3, 1>() = q.d1 * hd;
  m.bottomLeftCorner<1, 3>() = q.d1 * hd.transpose();
  m(3, 3) = q.d2 * h;
  return m;
}

struct CqrCovariance {
  Eigen::Matrix4d sigma = Eigen::Matrix4d::Zero();  // asymptotic covariance of sqrt(n)(phi_hat - phi)
  Eigen::Matrix4d omega0 = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d omega1 = Eigen::Matrix4d::Zero();
  double hac_bandwidth = 0.0;
  double condition = 0.0;
  std::size_t n = 0;
  std::size_t density_dropped = 0;
  TukeyGarchParams phi{};

  /// Covariance of g_tau(phi_hat): J Sigma J' / n.
  Eigen::Matrix3d theta_cov_at(double tau) const {
    const Eigen::Matrix<double, 3, 4> j = g_jacobian(phi, tau);
    Eigen::Matrix3d c = j * sigma * j.transpose() / static_cast<double>(n);
    return 0.5 * (c + c.transpose());
  }
  Eigen::Vector4d phi_se() const { return (sigma.diagonal() / static_cast<double>(n)).cwiseMax(0.0).cwiseSqrt(); }
};

/// Score rows X_t = sum_k w_t qdot_{t,k} psi_{tau_k}(y_t - q_{t,k}) at phi.
inline Eigen::MatrixXd cqr_scores(std::span<const double> y, std::span<const double> w,
                                  std::span<const double> levels, const TukeyGarchParams& phi) {
  const std::size_t n = y.size();
  const GeometricSums gs = geometric_sums(y, phi.b1, 1);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 4);
  for (double tau : levels) {
    const TukeyQuantile q = tukey_quantile_derivs(tau, phi.lambda);
    for (std::size_t t = 0; t < n; ++t) {
      const Eigen::Vector4d qd = cqr_qdot(q, phi.a0, phi.a1, phi.b1, gs.level[t], gs.d1[t]);
      const double h = phi.a0 / (1.0 - phi.b1) + phi.a1 * gs.level[t];
      X.row(static_cast<Eigen::Index>(t)) += (w[t] * psi(tau, y[t] - q.value * h)) * qd.transpose();
    }
  }
  return X;
}

/// Sandwich covariance Omega_1^{-1} Omega_0 Omega_1^{-1} of the CQR estimator with
/// Omega_1 = Omega_12 - Omega_11 and a QS-kernel HAC Omega_0 at
/// bandwidth_multiplier times the automatic bandwidth. `simplified` uses the
/// correct-specification forms Omega_1 = Omega_12 and
/// Omega_0 = n^{-1} sum_t w_t^2 sum_{k,k'} (min(tau) (1 - max(tau))) qdot_k qdot_k'.
inline CqrCovariance cqr_asymptotic_cov(const ReturnSeries& series, const CqrFit& fit, std::span<const double> weights,
                                        double bandwidth_multiplier = 1.0, bool simplified = false) {
  const std::span<const double> y = series.values();
  const std::size_t n = y.size();
  detail::require(weights.size() == n, "CQR covariance: weights length mismatch");
  detail::require(bandwidth_multiplier > 0.0, "CQR covariance: bandwidth multiplier must be positive");
  detail::require(fit.tau_levels.size() >= 3, "CQR covariance: fit carries no levels");
  const TukeyGarchParams& phi = fit.phi_hat;
  phi.validate();
  const std::vector<double>& levels = fit.tau_levels;
  const std::size_t K = levels.size();
  const GeometricSums gs = geometric_sums(y, phi.b1, 2);

  std::vector<TukeyQuantile> qk(K);
  std::vector<double> spread(K);
  std::vector<double> ell(K);
  for (std::size_t k = 0; k < K; ++k) {
    qk[k] = tukey_quantile_derivs(levels[k], phi.lambda);
    ell[k] = usable_bandwidth(levels[k], bandwidth_hall_sheather(levels[k], n));
    spread[k] = tukey_quantile(levels[k] + ell[k], phi.lambda) - tukey_quantile(levels[k] - ell[k], phi.lambda);
  }

  CqrCovariance out;
  out.n = n;
  out.phi = phi;
  Eigen::Matrix4d o11 = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d o12 = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d o0s = Eigen::Matrix4d::Zero();
  std::vector<Eigen::Vector4d> qd(K);
  for (std::size_t t = 0; t < n; ++t) {
    const double h = phi.a0 / (1.0 - phi.b1) + phi.a1 * gs.level[t];
    for (std::size_t k = 0; k < K; ++k) {
      qd[k] = cqr_qdot(qk[k], phi.a0, phi.a1, phi.b1, gs.level[t], gs.d1[t]);
      const double u = psi(levels[k], y[t] - qk[k].value * h);
      if (!simplified) o11 += (weights[t] * u) * cqr_qddot(qk[k], phi.a0, phi.a1, phi.b1, gs.level[t], gs.d1[t], gs.d2[t]);
      const double den = spread[k] * h;
      if (!(den > 0.0)) {
        ++out.density_dropped;
        continue;
      }
      const double f = std::min(2.0 * ell[k] / den, kDensityCap);
      o12 += (weights[t] * f) * qd[k] * qd[k].transpose();
    }
    if (simplified) {
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < K; ++j) {
          const double c = std::min(levels[k], levels[j]) * (1.0 - std::max(levels[k], levels[j]));
          o0s += (weights[t] * weights[t] * c) * qd[k] * qd[j].transpose();
        }
    }
  }
  const double nd = static_cast<double>(n);
  Eigen::Matrix4d o1 = (o12 - o11) / nd;
  o1 = 0.5 * (o1 + o1.transpose());
  if (simplified) {
    out.omega0 = o0s / nd;
    out.omega0 = 0.5 * (out.omega0 + out.omega0.transpose());
  } else {
    const Eigen::MatrixXd X = cqr_scores(y, weights, levels, phi);
    out.hac_bandwidth = bandwidth_multiplier * auto_bandwidth(X);
    out.omega0 = hac_cov(X, out.hac_bandwidth, 4);
  }
  out.omega1 = o1;
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(o1);
  const auto sv = svd.singularValues();
  out.condition = sv(3) > 0.0 ? sv(0) / sv(3) : std::numeric_limits<double>::infinity();
  if (!(out.condition < 1e12))
    throw NumericalError("CQR covariance: Omega_1 is singular (condition number " + std::to_string(out.condition) +
                         ")");
  const auto lu = o1.fullPivLu();
  const Eigen::Matrix4d a = lu.solve(out.omega0);
  out.sigma = lu.solve(a.transpose()).transpose();
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose());
  return out;
}

/// Fits the CQR model and attaches the covariance (Sigma / n) and HAC bandwidth.
inline CqrFit cqr_fit_with_cov(const ReturnSeries& series, const CqrConfig& cfg, double bandwidth_multiplier = 1.0,
                               bool simplified = false) {
  CqrConfig c = cfg;
  if (c.weights.empty()) c.weights = compute_self_weights(series.values(), cfg.weight_cfg);
  CqrFit fit = cqr_fit(series, c);
  const CqrCovariance cov = cqr_asymptotic_cov(series, fit, c.weights, bandwidth_multiplier, simplified);
  fit.cov = cov.sigma / static_cast<double>(series.size());
  fit.hac_bandwidth = cov.hac_bandwidth;
  return fit;
}

struct BandwidthSelection {
  double h_opt = 0.0;
  std::vector<double> h_grid;
  std::vector<double> validation_loss;
};

/// Chooses h from the grid by the check loss at tau0 on the validation block,
/// using fits on the training block and the quantile recursion run over the
/// concatenated history. Ties go to the smaller h.
inline BandwidthSelection select_bandwidth_h(const ReturnSeries& train, const ReturnSeries& validate, double tau0,
                                             std::span<const double> h_grid, const CqrConfig& cfg) {
  detail::require(!h_grid.empty(), "select_h: empty h grid");
  detail::require(validate.size() >= 50, "select_h: the validation block needs at least 50 observations");
  detail::check_tau(tau0);
  std::vector<double> all(train.values().begin(), train.values().end());
  all.insert(all.end(), validate.values().begin(), validate.values().end());
  const std::size_t n0 = train.size();

  BandwidthSelection sel;
  sel.h_grid.assign(h_grid.begin(), h_grid.end());
  std::sort(sel.h_grid.begin(), sel.h_grid.end());
  CqrConfig c = cfg;
  c.tau0 = tau0;
  if (c.weights.empty()) c.weights = compute_self_weights(train.values(), cfg.weight_cfg);
  double best = std::numeric_limits<double>::infinity();
  for (double h : sel.h_grid) {
    detail::require(h > 0.0, "select_h: h must be positive");
    c.h = h;
    double loss = 0.0;
    try {
      const CqrFit f = cqr_fit(train, c);
      const std::vector<double> q = fitted_quantiles(g_transform(f.phi_hat, tau0), all);
      for (std::size_t t = n0; t < all.size(); ++t) loss += check_loss(tau0, all[t] - q[t]);
    } catch (const NumericalError& e) {
      throw NumericalError("select_h: fit with h=" + std::to_string(h) + " failed: " + e.what());
    }
    sel.validation_loss.push_back(loss);
    if (loss < best) {
      best = loss;
      sel.h_opt = h;
    }
  }
  return sel;
}

}  // namespace qgarch

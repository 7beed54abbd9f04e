#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qgarch/error.hpp"
#include "qgarch/loss.hpp"
#include "qgarch/qr.hpp"
#include "qgarch/recursion.hpp"
#include "qgarch/stats.hpp"
#include "qgarch/types.hpp"
#include "qgarch/weights.hpp"

namespace qgarch {

enum class CvmStatistic { CvM, KS };

struct CvmConfig {
  std::vector<double> tau_grid;  // equally spaced, increasing
  double delta = 0.005;
  Eigen::RowVector3d R{0.0, 0.0, 1.0};
  double block_factor = 1.0;  // b_n = floor(c sqrt(n))
  double alpha = 0.05;
  CvmStatistic statistic = CvmStatistic::CvM;
  BandwidthRule bandwidth_rule = BandwidthRule::HallSheather;
  QrFitConfig fit{};  // tau is ignored; weights shared across the grid
};

struct CvmResult {
  double statistic_value = 0.0;
  double critical_value = 0.0;
  double p_value = 1.0;
  std::size_t block_size = 0;
  std::vector<double> subsample_statistics;
  std::vector<double> coefficient_path;  // R theta(tau) over the grid
  bool reject() const { return statistic_value > critical_value; }
};

/// Points lo, lo + delta, ..., hi (hi must be reached to within 1e-9).
inline std::vector<double> make_tau_grid(double lo, double hi, double delta) {
  detail::require(delta > 0.0, "tau grid: delta must be positive");
  detail::require(lo > 0.0 && hi < 1.0 && lo < hi, "tau grid: need 0 < lo < hi < 1");
  const double steps = (hi - lo) / delta;
  const long k = std::lround(steps);
  detail::require(std::abs(steps - static_cast<double>(k)) < 1e-9, "tau grid: (hi - lo) must be a multiple of delta");
  std::vector<double> g;
  for (long i = 0; i <= k; ++i) g.push_back(lo + static_cast<double>(i) * delta);
  return g;
}

namespace detail {
inline void check_grid(std::span<const double> grid, double delta) {
  require(grid.size() >= 2, "CvM: the tau grid needs at least two points");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    check_tau(grid[i]);
    if (i > 0) require(std::abs(grid[i] - grid[i - 1] - delta) <= 1e-12, "CvM: tau grid cells must equal delta");
  }
}
}  // namespace detail

/// S_n = n delta sum_k v(tau_k)^2 with v = R theta(tau) minus its grid mean;
/// the KS variant is sqrt(n) max_k |v(tau_k)|.
inline double cvm_statistic(std::span<const double> r_theta, std::size_t n, double delta,
                            CvmStatistic stat = CvmStatistic::CvM) {
  detail::require(r_theta.size() >= 2, "CvM: the tau grid needs at least two points");
  detail::require(n >= 1 && delta > 0.0, "CvM: n and delta must be positive");
  // Centred on the first value so a constant path gives exactly zero.
  double m = 0.0;
  for (double v : r_theta) m += v - r_theta[0];
  m = r_theta[0] + m / static_cast<double>(r_theta.size());
  if (stat == CvmStatistic::KS) {
    double mx = 0.0;
    for (double v : r_theta) mx = std::max(mx, std::abs(v - m));
    return std::sqrt(static_cast<double>(n)) * mx;
  }
  double ss = 0.0;
  for (double v : r_theta) ss += (v - m) * (v - m);
  return static_cast<double>(n) * delta * ss;
}

/// Score matrix z_t(tau_k) = R m_t(tau_k) minus its mean over the grid, with
/// m_t(tau) = w_t Omega_1^{-1}(tau) qdot_t(theta(tau)) psi_tau(y_t - q_t(theta(tau))).
inline Eigen::MatrixXd estimated_scores(std::span<const double> y, std::span<const double> w,
                                        std::span<const double> taus, std::span<const QGarchParams> thetas,
                                        std::span<const Eigen::Matrix3d> omega1, const Eigen::RowVector3d& R) {
  const std::size_t n = y.size();
  const std::size_t k = taus.size();
  detail::require(k >= 2, "scores: the tau grid needs at least two points");
  detail::require(thetas.size() == k && omega1.size() == k, "scores: one fit and one Omega_1 per grid point");
  detail::require(w.size() == n, "scores: weights length mismatch");
  Eigen::MatrixXd z(n, k);
  for (std::size_t j = 0; j < k; ++j) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(omega1[j]);
    const auto sv = svd.singularValues();
    if (!(sv(2) > 0.0) || sv(0) / sv(2) > 1e12)
      throw NumericalError("scores: Omega_1 is singular at tau=" + std::to_string(taus[j]));
    const Eigen::RowVector3d c = omega1[j].transpose().fullPivLu().solve(R.transpose()).transpose();
    const QGarchParams& th = thetas[j];
    const GeometricSums gs = geometric_sums(y, th.beta1, 1);
    for (std::size_t t = 0; t < n; ++t) {
      const double q = th.omega + th.alpha1 * gs.level[t];
      const Eigen::Vector3d qd(1.0, gs.level[t], th.alpha1 * gs.d1[t]);
      z(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = w[t] * psi(taus[j], y[t] - q) * c.dot(qd);
    }
  }
  const Eigen::VectorXd row_mean = z.rowwise().mean();
  z.colwise() -= row_mean;
  return z;
}

/// Subsampling distribution of the statistic over the overlapping blocks
/// {k, ..., k + b - 1}: block means v_k(tau) of the scores give
/// S_k = b delta sum v_k^2 (CvM) or sqrt(b) max |v_k| (KS).
inline CvmResult subsample_test(const Eigen::MatrixXd& scores, double statistic_value, const CvmConfig& cfg) {
  const auto n = static_cast<std::size_t>(scores.rows());
  detail::require(cfg.alpha > 0.0 && cfg.alpha < 1.0, "subsampling: alpha must lie in (0,1)");
  detail::require(cfg.block_factor > 0.0, "subsampling: block factor must be positive");
  const auto b = static_cast<std::size_t>(std::floor(cfg.block_factor * std::sqrt(static_cast<double>(n))));
  detail::require(b >= 2, "subsampling: block size must be at least 2");
  detail::require(b <= n, "subsampling: block size exceeds the sample size");
  const std::size_t blocks = n - b + 1;
  const double bd = static_cast<double>(b);

  CvmResult res;
  res.statistic_value = statistic_value;
  res.block_size = b;
  res.subsample_statistics.resize(blocks);
  Eigen::RowVectorXd run = scores.topRows(static_cast<Eigen::Index>(b)).colwise().sum();
  for (std::size_t s = 0; s < blocks; ++s) {
    if (s > 0)
      run += scores.row(static_cast<Eigen::Index>(s + b - 1)) - scores.row(static_cast<Eigen::Index>(s - 1));
    const Eigen::RowVectorXd v = run / bd;
    res.subsample_statistics[s] = cfg.statistic == CvmStatistic::KS ? std::sqrt(bd) * v.cwiseAbs().maxCoeff()
                                                                    : bd * cfg.delta * v.squaredNorm();
  }
  res.critical_value = empirical_quantile(res.subsample_statistics, 1.0 - cfg.alpha);
  std::size_t exceed = 0;
  for (double v : res.subsample_statistics) exceed += v >= statistic_value ? 1 : 0;
  res.p_value = static_cast<double>(exceed) / static_cast<double>(blocks);
  return res;
}

/// Full constancy test of R theta(tau) over the grid: fits at every level
/// (plus the tau -/+ l fits for the density), the statistic, the scores and
/// the subsampling critical value.
inline CvmResult cvm_test(const ReturnSeries& series, const CvmConfig& cfg) {
  detail::check_grid(cfg.tau_grid, cfg.delta);
  const std::size_t n = series.size();
  QrFitConfig fc = cfg.fit;
  if (fc.weights.empty()) fc.weights = compute_self_weights(series.values(), fc.weight_cfg);
  detail::require(fc.weights.size() == n, "CvM: weights length mismatch");

  const std::size_t k = cfg.tau_grid.size();
  std::vector<QGarchParams> thetas(k);
  std::vector<Eigen::Matrix3d> omega1(k);
  std::vector<double> path(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double tau = cfg.tau_grid[j];
    try {
      fc.tau = tau;
      const QuantileFit f = qr_fit(series, fc);
      const double ell = usable_bandwidth(tau, bandwidth(cfg.bandwidth_rule, tau, n));
      fc.tau = tau - ell;
      const QuantileFit lo = qr_fit(series, fc);
      fc.tau = tau + ell;
      const QuantileFit hi = qr_fit(series, fc);
      const SandwichParts p = qr_sandwich(series.values(), fc.weights, f.theta_hat, lo.theta_hat, hi.theta_hat, ell);
      thetas[j] = f.theta_hat;
      omega1[j] = p.omega1;
      path[j] = cfg.R.dot(Eigen::Vector3d(f.theta_hat.omega, f.theta_hat.alpha1, f.theta_hat.beta1));
    } catch (const NumericalError& e) {
      throw NumericalError("CvM: fit at tau=" + std::to_string(tau) + " failed: " + e.what());
    }
  }
  const double sn = cvm_statistic(path, n, cfg.delta, cfg.statistic);
  const Eigen::MatrixXd z = estimated_scores(series.values(), fc.weights, cfg.tau_grid, thetas, omega1, cfg.R);
  CvmResult res = subsample_test(z, sn, cfg);
  res.coefficient_path = std::move(path);
  return res;
}

}  // namespace qgarch

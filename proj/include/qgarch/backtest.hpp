#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qgarch/cqr.hpp"
#include "qgarch/error.hpp"
#include "qgarch/fhs.hpp"
#include "qgarch/loss.hpp"
#include "qgarch/qr.hpp"
#include "qgarch/recursion.hpp"
#include "qgarch/stats.hpp"
#include "qgarch/types.hpp"

namespace qgarch {

enum class ForecastMethod { QR, CQR, FHS };

inline const char* to_string(ForecastMethod m) {
  switch (m) {
    case ForecastMethod::QR: return "QR";
    case ForecastMethod::CQR: return "CQR";
    case ForecastMethod::FHS: return "FHS";
  }
  return "?";
}

inline std::vector<double> default_h_grid() { return {0.02, 0.04, 0.06, 0.08, 0.1}; }

struct RollingConfig {
  ForecastMethod method = ForecastMethod::QR;
  double tau = 0.05;
  std::size_t n0 = 1000;  // moving window length
  std::size_t n1 = 0;     // validation length (CQR only)
  QrFitConfig qr{};       // tau and weights are set per origin
  CqrConfig cqr{};        // tau0 and weights are set per origin
  std::vector<double> h_grid = default_h_grid();
  std::optional<double> fixed_h;           // CQR: skip the validation search
  std::optional<QGarchParams> frozen;      // no refits; forecast with these coefficients
  double max_fail_fraction = 0.05;
};

struct ForecastRun {
  ForecastMethod method = ForecastMethod::QR;
  double tau = 0.0;
  std::size_t window = 0;
  std::size_t first_index = 0;  // 0-based index of the first forecast target
  std::vector<double> actual;
  std::vector<double> forecasts;
  std::vector<char> hits;  // y_t < forecast_t
  std::size_t failed_origins = 0;
  double h = 0.0;  // CQR bandwidth in use
  std::vector<std::string> labels;
};

/// One-step-ahead rolling forecasts. QR and FHS forecast y_{n0+1}, ..., y_n; CQR
/// first picks h on the validation block [n0, n0 + n1) and then forecasts
/// y_{n0+n1+1}, ..., y_n. Every origin refits on the last n0 observations and
/// the quantile recursion runs over the whole history up to the origin.
/// A failed refit reuses the previous coefficients; more than
/// max_fail_fraction failed origins abort the run.
inline ForecastRun rolling_forecast(const ReturnSeries& series, const RollingConfig& cfg) {
  detail::check_tau(cfg.tau);
  detail::require(cfg.n0 >= 100, "rolling forecast: window n0 must be at least 100");
  const std::size_t n = series.size();
  const bool cqr = cfg.method == ForecastMethod::CQR && !cfg.frozen;
  if (cqr) detail::require(cfg.n1 > 0 || cfg.fixed_h.has_value(), "rolling forecast: CQR needs a validation length n1");
  const std::size_t start = cfg.n0 + (cqr ? cfg.n1 : 0);
  detail::require(start < n, "rolling forecast: empty test set");
  const std::span<const double> y = series.values();

  ForecastRun run;
  run.method = cfg.method;
  run.tau = cfg.tau;
  run.window = cfg.n0;
  run.first_index = start;

  CqrConfig cc = cfg.cqr;
  cc.tau0 = cfg.tau;
  if (cqr) {
    if (cfg.fixed_h) {
      run.h = *cfg.fixed_h;
    } else {
      const BandwidthSelection sel =
          select_bandwidth_h(series.slice(0, cfg.n0), series.slice(cfg.n0, cfg.n1), cfg.tau, cfg.h_grid, cc);
      run.h = sel.h_opt;
    }
    cc.h = run.h;
  }

  const std::size_t origins = n - start;
  std::optional<QGarchParams> last_theta;
  std::optional<FhsModel> last_fhs;
  for (std::size_t t = start; t < n; ++t) {
    const std::span<const double> history = y.first(t);
    double fc = 0.0;
    if (cfg.frozen) {
      fc = forecast_quantile(*cfg.frozen, history);
    } else {
      const ReturnSeries win = series.slice(t - cfg.n0, cfg.n0);
      try {
        if (cfg.method == ForecastMethod::QR) {
          QrFitConfig qc = cfg.qr;
          qc.tau = cfg.tau;
          qc.weights.clear();
          last_theta = qr_fit(win, qc).theta_hat;
        } else if (cfg.method == ForecastMethod::CQR) {
          CqrConfig c = cc;
          c.weights.clear();
          last_theta = g_transform(cqr_fit(win, c).phi_hat, cfg.tau);
        } else {
          last_fhs = fhs_fit(win);
        }
      } catch (const NumericalError& e) {
        ++run.failed_origins;
        const bool have_prev = cfg.method == ForecastMethod::FHS ? last_fhs.has_value() : last_theta.has_value();
        if (!have_prev)
          throw NumericalError("rolling forecast: refit at origin " + std::to_string(t) + " failed: " + e.what());
        if (static_cast<double>(run.failed_origins) > cfg.max_fail_fraction * static_cast<double>(origins))
          throw NumericalError("rolling forecast: too many failed refits (" + std::to_string(run.failed_origins) +
                               " of " + std::to_string(origins) + " origins)");
      }
      if (cfg.method == ForecastMethod::FHS) {
        // Scale recursion over the current window with the latest coefficients.
        const std::span<const double> wv = y.subspan(t - cfg.n0, cfg.n0);
        const std::vector<double> h = fhs_scale(wv, last_fhs->a0, last_fhs->a1, last_fhs->b1, last_fhs->h1);
        fc = last_fhs->residual_quantile(cfg.tau) * h.back();
      } else {
        fc = forecast_quantile(*last_theta, history);
      }
    }
    run.actual.push_back(y[t]);
    run.forecasts.push_back(fc);
    run.hits.push_back(y[t] < fc ? 1 : 0);
    if (series.has_labels()) run.labels.push_back(series.labels()[t]);
  }
  return run;
}

struct CoverageStats {
  double ecr = 0.0;  // percent
  double pe = 0.0;
};

/// ECR = 100 mean(H); PE = |mean(H) - tau| / sqrt(tau (1 - tau) / n_test).
inline CoverageStats ecr_pe(std::span<const char> hits, double tau) {
  detail::check_tau(tau);
  detail::require(!hits.empty(), "ECR/PE: empty hit sequence");
  double s = 0.0;
  for (char h : hits) s += h ? 1.0 : 0.0;
  const double m = hits.size();
  const double rate = s / m;
  return {100.0 * rate, std::abs(rate - tau) / std::sqrt(tau * (1.0 - tau) / m)};
}

struct CcResult {
  double lr_uc = 0.0;
  double lr_ind = 0.0;
  double statistic = 0.0;
  double p_value = 1.0;
  int df = 2;
  bool degenerate = false;  // LR_ind undefined; p-value from LR_uc on 1 df
};

namespace detail {
inline double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }
}  // namespace detail

/// Conditional coverage likelihood ratio LR_uc + LR_ind against chi^2(2).
inline CcResult cc_test(std::span<const char> hits, double tau) {
  detail::check_tau(tau);
  detail::require(hits.size() >= 20, "CC test: at least 20 hits are required");
  double n1 = 0.0;
  for (char h : hits) n1 += h ? 1.0 : 0.0;
  const double n = hits.size();
  const double n0 = n - n1;
  const double pi = n1 / n;
  CcResult r;
  r.lr_uc = -2.0 * (detail::xlogy(n0, 1.0 - tau) + detail::xlogy(n1, tau) - detail::xlogy(n0, 1.0 - pi) -
                    detail::xlogy(n1, pi));
  r.lr_uc = std::max(r.lr_uc, 0.0);
  double c00 = 0.0, c01 = 0.0, c10 = 0.0, c11 = 0.0;
  for (std::size_t t = 1; t < hits.size(); ++t) {
    const bool a = hits[t - 1] != 0;
    const bool b = hits[t] != 0;
    (a ? (b ? c11 : c10) : (b ? c01 : c00)) += 1.0;
  }
  if (c00 + c01 == 0.0 || c10 + c11 == 0.0) {
    r.degenerate = true;
    r.df = 1;
    r.statistic = r.lr_uc;
    r.p_value = chi_squared_sf(r.lr_uc, 1.0);
    return r;
  }
  const double p01 = c01 / (c00 + c01);
  const double p11 = c11 / (c10 + c11);
  const double p2 = (c01 + c11) / (c00 + c01 + c10 + c11);
  const double l_restricted = detail::xlogy(c00 + c10, 1.0 - p2) + detail::xlogy(c01 + c11, p2);
  const double l_markov = detail::xlogy(c00, 1.0 - p01) + detail::xlogy(c01, p01) + detail::xlogy(c10, 1.0 - p11) +
                          detail::xlogy(c11, p11);
  r.lr_ind = std::max(-2.0 * (l_restricted - l_markov), 0.0);
  r.statistic = r.lr_uc + r.lr_ind;
  r.p_value = chi_squared_sf(r.statistic, 2.0);
  return r;
}

struct DqResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int df = 0;
  bool reduced = false;  // collinear columns dropped
};

/// Dynamic quantile test: OLS of H_t - tau on a constant and `lags` lagged hits,
/// statistic d' X'X d / (tau (1 - tau)) against chi^2(rank X).
inline DqResult dq_test(std::span<const char> hits, double tau, int lags = 4) {
  detail::check_tau(tau);
  detail::require(lags >= 1, "DQ test: at least one lag is required");
  const auto L = static_cast<std::size_t>(lags);
  detail::require(hits.size() > L + 10, "DQ test: hit sequence too short for the lag order");
  const auto m = static_cast<Eigen::Index>(hits.size() - L);
  Eigen::MatrixXd X(m, lags + 1);
  Eigen::VectorXd z(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const std::size_t t = static_cast<std::size_t>(i) + L;
    z(i) = (hits[t] ? 1.0 : 0.0) - tau;
    X(i, 0) = 1.0;
    for (std::size_t l = 1; l <= L; ++l) X(i, static_cast<Eigen::Index>(l)) = hits[t - l] ? 1.0 : 0.0;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  DqResult r;
  r.df = static_cast<int>(qr.rank());
  r.reduced = r.df < lags + 1;
  // d' X'X d equals the squared norm of the fitted values, whatever the rank.
  const Eigen::VectorXd fitted = X * qr.solve(z);
  r.statistic = fitted.squaredNorm() / (tau * (1.0 - tau));
  r.p_value = chi_squared_sf(r.statistic, static_cast<double>(r.df));
  return r;
}

struct BacktestReport {
  double ecr = 0.0;
  double pe = 0.0;
  double cc_pvalue = 1.0;
  double dq_pvalue = 1.0;
  bool cc_degenerate = false;
  bool dq_reduced = false;
  std::size_t n_test = 0;
};

inline BacktestReport backtest(std::span<const char> hits, double tau, int dq_lags = 4) {
  const CoverageStats c = ecr_pe(hits, tau);
  const CcResult cc = cc_test(hits, tau);
  const DqResult dq = dq_test(hits, tau, dq_lags);
  return {c.ecr, c.pe, cc.p_value, dq.p_value, cc.degenerate, dq.reduced, hits.size()};
}

}  // namespace qgarch

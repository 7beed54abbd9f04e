#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qgarch/cqr.hpp"
#include "qgarch/error.hpp"
#include "qgarch/parallel.hpp"
#include "qgarch/qr.hpp"
#include "qgarch/recursion.hpp"
#include "qgarch/simulate.hpp"
#include "qgarch/stats.hpp"

namespace qgarch {

struct McRow {
  std::string param;
  double truth = 0.0;
  double bias = 0.0;
  double esd = 0.0;
  double asd_b = std::numeric_limits<double>::quiet_NaN();   // Bofinger bandwidth (or first HAC multiplier)
  double asd_hs = std::numeric_limits<double>::quiet_NaN();  // Hall-Sheather bandwidth
};

/// Mean bias, empirical SD and mean of the reported standard errors, per
/// coordinate. NaN standard errors (failed covariance) are skipped.
inline std::vector<McRow> summarize(const std::vector<std::string>& names, const Eigen::VectorXd& truth,
                                    const std::vector<Eigen::VectorXd>& est, const std::vector<Eigen::VectorXd>& se_b,
                                    const std::vector<Eigen::VectorXd>& se_hs) {
  const auto p = truth.size();
  detail::require(static_cast<Eigen::Index>(names.size()) == p, "summary: names and truth differ in length");
  detail::require(est.size() >= 2, "summary: need at least two replications");
  std::vector<McRow> rows;
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> v;
    for (const auto& e : est) v.push_back(e(j));
    McRow r;
    r.param = names[static_cast<std::size_t>(j)];
    r.truth = truth(j);
    r.bias = mean(v) - truth(j);
    r.esd = stddev(v);
    auto avg = [&](const std::vector<Eigen::VectorXd>& se) {
      double s = 0.0;
      std::size_t c = 0;
      for (const auto& x : se)
        if (std::isfinite(x(j))) {
          s += x(j);
          ++c;
        }
      return c > 0 ? s / static_cast<double>(c) : std::numeric_limits<double>::quiet_NaN();
    };
    r.asd_b = avg(se_b);
    r.asd_hs = avg(se_hs);
    rows.push_back(r);
  }
  return rows;
}

struct QrMcConfig {
  std::string setting = "5.2";
  std::string dist = "normal";
  double d = 0.0;
  std::size_t n = 2000;
  double tau = 0.05;
  std::size_t reps = 200;
  std::uint64_t seed = 1;
  bool with_cov = true;
  QrFitConfig fit{};
};

struct QrMcResult {
  Eigen::Vector3d truth;
  std::vector<Eigen::VectorXd> est;
  std::vector<Eigen::VectorXd> se_b;
  std::vector<Eigen::VectorXd> se_hs;
  std::size_t cov_failures = 0;
  std::vector<McRow> rows() const { return summarize({"omega", "alpha1", "beta1"}, truth, est, se_b, se_hs); }
};

/// Replications r = 0..reps-1 of simulate + QR fit (+ both sandwich ASDs), seed + r each.
inline QrMcResult qr_monte_carlo(const QrMcConfig& cfg) {
  detail::require(cfg.reps >= 2, "montecarlo: at least two replications are required");
  const CoefficientFunctions coef = preset_setting(cfg.setting, cfg.dist, cfg.d);
  QrMcResult res;
  const QGarchParams tr = coef.at(cfg.tau);
  res.truth = Eigen::Vector3d(tr.omega, tr.alpha1, tr.beta1);
  res.est.resize(cfg.reps);
  const Eigen::VectorXd nan3 = Eigen::VectorXd::Constant(3, std::numeric_limits<double>::quiet_NaN());
  res.se_b.assign(cfg.reps, nan3);
  res.se_hs.assign(cfg.reps, nan3);
  std::vector<char> failed(cfg.reps, 0);
  parallel_for(cfg.reps, [&](std::size_t r) {
    SimulationSpec sp;
    sp.coef = coef;
    sp.n = cfg.n;
    sp.seed = cfg.seed + r;
    const ReturnSeries s = simulate_qgarch(sp);
    QrFitConfig fc = cfg.fit;
    fc.tau = cfg.tau;
    fc.weights = compute_self_weights(s.values(), fc.weight_cfg);
    const QuantileFit f = qr_fit(s, fc);
    res.est[r] = Eigen::Vector3d(f.theta_hat.omega, f.theta_hat.alpha1, f.theta_hat.beta1);
    if (!cfg.with_cov) return;
    for (BandwidthRule rule : {BandwidthRule::Bofinger, BandwidthRule::HallSheather}) {
      QuantileFit g = f;
      try {
        attach_covariance(s, fc, g, rule);
        const auto a = g.asd();
        (rule == BandwidthRule::Bofinger ? res.se_b : res.se_hs)[r] = Eigen::Vector3d(a[0], a[1], a[2]);
      } catch (const NumericalError&) {
        failed[r] = 1;
      }
    }
  });
  for (char f : failed) res.cov_failures += f ? 1 : 0;
  return res;
}

struct CqrMcConfig {
  std::string setting = "5.2";
  std::string dist = "tukey(-0.2)";
  std::size_t n = 2000;
  double tau0 = 0.005;
  double h = 0.1;
  int K = 19;
  std::size_t reps = 200;
  std::uint64_t seed = 1;
  std::vector<double> multipliers{1.0};  // HAC bandwidth multipliers
  bool with_qr = false;                  // also fit QR at tau0 and record forecasts
  CqrConfig fit{};
};

struct CqrMcRep {
  Eigen::Vector3d theta;            // g_tau0(phi_hat)
  Eigen::Vector4d phi;              // (a0, a1, b1, lambda)
  std::vector<Eigen::Vector3d> se;  // per multiplier, NaN on failure
  double true_next = 0.0;           // q_{n+1}(theta(tau0))
  double cqr_next = 0.0;            // q_{n+1}(g_tau0(phi_hat))
  double qr_next = std::numeric_limits<double>::quiet_NaN();
};

struct CqrMcResult {
  Eigen::Vector3d truth;
  std::vector<CqrMcRep> reps;
};

/// Replications of simulate + CQR fit with the transformed estimate at tau0,
/// standard errors at each HAC multiplier and, optionally, the QR fit at tau0.
inline CqrMcResult cqr_monte_carlo(const CqrMcConfig& cfg) {
  detail::require(cfg.reps >= 2, "montecarlo: at least two replications are required");
  const CoefficientFunctions coef = preset_setting(cfg.setting, cfg.dist);
  CqrMcResult res;
  const QGarchParams tr = coef.at(cfg.tau0);
  res.truth = Eigen::Vector3d(tr.omega, tr.alpha1, tr.beta1);
  res.reps.resize(cfg.reps);
  parallel_for(cfg.reps, [&](std::size_t r) {
    SimulationSpec sp;
    sp.coef = coef;
    sp.n = cfg.n;
    sp.seed = cfg.seed + r;
    const ReturnSeries s = simulate_qgarch(sp);
    CqrConfig c = cfg.fit;
    c.tau0 = cfg.tau0;
    c.h = cfg.h;
    c.K = cfg.K;
    c.weights = compute_self_weights(s.values(), c.weight_cfg);
    const CqrFit f = cqr_fit(s, c);
    CqrMcRep& rep = res.reps[r];
    const QGarchParams th = g_transform(f.phi_hat, cfg.tau0);
    rep.theta = Eigen::Vector3d(th.omega, th.alpha1, th.beta1);
    rep.phi = Eigen::Vector4d(f.phi_hat.a0, f.phi_hat.a1, f.phi_hat.b1, f.phi_hat.lambda);
    for (double m : cfg.multipliers) {
      Eigen::Vector3d se = Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
      try {
        const CqrCovariance cv = cqr_asymptotic_cov(s, f, c.weights, m);
        se = cv.theta_cov_at(cfg.tau0).diagonal().cwiseMax(0.0).cwiseSqrt();
      } catch (const NumericalError&) {
      }
      rep.se.push_back(se);
    }
    rep.true_next = forecast_quantile(tr, s.values());
    rep.cqr_next = forecast_quantile(th, s.values());
    if (cfg.with_qr) {
      QrFitConfig qc;
      qc.tau = cfg.tau0;
      qc.weights = c.weights;
      rep.qr_next = forecast_quantile(qr_fit(s, qc).theta_hat, s.values());
    }
  });
  return res;
}

}  // namespace qgarch

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "qgarch/qgarch.hpp"

using namespace qgarch;
using Catch::Approx;

namespace {
ReturnSeries simulated(const std::string& setting, const std::string& dist, std::size_t n, std::uint64_t seed) {
  SimulationSpec s;
  s.coef = preset_setting(setting, dist);
  s.n = n;
  s.seed = seed;
  return simulate_qgarch(s);
}

// Coarse grids keep the fits in this file fast.
CqrConfig small_config() {
  CqrConfig c;
  c.tau0 = 0.05;
  c.h = 0.1;
  c.K = 5;
  c.b1_grid.clear();
  for (int i = 1; i <= 19; ++i) c.b1_grid.push_back(0.05 * i);
  c.lambda_grid = {-0.6, -0.4, -0.2, -0.1, 0.1, 0.2, 0.4};
  return c;
}
}  // namespace

TEST_CASE("composite levels", "[cqr]") {
  const std::vector<double> t = cqr_levels(0.005, 0.1, 19);
  REQUIRE(t.size() == 19);
  CHECK(t.front() == 0.005);
  CHECK(t.back() == Approx(0.105));
  const std::vector<double> u = cqr_levels(0.95, 0.1, 3);
  REQUIRE(u.size() == 3);
  CHECK(u[0] == 0.95);
  CHECK(u[1] == Approx(0.9).epsilon(1e-14));
  CHECK(u[2] == Approx(0.85).epsilon(1e-14));
  CHECK_THROWS_AS(cqr_levels(0.5, 0.1, 5), std::invalid_argument);
  CHECK_THROWS_AS(cqr_levels(0.45, 0.1, 5), std::invalid_argument);
  CHECK_THROWS_AS(cqr_levels(0.05, 0.1, 2), std::invalid_argument);
}

TEST_CASE("transformation to the quantile GARCH coefficients", "[cqr]") {
  const TukeyGarchParams phi{0.02, 0.1, 0.8, -0.2};
  const QGarchParams th = g_transform(phi, 0.005);
  CHECK(th.omega == Approx(-0.9421984004).epsilon(1e-9));
  CHECK(th.omega == Approx(-0.9421).margin(2e-4));
  CHECK(th.alpha1 == Approx(-0.9421984004).epsilon(1e-9));
  CHECK(th.beta1 == 0.8);
  const QGarchParams mid = g_transform(phi, 0.5);
  CHECK(mid.omega == 0.0);
  CHECK(mid.alpha1 == 0.0);
  CHECK(mid.beta1 == 0.8);
  TukeyGarchParams twice = phi;
  twice.a0 *= 2.0;
  CHECK(g_transform(twice, 0.05).omega == Approx(2.0 * g_transform(phi, 0.05).omega));
  CHECK(g_transform(twice, 0.05).alpha1 == g_transform(phi, 0.05).alpha1);

  const Eigen::Matrix<double, 3, 4> j = g_jacobian(phi, 0.03);
  for (int k = 0; k < 4; ++k) {
    auto comp = [&](int row, double v) {
      TukeyGarchParams p = phi;
      (k == 0 ? p.a0 : k == 1 ? p.a1 : k == 2 ? p.b1 : p.lambda) = v;
      const QGarchParams g = g_transform(p, 0.03);
      return row == 0 ? g.omega : row == 1 ? g.alpha1 : g.beta1;
    };
    const double x0 = k == 0 ? phi.a0 : k == 1 ? phi.a1 : k == 2 ? phi.b1 : phi.lambda;
    for (int row = 0; row < 3; ++row)
      CHECK(oracle::rel_close(j(row, k), oracle::central_diff([&](double v) { return comp(row, v); }, x0), 1e-6));
  }
  const Eigen::Matrix<double, 3, 4> jm = g_jacobian(phi, 0.5);
  CHECK(jm(0, 0) == 0.0);
  CHECK(jm(0, 2) == 0.0);
  CHECK(jm(1, 1) == 0.0);
}

TEST_CASE("QS kernel", "[cqr]") {
  CHECK(qs_kernel(0.0) == 1.0);
  CHECK(qs_kernel(1.0) == Approx(0.1378605817).epsilon(1e-9));
  CHECK(qs_kernel(0.3) == Approx(0.8777967203).epsilon(1e-9));
  for (double x : {0.3, 1.7, 1e-5, 1e-3, 3.3}) {
    CHECK(qs_kernel(-x) == qs_kernel(x));
    CHECK(std::abs(qs_kernel(x)) <= 1.0);
  }
  // The small-argument expansion joins the closed form smoothly.
  const double edge = 1e-3 * 5.0 / (6.0 * M_PI);
  CHECK(qs_kernel(edge * 0.999) == Approx(qs_kernel(edge * 1.001)).epsilon(1e-9));
}

TEST_CASE("HAC estimator matches the double sum", "[cqr][oracle]") {
  Rng rng(7);
  for (Eigen::Index n : {5, 10, 33, 64}) {
    Eigen::MatrixXd X(n, 4);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int j = 0; j < 4; ++j) X(i, j) = normal_quantile(rng.uniform()) + (i > 0 ? 0.4 * X(i - 1, j) : 0.0);
    for (double B : {0.3, 2.0, 9.5, 100.0}) {
      const Eigen::MatrixXd a = hac_cov(X, B);
      const Eigen::MatrixXd b = oracle::brute_force_hac(X, B, 4);
      CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, b.cwiseAbs().maxCoeff()));
      CHECK((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  CHECK(hac_cov(Eigen::MatrixXd::Zero(10, 4), 3.0).cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd alt(8, 1);
  for (int i = 0; i < 8; ++i) alt(i, 0) = i % 2 == 0 ? 1.0 : -1.0;
  CHECK(hac_cov(alt, 1e-6)(0, 0) == Approx(2.0).epsilon(1e-9));

  const std::vector<double> z = oracle::normal_sample(5000, 8);
  Eigen::MatrixXd Z(5000, 1);
  for (int i = 0; i < 5000; ++i) Z(i, 0) = z[static_cast<std::size_t>(i)];
  const double v = (Z.array() - Z.mean()).square().sum() / 4999.0;
  CHECK(hac_cov(Z, 0.5)(0, 0) == Approx(v * 5000.0 / 4996.0).epsilon(0.10));
  CHECK_THROWS_AS(hac_cov(Eigen::MatrixXd::Zero(4, 4), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(hac_cov(Z, 0.0), std::invalid_argument);
}

TEST_CASE("automatic bandwidth", "[cqr]") {
  const std::vector<double> rho{0.5}, s2{1.0};
  CHECK(qs_bandwidth(1000, rho, s2) == Approx(9.164067971).epsilon(1e-9));
  CHECK(qs_bandwidth(1000, rho, s2) == Approx(9.16).margin(5e-3));
  const std::vector<double> rho0{0.0, 0.0}, s20{1.0, 2.0};
  CHECK(qs_bandwidth(1000, rho0, s20) == 1.0);

  // Zero lag-one autocovariance without a constant column.
  Eigen::MatrixXd X(200, 2);
  for (int i = 0; i < 200; ++i) {
    X(i, 0) = i % 2 == 0 ? 1.0 : 0.0;
    X(i, 1) = i % 2 == 0 ? 0.0 : 2.0;
  }
  CHECK(auto_bandwidth(X) == 1.0);

  Rng rng(9);
  Eigen::MatrixXd A(3000, 4);
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (int j = 0; j < 4; ++j)
      A(i, j) = normal_quantile(rng.uniform()) + (i > 0 ? 0.2 * (j + 1) * A(i - 1, j) : 0.0);
  const std::vector<double> one(4, 1.0), two(4, 2.0);
  CHECK(auto_bandwidth(A, two) == Approx(auto_bandwidth(A, one)).epsilon(1e-12));
  CHECK(auto_bandwidth(A) == Approx(auto_bandwidth(A, one)).epsilon(1e-12));
  Eigen::MatrixXd C = A;
  C.col(2).setConstant(3.0);
  CHECK_THROWS_AS(auto_bandwidth(C), NumericalError);
}

TEST_CASE("quantile derivatives in phi", "[cqr][oracle]") {
  const ReturnSeries s = simulated("5.2", "tukey(-0.2)", 120, 10);
  const std::span<const double> y = s.values();
  const TukeyGarchParams phi{0.03, 0.12, 0.7, -0.25};
  const double tau = 0.02;
  auto q_at = [&](const TukeyGarchParams& p, std::size_t t) {
    return tukey_quantile(tau, p.lambda) * cqr_scale(p, y)[t];
  };
  auto qdot_at = [&](const TukeyGarchParams& p, std::size_t t) {
    const GeometricSums gs = geometric_sums(y, p.b1, 1);
    return cqr_qdot(tukey_quantile_derivs(tau, p.lambda), p.a0, p.a1, p.b1, gs.level[t], gs.d1[t]);
  };
  const GeometricSums gs = geometric_sums(y, phi.b1, 2);
  for (std::size_t t : {0u, 1u, 5u, 119u}) {
    const TukeyQuantile q = tukey_quantile_derivs(tau, phi.lambda);
    const Eigen::Vector4d qd = cqr_qdot(q, phi.a0, phi.a1, phi.b1, gs.level[t], gs.d1[t]);
    const Eigen::Matrix4d qdd = cqr_qddot(q, phi.a0, phi.a1, phi.b1, gs.level[t], gs.d1[t], gs.d2[t]);
    for (int k = 0; k < 4; ++k) {
      auto bump = [&](double v) {
        TukeyGarchParams p = phi;
        (k == 0 ? p.a0 : k == 1 ? p.a1 : k == 2 ? p.b1 : p.lambda) = v;
        return p;
      };
      const double x0 = k == 0 ? phi.a0 : k == 1 ? phi.a1 : k == 2 ? phi.b1 : phi.lambda;
      CHECK(oracle::rel_close(qd(k), oracle::central_diff([&](double v) { return q_at(bump(v), t); }, x0), 1e-6));
      for (int m = 0; m < 4; ++m)
        CHECK(oracle::rel_close(
            qdd(m, k), oracle::central_diff([&](double v) { return qdot_at(bump(v), t)(m); }, x0, 1e-5), 1e-6));
    }
  }
}

TEST_CASE("composite fit", "[cqr]") {
  const ReturnSeries s = simulated("5.2", "tukey(-0.2)", 400, 11);
  CqrConfig cfg = small_config();
  cfg.weights = compute_self_weights(s.values());
  const CqrFit f = cqr_fit(s, cfg);
  CHECK_NOTHROW(f.phi_hat.validate());
  const std::vector<double> levels = cqr_levels(cfg.tau0, cfg.h, cfg.K);
  CHECK(f.tau_levels == levels);
  const double at_hat = cqr_objective(s.values(), cfg.weights, levels, f.phi_hat);
  CHECK(f.objective_value == Approx(at_hat).epsilon(1e-9));
  CHECK(f.objective_value <= cqr_objective(s.values(), cfg.weights, levels, {0.02, 0.1, 0.8, -0.2}) + 1e-12);

  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const TukeyGarchParams p{f.phi_hat.a0 * (0.5 + rng.uniform()), f.phi_hat.a1 * (0.5 + rng.uniform()),
                             0.95 * rng.uniform(), -0.8 + 0.75 * rng.uniform()};
    CHECK(f.objective_value <= cqr_objective(s.values(), cfg.weights, levels, p) + 1e-12);
  }

  const CqrCovariance cv = cqr_asymptotic_cov(s, f, cfg.weights);
  CHECK((cv.sigma - cv.sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * cv.sigma.cwiseAbs().maxCoeff());
  for (int i = 0; i < 4; ++i) CHECK(cv.sigma(i, i) >= 0.0);
  CHECK(cv.hac_bandwidth >= 1.0);
  const Eigen::Matrix3d tc = cv.theta_cov_at(cfg.tau0);
  CHECK((tc - tc.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(std::sqrt(tc(2, 2)) == Approx(cv.phi_se()(2)).epsilon(1e-12));
  const CqrCovariance simple = cqr_asymptotic_cov(s, f, cfg.weights, 1.0, true);
  for (int i = 0; i < 4; ++i) CHECK(simple.sigma(i, i) >= 0.0);
}

TEST_CASE("constant-scale composite fit", "[cqr]") {
  const std::vector<double> z = oracle::normal_sample(300, 13);
  const ReturnSeries s(z);
  CqrConfig cfg = small_config();
  cfg.a1_fixed_zero = true;
  cfg.weights.assign(z.size(), 1.0);
  const CqrFit f = cqr_fit(s, cfg);
  CHECK(f.phi_hat.a1 == 0.0);
  const std::vector<double> levels = cqr_levels(cfg.tau0, cfg.h, cfg.K);
  // Tukey lambda = 0.14 with unit scale is close to the generating normal law.
  CHECK(f.objective_value <= cqr_objective(z, cfg.weights, levels, {0.5, 0.0, 0.5, 0.14}) + 1e-12);
  // Fitted quantiles sit near the empirical ones.
  for (double tau : levels) {
    const double fitted = tukey_quantile(tau, f.phi_hat.lambda) * f.phi_hat.a0 / (1.0 - f.phi_hat.b1);
    CHECK(fitted == Approx(empirical_quantile(z, tau)).margin(0.35));
  }
}

TEST_CASE("bandwidth selection", "[cqr]") {
  const ReturnSeries s = simulated("5.2", "tukey(-0.2)", 500, 14);
  CqrConfig cfg = small_config();
  const std::vector<double> one{0.06};
  const BandwidthSelection sel = select_bandwidth_h(s.slice(0, 400), s.slice(400, 100), 0.05, one, cfg);
  CHECK(sel.h_opt == 0.06);
  REQUIRE(sel.validation_loss.size() == 1);
  CHECK(sel.validation_loss[0] > 0.0);
  const std::vector<double> two{0.1, 0.04};
  const BandwidthSelection s2 = select_bandwidth_h(s.slice(0, 400), s.slice(400, 100), 0.05, two, cfg);
  CHECK(s2.h_grid == std::vector<double>{0.04, 0.1});
  CHECK(s2.validation_loss.size() == 2);
  CHECK(s2.validation_loss[s2.h_opt == 0.04 ? 0 : 1] == Approx(std::min(s2.validation_loss[0], s2.validation_loss[1])));
  CHECK_THROWS_AS(select_bandwidth_h(s.slice(0, 400), s.slice(400, 40), 0.05, one, cfg), std::invalid_argument);
  const std::vector<double> none;
  CHECK_THROWS_AS(select_bandwidth_h(s.slice(0, 400), s.slice(400, 100), 0.05, none, cfg), std::invalid_argument);
}

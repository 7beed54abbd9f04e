#include <catch_amalgamated.hpp>

#include <algorithm>
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

std::vector<char> hits_with(std::size_t n, std::size_t count, std::size_t stride) {
  std::vector<char> h(n, 0);
  for (std::size_t i = 0; i < count; ++i) h[(i * stride) % n] = 1;
  return h;
}

double ljung_box_pvalue(const std::vector<double>& x, int m) {
  const double n = static_cast<double>(x.size());
  const double mu = mean(x);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mu) * (v - mu);
  double q = 0.0;
  for (int k = 1; k <= m; ++k) {
    double ck = 0.0;
    for (std::size_t t = static_cast<std::size_t>(k); t < x.size(); ++t) ck += (x[t] - mu) * (x[t - k] - mu);
    const double r = ck / c0;
    q += r * r / (n - k);
  }
  return chi_squared_sf(n * (n + 2.0) * q, m);
}
}  // namespace

TEST_CASE("coverage statistics", "[backtest]") {
  const std::vector<char> h = hits_with(637, 39, 16);
  const CoverageStats c = ecr_pe(h, 0.05);
  CHECK(c.ecr == Approx(6.12).margin(5e-3));
  CHECK(std::round(c.pe * 100.0) / 100.0 == Approx(1.30));
  CHECK(c.pe == Approx(1.297).margin(5e-3));
  CHECK(ecr_pe(hits_with(100, 5, 20), 0.05).pe == 0.0);
  const std::vector<char> all(80, 1);
  const CoverageStats a = ecr_pe(all, 0.1);
  CHECK(a.ecr == 100.0);
  CHECK(a.pe == Approx(0.9 / std::sqrt(0.1 * 0.9 / 80.0)));
  CHECK_THROWS_AS(ecr_pe(std::vector<char>{}, 0.05), std::invalid_argument);
}

TEST_CASE("conditional coverage test", "[backtest]") {
  const std::vector<char> zeros(100, 0);
  const CcResult z = cc_test(zeros, 0.05);
  CHECK(z.degenerate);
  CHECK(z.df == 1);
  CHECK(z.lr_uc == Approx(-200.0 * std::log(0.95)));
  CHECK(z.lr_uc == Approx(10.26).margin(5e-3));
  CHECK(z.p_value == Approx(0.0013604454302788).epsilon(1e-9));
  CHECK(z.p_value == Approx(0.00137).margin(2e-5));

  const CcResult e = cc_test(hits_with(200, 10, 20), 0.05);
  CHECK_FALSE(e.degenerate);
  CHECK(e.lr_uc == Approx(0.0).margin(1e-12));
  CHECK((e.p_value >= 0.0 && e.p_value <= 1.0));
  CHECK(e.statistic == Approx(e.lr_uc + e.lr_ind));

  std::vector<char> clustered(400, 0);
  for (int i = 100; i < 120; ++i) clustered[static_cast<std::size_t>(i)] = 1;
  const CcResult c = cc_test(clustered, 0.05);
  CHECK(c.lr_ind > 20.0);
  CHECK(c.p_value < 0.01);
  CHECK_THROWS_AS(cc_test(std::vector<char>(10, 0), 0.05), std::invalid_argument);
}

TEST_CASE("dynamic quantile test", "[backtest]") {
  std::vector<char> clustered(500, 0);
  for (int i = 200; i < 225; ++i) clustered[static_cast<std::size_t>(i)] = 1;
  const DqResult c = dq_test(clustered, 0.05);
  CHECK(c.p_value < 0.05);
  CHECK(c.df == 5);
  CHECK_FALSE(c.reduced);

  const DqResult z = dq_test(std::vector<char>(300, 0), 0.05);
  CHECK(z.reduced);
  CHECK(z.df == 1);
  // Only the intercept survives: statistic m tau^2 / (tau (1 - tau)) with m = 296 rows.
  CHECK(z.statistic == Approx(296.0 * 0.05 / 0.95));

  CHECK_THROWS_AS(dq_test(clustered, 0.05, 0), std::invalid_argument);
  CHECK_THROWS_AS(dq_test(std::vector<char>(12, 0), 0.05, 4), std::invalid_argument);

  Rng rng(3);
  std::vector<char> iid(637);
  for (char& v : iid) v = rng.uniform() < 0.05 ? 1 : 0;
  const BacktestReport r = backtest(iid, 0.05);
  CHECK(r.n_test == 637);
  CHECK((r.dq_pvalue >= 0.0 && r.dq_pvalue <= 1.0));
  CHECK((r.cc_pvalue >= 0.0 && r.cc_pvalue <= 1.0));
}

TEST_CASE("frozen rolling forecast equals the recursion", "[backtest]") {
  const ReturnSeries s = simulated("5.2", "normal", 400, 21);
  RollingConfig cfg;
  cfg.tau = 0.05;
  cfg.n0 = 300;
  cfg.frozen = QGarchParams{-0.16, -0.16, 0.8};
  const ForecastRun r = rolling_forecast(s, cfg);
  REQUIRE(r.forecasts.size() == 100);
  REQUIRE(r.hits.size() == 100);
  CHECK(r.first_index == 300);
  std::vector<double> absy;
  for (double v : s.values()) absy.push_back(std::abs(v));
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t t = 300 + i;
    CHECK(r.forecasts[i] == Approx(cond_quantile(*cfg.frozen, absy, t + 1)).epsilon(1e-12));
    CHECK(r.actual[i] == s[t]);
    CHECK(r.hits[i] == (s[t] < r.forecasts[i] ? 1 : 0));
  }
}

TEST_CASE("rolling QR forecast refits on a sliding window", "[backtest]") {
  const ReturnSeries s = simulated("5.2", "normal", 230, 22);
  RollingConfig cfg;
  cfg.tau = 0.1;
  cfg.n0 = 200;
  const ForecastRun r = rolling_forecast(s, cfg);
  REQUIRE(r.forecasts.size() == 30);
  for (std::size_t i : {0u, 17u, 29u}) {
    const std::size_t t = 200 + i;
    QrFitConfig q;
    q.tau = 0.1;
    const QuantileFit f = qr_fit(s.slice(t - 200, 200), q);
    CHECK(r.forecasts[i] == Approx(forecast_quantile(f.theta_hat, s.values().first(t))).epsilon(1e-12));
  }

  // With alpha1 boxed at zero the forecast is the weighted window quantile.
  RollingConfig c0 = cfg;
  c0.qr.box.fix(1, 0.0);
  c0.qr.box.fix(2, 0.5);
  const ForecastRun r0 = rolling_forecast(s, c0);
  for (std::size_t i = 0; i < 30; ++i) {
    const std::span<const double> win = s.values().subspan(i, 200);
    const std::vector<double> w = compute_self_weights(win);
    CHECK(r0.forecasts[i] == Approx(oracle::weighted_quantile(win, w, 0.1)).margin(1e-8));
  }

  RollingConfig bad = cfg;
  bad.n0 = 50;
  CHECK_THROWS_AS(rolling_forecast(s, bad), std::invalid_argument);
  bad.n0 = 230;
  CHECK_THROWS_AS(rolling_forecast(s, bad), std::invalid_argument);
  RollingConfig cq = cfg;
  cq.method = ForecastMethod::CQR;
  CHECK_THROWS_AS(rolling_forecast(s, cq), std::invalid_argument);
}

TEST_CASE("filtered historical simulation", "[backtest]") {
  const std::vector<double> y{1.0, -2.0, 0.5};
  const std::vector<double> h = fhs_scale(y, 0.1, 0.2, 0.5, 1.0);
  REQUIRE(h.size() == 4);
  CHECK(h[1] == Approx(0.1 + 0.2 + 0.5));
  CHECK(h[2] == Approx(0.1 + 0.4 + 0.4));
  CHECK(h[3] == Approx(0.1 + 0.1 + 0.45));

  std::vector<double> a1s;
  for (int rep = 0; rep < 5; ++rep) {
    const std::vector<double> z = oracle::normal_sample(5000, 300 + rep);
    const FhsModel m = fhs_fit(ReturnSeries(z));
    a1s.push_back(m.a1);
    CHECK(m.a0 > 0.0);
    CHECK(m.a1 >= 0.0);
    CHECK((m.b1 >= 0.0 && m.b1 < 1.0));
    // Gaussian QMLE matches h_t^2 to E y^2 = 1.
    const double lr = m.scale.back();
    CHECK(lr == Approx(1.0).margin(0.15));
    CHECK(m.forecast(0.5) == Approx(m.residual_quantile(0.5) * m.h_next));
    CHECK(std::abs(m.forecast(0.5)) < 0.1);
  }
  std::sort(a1s.begin(), a1s.end());
  CHECK(a1s[2] < 0.05);

  int not_rejected = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const ReturnSeries s = simulated("5.2", "normal", 2000, 400 + rep);
    const FhsModel m = fhs_fit(s);
    std::vector<double> ae;
    for (double e : m.residuals) ae.push_back(std::abs(e));
    not_rejected += ljung_box_pvalue(ae, 10) > 0.05 ? 1 : 0;
  }
  CHECK(not_rejected >= 8);
  CHECK_THROWS_AS(fhs_fit(ReturnSeries(oracle::normal_sample(150, 1))), std::invalid_argument);
}

TEST_CASE("rolling FHS forecast", "[backtest]") {
  const ReturnSeries s = simulated("5.2", "normal", 260, 23);
  RollingConfig cfg;
  cfg.method = ForecastMethod::FHS;
  cfg.tau = 0.05;
  cfg.n0 = 250;
  const ForecastRun r = rolling_forecast(s, cfg);
  REQUIRE(r.forecasts.size() == 10);
  const FhsModel m = fhs_fit(s.slice(0, 250));
  CHECK(r.forecasts[0] == Approx(m.forecast(0.05)).epsilon(1e-12));
  for (double f : r.forecasts) CHECK(f < 0.0);
}

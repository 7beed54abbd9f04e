#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "qgarch/qgarch.hpp"

using namespace qgarch;
using Catch::Approx;

namespace {
SimulationSpec spec_for(const CoefficientFunctions& c, std::size_t n, std::uint64_t seed) {
  SimulationSpec s;
  s.coef = c;
  s.n = n;
  s.seed = seed;
  return s;
}
}  // namespace

TEST_CASE("presets", "[simulate]") {
  const QGarchParams p = preset_setting("5.2", "normal").at(0.05);
  CHECK(p.omega == Approx(-0.164).margin(5e-4));
  CHECK(p.alpha1 == Approx(-0.164).margin(5e-4));
  CHECK(p.beta1 == 0.8);
  CHECK(preset_setting("5.3", "tukey(-0.2)").at(0.005).alpha1 == Approx(-1.437).margin(5e-4));
  const CoefficientFunctions c4 = preset_setting("5.4", "normal", 0.0);
  for (double u : {0.01, 0.3, 0.5, 0.99}) CHECK(c4.beta1(u) == 0.3);
  CHECK(preset_setting("5.4", "normal", 1.6).beta1(0.995) == Approx(0.3 + 1.6 * 0.495 * 0.495));
  CHECK(preset_setting("5.2", "tukey").at(0.3).omega == Approx(0.1 * tukey_quantile(0.3, -0.2)));
  CHECK_THROWS_AS(preset_setting("5.9", "normal"), std::invalid_argument);
  CHECK_THROWS(preset_setting("5.2", "cauchy"));
  for (const char* s : {"5.2", "5.3", "5.4"}) CHECK_NOTHROW(preset_setting(s, "normal", 1.0).validate());
}

TEST_CASE("simulation is deterministic in the seed", "[simulate]") {
  const auto c = preset_setting("5.3", "tukey(-0.2)");
  const ReturnSeries a = simulate_qgarch(spec_for(c, 500, 9));
  const ReturnSeries b = simulate_qgarch(spec_for(c, 500, 9));
  const ReturnSeries d = simulate_qgarch(spec_for(c, 500, 10));
  REQUIRE(a.size() == 500);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  CHECK_FALSE(std::equal(a.values().begin(), a.values().end(), d.values().begin()));
}

TEST_CASE("zero ARCH term gives i.i.d. innovations", "[simulate]") {
  CoefficientFunctions c;
  c.omega = [](double u) { return normal_quantile(u); };
  c.alpha1 = [](double) { return 0.0; };
  c.beta1 = [](double) { return 0.5; };
  const ReturnSeries s = simulate_qgarch(spec_for(c, 2000, 3));
  std::vector<double> v(s.values().begin(), s.values().end());
  std::sort(v.begin(), v.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = normal_cdf(v[i]);
    ks = std::max({ks, std::abs(f - static_cast<double>(i) / v.size()), std::abs(f - (i + 1.0) / v.size())});
  }
  CHECK(ks < 0.05);
}

TEST_CASE("median of the linear GARCH preset is near zero", "[simulate]") {
  const ReturnSeries s = simulate_qgarch(spec_for(preset_setting("5.2", "normal"), 100000, 12));
  CHECK(std::abs(empirical_quantile(s.values(), 0.5)) < 0.02);
}

TEST_CASE("signs follow the uniform draws", "[simulate]") {
  for (const char* name : {"5.2", "5.3"}) {
    SimulationSpec sp = spec_for(preset_setting(name, "tukey(-0.2)"), 3000, 4);
    const SimulatedPath p = simulate_qgarch_with_draws(sp);
    REQUIRE(p.draws.size() == p.series.size());
    const CoefficientFunctions& c = sp.coef;
    for (std::size_t t = 0; t < p.series.size(); ++t) {
      const double u = p.draws[t];
      // Scale bracket: omega(u)/Q(u) + alpha1(u)/Q(u) sum, positive when the coefficients share Q's sign.
      if (c.omega(u) * (u - 0.5) > 0.0 && c.alpha1(u) * (u - 0.5) >= 0.0)
        CHECK((p.series[t] > 0.0) == (u > 0.5));
    }
  }
}

TEST_CASE("truncation refinement and burn-in", "[simulate]") {
  SimulationSpec sp = spec_for(preset_setting("5.2", "normal"), 2000, 21);
  const ReturnSeries a = simulate_qgarch(sp);
  sp.truncation_tol = 0.5e-12;
  const ReturnSeries b = simulate_qgarch(sp);
  for (std::size_t t = 0; t < a.size(); ++t)
    CHECK(std::abs(a[t] - b[t]) <= 1e-8 * std::max(1.0, std::abs(a[t])));

  // Mean of |y| with doubled burn-in stays within 3 Monte-Carlo standard errors.
  auto mean_abs = [](const ReturnSeries& s) {
    std::vector<double> v;
    for (double x : s.values()) v.push_back(std::abs(x));
    return std::pair{mean(v), stddev(v) / std::sqrt(static_cast<double>(v.size()))};
  };
  SimulationSpec l = spec_for(preset_setting("5.2", "normal"), 20000, 22);
  const auto [m1, se1] = mean_abs(simulate_qgarch(l));
  l.burn_in = 1000;
  l.seed = 23;
  const auto [m2, se2] = mean_abs(simulate_qgarch(l));
  // The path is autocorrelated; inflate the i.i.d. standard error accordingly.
  CHECK(std::abs(m1 - m2) < 3.0 * 3.0 * std::sqrt(se1 * se1 + se2 * se2));
}

TEST_CASE("invalid simulation specs", "[simulate]") {
  CoefficientFunctions c = preset_setting("5.2", "normal");
  c.beta1 = [](double) { return 1.0; };
  CHECK_THROWS(simulate_qgarch(spec_for(c, 10, 1)));
  CHECK_THROWS(simulate_qgarch(spec_for(preset_setting("5.2", "normal"), 0, 1)));
}

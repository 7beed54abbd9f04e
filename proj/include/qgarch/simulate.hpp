#pragma once

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qgarch/error.hpp"
#include "qgarch/rng.hpp"
#include "qgarch/stats.hpp"
#include "qgarch/tukey.hpp"
#include "qgarch/types.hpp"

namespace qgarch {

struct SimulationSpec {
  CoefficientFunctions coef;
  std::size_t n = 0;
  std::size_t burn_in = 500;
  double truncation_tol = 1e-12;
  std::uint64_t seed = 0;
};

struct SimulatedPath {
  ReturnSeries series;
  std::vector<double> draws;  // U_t for the retained observations
};

/// Sample path of y_t = omega(U_t) + alpha1(U_t) sum_j beta1(U_t)^{j-1} |y_{t-j}|
/// started from y_t = 0 for t <= 0. The inner sum is truncated at the lag M
/// with beta_max^M < truncation_tol, beta_max the largest beta1 on a 10^4-point grid.
inline SimulatedPath simulate_qgarch_with_draws(const SimulationSpec& spec) {
  detail::require(spec.n >= 1, "simulate: n must be >= 1");
  detail::require(spec.truncation_tol > 0.0 && spec.truncation_tol < 1.0, "simulate: truncation_tol must lie in (0,1)");
  detail::require(spec.coef.omega && spec.coef.alpha1 && spec.coef.beta1, "simulate: missing coefficient function");

  double beta_max = 0.0;
  constexpr int grid = 10000;
  for (int i = 1; i < grid; ++i) beta_max = std::max(beta_max, spec.coef.beta1(static_cast<double>(i) / grid));
  if (beta_max >= 1.0) throw NumericalError("simulate: beta1 reaches 1 on the coefficient grid");
  const std::size_t max_lag =
      beta_max > 0.0 ? static_cast<std::size_t>(std::ceil(std::log(spec.truncation_tol) / std::log(beta_max))) : 1;

  const std::size_t total = spec.n + spec.burn_in;
  std::vector<double> y(total, 0.0);
  std::vector<double> u_log(total, 0.0);
  Rng rng(spec.seed);
  for (std::size_t t = 0; t < total; ++t) {
    const double u = rng.uniform();
    u_log[t] = u;
    const double b = spec.coef.beta1(u);
    if (!(b >= 0.0 && b < 1.0)) throw NumericalError("simulate: beta1(U_t) outside [0,1) at t=" + std::to_string(t));
    const std::size_t lags = std::min(t, max_lag);
    double sum = 0.0;
    double p = 1.0;
    for (std::size_t j = 1; j <= lags; ++j) {
      sum += p * std::abs(y[t - j]);
      p *= b;
    }
    y[t] = spec.coef.omega(u) + spec.coef.alpha1(u) * sum;
    if (!std::isfinite(y[t])) throw NumericalError("simulate: non-finite value at t=" + std::to_string(t));
  }
  std::vector<double> kept(y.begin() + static_cast<std::ptrdiff_t>(spec.burn_in), y.end());
  std::vector<double> draws(u_log.begin() + static_cast<std::ptrdiff_t>(spec.burn_in), u_log.end());
  return {ReturnSeries(std::move(kept)), std::move(draws)};
}

inline ReturnSeries simulate_qgarch(const SimulationSpec& spec) { return simulate_qgarch_with_draws(spec).series; }

/// Innovation quantile function F^{-1}: "normal" or "tukey(<lambda>)".
inline std::function<double(double)> innovation_quantile(const std::string& dist) {
  if (dist == "normal") return [](double u) { return normal_quantile(u); };
  if (dist.rfind("tukey(", 0) == 0 && dist.back() == ')') {
    const double lambda = std::stod(dist.substr(6, dist.size() - 7));
    detail::check_lambda(lambda);
    return [lambda](double u) { return tukey_quantile(u, lambda); };
  }
  if (dist == "tukey") return [](double u) { return tukey_quantile(u, -0.2); };
  throw std::invalid_argument("unknown innovation distribution '" + dist + "' (use normal or tukey(<lambda>))");
}

/// Coefficient settings of the simulation designs:
///   "5.2": omega = 0.1 F^{-1}, alpha1 = 0.1 F^{-1}, beta1 = 0.8
///   "5.3": omega = 0.1 F^{-1}, alpha1 = tau - 0.5 + 0.1 F^{-1}, beta1 = 0.3 + 0.6 |tau - 0.5|
///   "5.4": omega = 0.1 F^{-1}, alpha1 = 0.1 F^{-1}, beta1 = 0.3 + d (tau - 0.5)^2
inline CoefficientFunctions preset_setting(const std::string& name, const std::string& dist, double d = 0.0) {
  auto finv = innovation_quantile(dist);
  CoefficientFunctions c;
  c.omega = [finv](double u) { return 0.1 * finv(u); };
  if (name == "5.2") {
    c.alpha1 = [finv](double u) { return 0.1 * finv(u); };
    c.beta1 = [](double) { return 0.8; };
  } else if (name == "5.3") {
    c.alpha1 = [finv](double u) { return u - 0.5 + 0.1 * finv(u); };
    c.beta1 = [](double u) { return 0.3 + 0.6 * std::abs(u - 0.5); };
  } else if (name == "5.4") {
    detail::require(std::isfinite(d) && d >= 0.0, "setting 5.4: d must be a nonnegative number");
    c.alpha1 = [finv](double u) { return 0.1 * finv(u); };
    c.beta1 = [d](double u) { return 0.3 + d * (u - 0.5) * (u - 0.5); };
  } else {
    throw std::invalid_argument("unknown setting '" + name + "' (use 5.2, 5.3 or 5.4)");
  }
  c.name = "setting " + name + " / " + dist + (name == "5.4" ? " / d=" + std::to_string(d) : "");
  return c;
}

}  // namespace qgarch

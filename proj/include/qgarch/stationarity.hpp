#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "qgarch/error.hpp"
#include "qgarch/rng.hpp"
#include "qgarch/types.hpp"

namespace qgarch {

struct StationarityReport {
  bool satisfied = false;
  double sum_estimate = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo check of the strict stationarity condition
///   s <= 1:  sum_{j>=1} E[ |alpha1(U)|^s beta1(U)^{(j-1)s} ] < 1
///   s >  1:  sum_{j>=1} ( E[ |alpha1(U)|^s beta1(U)^{(j-1)s} ] )^{1/s} < 1
/// with E|omega(U)|^s < infinity checked on the same draws. The sum runs to
/// j_max; the verdict requires estimate + 2 standard errors < 1.
inline StationarityReport stationarity_check(const CoefficientFunctions& coef, double s, std::size_t mc_draws,
                                             std::size_t j_max, std::uint64_t seed) {
  detail::require(s > 0.0, "stationarity_check: s must be positive");
  detail::require(mc_draws >= 10000, "stationarity_check: at least 10^4 draws are required");
  detail::require(j_max >= 1, "stationarity_check: j_max must be positive");
  detail::require(coef.omega && coef.alpha1 && coef.beta1, "stationarity_check: missing coefficient function");

  Rng rng(seed);
  std::vector<double> abs_alpha_s(mc_draws);
  std::vector<double> beta_s(mc_draws);
  double omega_moment = 0.0;
  for (std::size_t i = 0; i < mc_draws; ++i) {
    const double u = rng.uniform();
    const double om = coef.omega(u);
    const double al = coef.alpha1(u);
    const double be = coef.beta1(u);
    if (!std::isfinite(om) || !std::isfinite(al) || !std::isfinite(be) || be < 0.0)
      throw NumericalError("stationarity_check: invalid coefficient draw at u=" + std::to_string(u));
    abs_alpha_s[i] = std::pow(std::abs(al), s);
    beta_s[i] = std::pow(be, s);
    omega_moment += std::pow(std::abs(om), s);
  }
  if (!std::isfinite(omega_moment)) throw NumericalError("stationarity_check: E|omega(U)|^s is not finite");

  const double m = static_cast<double>(mc_draws);
  StationarityReport rep;
  if (s <= 1.0) {
    // Per-draw partial geometric sums; their mean is the estimate.
    double sum = 0.0;
    double sumsq = 0.0;
    for (std::size_t i = 0; i < mc_draws; ++i) {
      const double b = beta_s[i];
      const double g = b < 1.0 ? (1.0 - std::pow(b, static_cast<double>(j_max))) / (1.0 - b)
                               : static_cast<double>(j_max);
      const double v = abs_alpha_s[i] * g;
      sum += v;
      sumsq += v * v;
    }
    rep.sum_estimate = sum / m;
    const double var = std::max(sumsq / m - rep.sum_estimate * rep.sum_estimate, 0.0);
    rep.std_error = std::sqrt(var * m / (m - 1.0) / m);
  } else {
    // Nonlinear in the expectations: standard error from 20 batch estimates.
    constexpr std::size_t batches = 20;
    const std::size_t per = mc_draws / batches;
    auto estimate = [&](std::size_t lo, std::size_t hi) {
      std::vector<double> e(j_max, 0.0);
      for (std::size_t i = lo; i < hi; ++i) {
        double p = abs_alpha_s[i];
        for (std::size_t j = 0; j < j_max; ++j) {
          e[j] += p;
          p *= beta_s[i];
        }
      }
      double total = 0.0;
      for (double v : e) total += std::pow(v / static_cast<double>(hi - lo), 1.0 / s);
      return total;
    };
    rep.sum_estimate = estimate(0, mc_draws);
    double bs = 0.0;
    double bss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const double v = estimate(b * per, (b + 1) * per);
      bs += v;
      bss += v * v;
    }
    const double bm = bs / batches;
    const double bvar = std::max(bss / batches - bm * bm, 0.0) * batches / (batches - 1.0);
    rep.std_error = std::sqrt(bvar / batches);
  }
  if (!std::isfinite(rep.sum_estimate)) throw NumericalError("stationarity_check: non-finite estimate");
  rep.satisfied = rep.sum_estimate + 2.0 * rep.std_error < 1.0;
  return rep;
}

}  // namespace qgarch

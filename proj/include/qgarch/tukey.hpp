#pragma once

#include <cmath>

#include "qgarch/error.hpp"

namespace qgarch {

/// Tukey-lambda quantile Q_tau(lambda) = (tau^lambda - (1-tau)^lambda) / lambda
/// with its first and second derivatives in lambda.
struct TukeyQuantile {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

namespace detail {
inline void check_lambda(double lambda) {
  require_domain(std::isfinite(lambda) && std::abs(lambda) >= 1e-8, "Tukey-lambda: lambda must be nonzero");
}
}  // namespace detail

inline double tukey_quantile(double tau, double lambda) {
  detail::require_domain(tau > 0.0 && tau < 1.0, "tukey_quantile: tau must lie in (0,1)");
  detail::check_lambda(lambda);
  if (tau == 0.5) return 0.0;
  const double a = std::log(tau);
  const double b = std::log1p(-tau);
  return (std::expm1(lambda * a) - std::expm1(lambda * b)) / lambda;
}

inline TukeyQuantile tukey_quantile_derivs(double tau, double lambda) {
  detail::require_domain(tau > 0.0 && tau < 1.0, "tukey_quantile: tau must lie in (0,1)");
  detail::check_lambda(lambda);
  if (tau == 0.5) return {};
  const double a = std::log(tau);
  const double b = std::log1p(-tau);
  const double pa = std::exp(lambda * a);
  const double pb = std::exp(lambda * b);
  const double la = lambda * a - 1.0;
  const double lb = lambda * b - 1.0;
  TukeyQuantile q;
  q.value = (std::expm1(lambda * a) - std::expm1(lambda * b)) / lambda;
  q.d1 = (pa * la - pb * lb) / (lambda * lambda);
  q.d2 = (pa * (la * la + 1.0) - pb * (lb * lb + 1.0)) / (lambda * lambda * lambda);
  return q;
}

}  // namespace qgarch

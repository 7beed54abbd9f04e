#pragma once

#include "qgarch/error.hpp"

namespace qgarch {

namespace detail {
inline void check_tau(double tau) {
  require_domain(tau > 0.0 && tau < 1.0, "quantile level tau must lie in (0,1)");
}
}  // namespace detail

/// psi_tau(x) = tau - I(x < 0), with I(0 < 0) = 0.
inline double psi(double tau, double x) {
  detail::check_tau(tau);
  return x < 0.0 ? tau - 1.0 : tau;
}

/// Check loss rho_tau(x) = x (tau - I(x < 0)).
inline double check_loss(double tau, double x) {
  detail::check_tau(tau);
  return x < 0.0 ? x * (tau - 1.0) : x * tau;
}

}  // namespace qgarch

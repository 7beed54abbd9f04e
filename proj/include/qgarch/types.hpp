#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qgarch/error.hpp"

namespace qgarch {

/// Upper margin for the persistence coefficient: beta1 <= 1 - kBoxEps.
inline constexpr double kBoxEps = 1e-6;

/// Observed returns y_1..y_n, optionally labelled (dates).
class ReturnSeries {
 public:
  ReturnSeries() = default;

  explicit ReturnSeries(std::vector<double> values, std::vector<std::string> labels = {})
      : values_(std::move(values)), labels_(std::move(labels)) {
    detail::require(!values_.empty(), "ReturnSeries: at least one observation is required");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i]))
        throw std::invalid_argument("ReturnSeries: non-finite value at index " + std::to_string(i));
    }
    detail::require(labels_.empty() || labels_.size() == values_.size(),
                    "ReturnSeries: labels must match values in length");
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  bool has_labels() const noexcept { return !labels_.empty(); }

  /// Observations [first, first + count) as a new series (labels carried along).
  ReturnSeries slice(std::size_t first, std::size_t count) const {
    detail::require(first + count <= values_.size() && count > 0, "ReturnSeries::slice: out of range");
    std::vector<double> v(values_.begin() + first, values_.begin() + first + count);
    std::vector<std::string> l;
    if (has_labels()) l.assign(labels_.begin() + first, labels_.begin() + first + count);
    return ReturnSeries(std::move(v), std::move(l));
  }

 private:
  std::vector<double> values_;
  std::vector<std::string> labels_;
};

/// Quantile GARCH(1,1) coefficients (omega, alpha1, beta1) at one quantile level.
struct QGarchParams {
  double omega = 0.0;
  double alpha1 = 0.0;
  double beta1 = 0.0;

  void validate() const {
    detail::require(std::isfinite(omega) && std::isfinite(alpha1) && std::isfinite(beta1),
                    "QGarchParams: non-finite coefficient");
    detail::require(beta1 >= 0.0 && beta1 <= 1.0 - kBoxEps, "QGarchParams: beta1 must lie in [0, 1)");
  }
};

/// Linear GARCH(1,1) coefficients with Tukey-lambda innovations.
struct TukeyGarchParams {
  double a0 = 0.0;
  double a1 = 0.0;
  double b1 = 0.0;
  double lambda = 1.0;

  void validate() const {
    detail::require(std::isfinite(a0) && std::isfinite(a1) && std::isfinite(b1) && std::isfinite(lambda),
                    "TukeyGarchParams: non-finite coefficient");
    detail::require(a0 > 0.0, "TukeyGarchParams: a0 must be positive");
    detail::require(a1 >= 0.0, "TukeyGarchParams: a1 must be nonnegative");
    detail::require(b1 >= 0.0 && b1 <= 1.0 - kBoxEps, "TukeyGarchParams: b1 must lie in [0, 1)");
    detail::require(std::abs(lambda) >= 1e-8, "TukeyGarchParams: lambda must be nonzero");
  }
};

/// Coefficient functions u -> omega(u), alpha1(u), beta1(u) of the
/// random-coefficient representation.
struct CoefficientFunctions {
  std::function<double(double)> omega;
  std::function<double(double)> alpha1;
  std::function<double(double)> beta1;
  std::string name;

  QGarchParams at(double tau) const { return {omega(tau), alpha1(tau), beta1(tau)}; }

  /// Checks beta1 in [0,1) on a grid and the median constraint omega(0.5) = alpha1(0.5) = 0.
  void validate(std::size_t grid = 999) const {
    detail::require(omega && alpha1 && beta1, "CoefficientFunctions: missing function");
    for (std::size_t i = 1; i <= grid; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(grid + 1);
      const double b = beta1(u);
      detail::require(std::isfinite(b) && b >= 0.0 && b < 1.0,
                      "CoefficientFunctions: beta1(u) outside [0,1) at u=" + std::to_string(u));
    }
    detail::require(std::abs(omega(0.5)) <= 1e-12 && std::abs(alpha1(0.5)) <= 1e-12,
                    "CoefficientFunctions: omega(0.5) and alpha1(0.5) must vanish");
  }
};

}  // namespace qgarch

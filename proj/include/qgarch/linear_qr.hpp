#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qgarch/error.hpp"

namespace qgarch {

/// Weighted linear quantile regression with P regressors and per-row levels:
///   minimize_b  sum_i w_i rho_{tau_i}(y_i - x_i' b).
/// `tau` has length 1 (common level) or length N.
template <int P>
struct LinearQrData {
  std::span<const double> y;
  std::array<std::span<const double>, P> x;
  std::span<const double> w;
  std::span<const double> tau;
};

template <int P>
struct LinearQrResult {
  Eigen::Matrix<double, P, 1> coef;
  double objective = 0.0;
  std::array<std::size_t, P> basis{};  // rows interpolated exactly at the solution
  int iterations = 0;
};

namespace detail {

struct Kink {
  double s;
  double weight;
  std::size_t row;
};

// Smallest kink s at which the accumulated weight reaches `need`. Reorders `c`.
inline std::size_t weighted_select(std::vector<Kink>& c, double need) {
  std::size_t lo = 0;
  std::size_t hi = c.size();
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(c.begin() + static_cast<std::ptrdiff_t>(lo), c.begin() + static_cast<std::ptrdiff_t>(mid),
                     c.begin() + static_cast<std::ptrdiff_t>(hi),
                     [](const Kink& a, const Kink& b) { return a.s < b.s; });
    double left = 0.0;
    for (std::size_t i = lo; i < mid; ++i) left += c[i].weight;
    if (left >= need) {
      hi = mid;
    } else if (left + c[mid].weight >= need) {
      return mid;
    } else {
      need -= left + c[mid].weight;
      lo = mid + 1;
    }
  }
  return lo;
}

}  // namespace detail

/// Exact solver for P = 1 or 2: descends along the edges of the piecewise-linear objective
/// from vertex to vertex (a vertex is a set of P rows with zero residual).
/// Each step picks the steepest edge and moves to the minimizing kink, so the
/// objective strictly decreases. Pass the basis of a nearby problem in `warm`
/// to start from it.
template <int P>
LinearQrResult<P> solve_linear_qr(const LinearQrData<P>& d, const std::array<std::size_t, P>* warm = nullptr,
                                  int max_iter = 100000) {
  static_assert(P == 1 || P == 2, "solve_linear_qr supports one or two regressors");
  using Vec = Eigen::Matrix<double, P, 1>;
  using Mat = Eigen::Matrix<double, P, P>;
  const std::size_t n = d.y.size();
  detail::require(n >= static_cast<std::size_t>(P), "linear QR: fewer rows than regressors");
  detail::require(d.w.size() == n, "linear QR: weights length mismatch");
  detail::require(d.tau.size() == 1 || d.tau.size() == n, "linear QR: tau must have length 1 or N");
  for (int k = 0; k < P; ++k) detail::require(d.x[k].size() == n, "linear QR: regressor length mismatch");

  auto tau_at = [&](std::size_t i) { return d.tau.size() == 1 ? d.tau[0] : d.tau[i]; };
  auto row = [&](std::size_t i) {
    Vec v;
    for (int k = 0; k < P; ++k) v(k) = d.x[k][i];
    return v;
  };

  double xscale = 0.0;
  for (int k = 0; k < P; ++k)
    for (std::size_t i = 0; i < n; ++i) xscale = std::max(xscale, std::abs(d.x[k][i]));
  if (!(xscale > 0.0)) throw NumericalError("linear QR: all regressors are zero");
  const double det_tol = 1e-13 * std::pow(xscale, P);

  auto basis_matrix = [&](const std::array<std::size_t, P>& b) {
    Mat m;
    for (int j = 0; j < P; ++j) m.row(j) = row(b[j]).transpose();
    return m;
  };
  auto usable = [&](const std::array<std::size_t, P>& b) {
    for (int j = 0; j < P; ++j)
      if (b[j] >= n) return false;
    return std::abs(basis_matrix(b).determinant()) > det_tol;
  };

  std::array<std::size_t, P> basis{};
  if (warm != nullptr && usable(*warm)) {
    basis = *warm;
  } else {
    // Cold start: weighted least squares, then the closest rows that form a basis.
    Mat xtx = Mat::Zero();
    Vec xty = Vec::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec xi = row(i);
      xtx.noalias() += d.w[i] * xi * xi.transpose();
      xty += d.w[i] * d.y[i] * xi;
    }
    Vec b0 = xtx.completeOrthogonalDecomposition().solve(xty);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> absr(n);
    for (std::size_t i = 0; i < n; ++i) absr[i] = std::abs(d.y[i] - row(i).dot(b0));
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return absr[a] < absr[b]; });
    int filled = 0;
    for (std::size_t idx = 0; idx < n && filled < P; ++idx) {
      basis[filled] = order[idx];
      Mat m = Mat::Identity();
      for (int j = 0; j <= filled; ++j) m.row(j) = row(basis[j]).transpose();
      // Leading block must stay nonsingular.
      const double det = m.topLeftCorner(filled + 1, filled + 1).determinant();
      if (std::abs(det) > 1e-13 * std::pow(xscale, filled + 1)) ++filled;
    }
    if (filled < P) throw NumericalError("linear QR: design matrix is rank deficient");
    if (!usable(basis)) throw NumericalError("linear QR: could not find a nonsingular starting basis");
  }

  std::vector<double> r(n);
  std::vector<char> zero(n, 0);
  std::vector<std::size_t> zero_rows;
  std::vector<detail::Kink> kinks;
  kinks.reserve(n);

  const double* x0 = d.x[0].data();
  const double* x1 = d.x[P - 1].data();
  const double* wp = d.w.data();
  const bool common_tau = d.tau.size() == 1;

  // Subgradient part of the rows with nonzero residual, -sum w psi(r) x, refreshed per vertex.
  Vec grad = Vec::Zero();

  // Slope at s = 0+ of the objective along b + s d.
  auto slope = [&](const Vec& dir) {
    double g = grad.dot(dir);
    for (std::size_t i : zero_rows) {
      const double ai = row(i).dot(dir);
      const double t = tau_at(i);
      // The residual -s a_i leaves zero on the side given by the sign of a_i.
      g += ai > 0.0 ? wp[i] * ai * (1.0 - t) : -wp[i] * ai * t;
    }
    return g;
  };

  LinearQrResult<P> res;
  for (int iter = 0;; ++iter) {
    if (iter >= max_iter) throw NumericalError("linear QR: iteration limit reached");
    const Mat xb = basis_matrix(basis);
    Vec yb;
    for (int j = 0; j < P; ++j) yb(j) = d.y[basis[j]];
    const Vec b = xb.partialPivLu().solve(yb);

    zero_rows.clear();
    double gscale = 0.0;
    {
      const double b0 = b(0);
      const double b1 = P == 2 ? b(P - 1) : 0.0;
      const double ab0 = std::abs(b0);
      const double ab1 = std::abs(b1);
      for (std::size_t i = 0; i < n; ++i) {
        const double fit = P == 2 ? x0[i] * b0 + x1[i] * b1 : x0[i] * b0;
        r[i] = d.y[i] - fit;
        const double scale = std::abs(d.y[i]) + std::abs(x0[i]) * ab0 + (P == 2 ? std::abs(x1[i]) * ab1 : 0.0);
        zero[i] = std::abs(r[i]) <= 1e-12 * scale;
        gscale += wp[i] * (std::abs(x0[i]) + (P == 2 ? std::abs(x1[i]) : 0.0));
      }
    }
    for (int j = 0; j < P; ++j) {
      r[basis[j]] = 0.0;
      zero[basis[j]] = 1;
    }
    {
      double g0 = 0.0;
      double g1 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (zero[i]) {
          zero_rows.push_back(i);
          continue;
        }
        const double t = common_tau ? d.tau[0] : d.tau[i];
        const double c = wp[i] * (r[i] < 0.0 ? t - 1.0 : t);
        g0 -= c * x0[i];
        if constexpr (P == 2) g1 -= c * x1[i];
      }
      grad(0) = g0;
      if constexpr (P == 2) grad(1) = g1;
    }

    // Candidate edges: at a vertex the objective is linear on cones whose
    // extreme rays keep P-1 zero-residual rows at zero.
    std::vector<std::pair<Vec, std::size_t>> dirs;
    if constexpr (P == 1) {
      dirs.push_back({Vec::Constant(1.0), n});
      dirs.push_back({Vec::Constant(-1.0), n});
    } else {
      // Basis rows first, so the nondegenerate case needs only these.
      std::vector<std::size_t> keep(basis.begin(), basis.end());
      for (std::size_t i : zero_rows)
        if (std::find(basis.begin(), basis.end(), i) == basis.end()) keep.push_back(i);
      for (std::size_t i : keep) {
        const Vec xi = row(i);
        Vec perp(-xi(1), xi(0));
        const double nrm = perp.norm();
        if (nrm == 0.0) continue;
        perp /= nrm;
        dirs.push_back({perp, i});
        dirs.push_back({-perp, i});
      }
    }

    double best_g = 0.0;
    std::size_t best_k = dirs.size();
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      const double g = slope(dirs[k].first);
      if (g < best_g) {
        best_g = g;
        best_k = k;
      }
    }

    if (best_k == dirs.size() || best_g >= -1e-13 * std::max(gscale, 1e-300)) {
      res.coef = b;
      res.basis = basis;
      res.iterations = iter;
      double obj = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = tau_at(i);
        obj += wp[i] * (r[i] < 0.0 ? r[i] * (t - 1.0) : r[i] * t);
      }
      res.objective = obj;
      return res;
    }

    // Line search: the slope rises by w_i |a_i| at each kink s_i = r_i / a_i > 0.
    kinks.clear();
    {
      const Vec& dir = dirs[best_k].first;
      const double d0 = dir(0);
      const double d1 = P == 2 ? dir(P - 1) : 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (zero[i]) continue;
        const double ai = P == 2 ? x0[i] * d0 + x1[i] * d1 : x0[i] * d0;
        if (ai == 0.0) continue;
        const double s = r[i] / ai;
        if (s > 0.0) kinks.push_back({s, wp[i] * std::abs(ai), i});
      }
    }
    double total = 0.0;
    for (const auto& k : kinks) total += k.weight;
    if (total < -best_g) throw NumericalError("linear QR: objective is unbounded below");
    const std::size_t enter = kinks[detail::weighted_select(kinks, -best_g)].row;
    if constexpr (P == 1) {
      basis[0] = enter;
    } else {
      basis = {dirs[best_k].second, enter};
    }
  }
}

}  // namespace qgarch

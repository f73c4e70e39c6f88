#pragma once

// Test-only reference implementations, deliberately independent of the
// library's evaluation paths: quadrature instead of closed forms, adaptive
// Runge-Kutta instead of exponential stepping, finite differences instead of
// analytic gradients, and active-set enumeration instead of the QP solver.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "wellflow/utr.hpp"
#include "wellflow/well_data.hpp"

namespace oracles {

// ---- adaptive Simpson quadrature -----------------------------------------
inline double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                          double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-12) {
  if (b <= a) return 0.0;
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48);
}

// E1 by quadrature: independent of the series / continued-fraction route.
inline double e1_quadrature(double x) {
  // integral_x^inf exp(-t)/t dt, truncated where exp(-t) is negligible
  const double cutoff = x + 60.0;
  return integrate([](double t) { return std::exp(-t) / t; }, x, cutoff, 1e-14);
}

// ---- dense trapezoid quadrature of the derivative-form convolution --------
// p(t) = p0 - sum_src [ jump * q(t-) + integral_0^t d p_u/ds (t - s) q(s) ds ]
// with the smooth derivative sampled densely on each constant-rate segment.
inline double convolution_quadrature(const wellflow::Utr& utr, const wellflow::RateHistory& rates,
                                     double t, int points_per_segment = 4000) {
  const auto& steps = rates.steps();
  double acc = utr.jump() * rates.value_before(t);
  for (std::size_t k = 0; k < steps.size(); ++k) {
    if (steps[k].t >= t) break;
    const double a = steps[k].t;
    const double b = std::min(t, k + 1 < steps.size() ? steps[k + 1].t : t);
    if (b <= a || steps[k].q == 0.0) continue;
    // trapezoid on s in [a, b] of qk * d(t - s); d evaluated away from 0
    const int n = points_per_segment;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double s = a + (b - a) * i / n;
      const double tau = std::max(t - s, 1e-12);
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      sum += w * utr.derivative(tau);
    }
    acc += steps[k].q * sum * (b - a) / n;
  }
  return acc;
}

// ---- adaptive RK45 (Cash-Karp) for scalar ODEs -----------------------------
inline double rk45_integrate(const std::function<double(double, double)>& f, double y0, double t0,
                             double t1, double tol = 1e-11) {
  static const double a2 = 0.2, a3 = 0.3, a4 = 0.6, a5 = 1.0, a6 = 0.875;
  static const double b21 = 0.2;
  static const double b31 = 3.0 / 40.0, b32 = 9.0 / 40.0;
  static const double b41 = 0.3, b42 = -0.9, b43 = 1.2;
  static const double b51 = -11.0 / 54.0, b52 = 2.5, b53 = -70.0 / 27.0, b54 = 35.0 / 27.0;
  static const double b61 = 1631.0 / 55296.0, b62 = 175.0 / 512.0, b63 = 575.0 / 13824.0,
                      b64 = 44275.0 / 110592.0, b65 = 253.0 / 4096.0;
  static const double c1 = 37.0 / 378.0, c3 = 250.0 / 621.0, c4 = 125.0 / 594.0,
                      c6 = 512.0 / 1771.0;
  static const double d1 = c1 - 2825.0 / 27648.0, d3 = c3 - 18575.0 / 48384.0,
                      d4 = c4 - 13525.0 / 55296.0, d5 = -277.0 / 14336.0, d6 = c6 - 0.25;

  double t = t0;
  double y = y0;
  double h = (t1 - t0) / 64.0;
  int guard = 0;
  while (t < t1) {
    if (++guard > 2000000) throw std::runtime_error("rk45: step limit");
    h = std::min(h, t1 - t);
    const double k1 = f(t, y);
    const double k2 = f(t + a2 * h, y + h * b21 * k1);
    const double k3 = f(t + a3 * h, y + h * (b31 * k1 + b32 * k2));
    const double k4 = f(t + a4 * h, y + h * (b41 * k1 + b42 * k2 + b43 * k3));
    const double k5 = f(t + a5 * h, y + h * (b51 * k1 + b52 * k2 + b53 * k3 + b54 * k4));
    const double k6 = f(t + a6 * h, y + h * (b61 * k1 + b62 * k2 + b63 * k3 + b64 * k4 + b65 * k5));
    const double dy = h * (c1 * k1 + c3 * k3 + c4 * k4 + c6 * k6);
    const double err = std::abs(h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6));
    const double scale = tol * std::max(1.0, std::abs(y));
    if (err <= scale || h <= 1e-14 * std::max(1.0, t)) {
      t += h;
      y += dy;
      if (err > 0.0) h *= std::min(5.0, 0.9 * std::pow(scale / err, 0.2));
    } else {
      h *= std::max(0.1, 0.9 * std::pow(scale / err, 0.25));
    }
  }
  return y;
}

// ---- central finite differences of a vector-valued function ---------------
inline Eigen::MatrixXd central_difference_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  for (int d = 0; d < x.size(); ++d) {
    const double step = h * std::max(1.0, std::abs(x(d)));
    Eigen::VectorXd xp = x;
    Eigen::VectorXd xm = x;
    xp(d) += step;
    xm(d) -= step;
    jac.col(d) = (f(xp) - f(xm)) / (2.0 * step);
  }
  return jac;
}

// ---- brute-force bound-constrained least squares ---------------------------
// Enumerates every subset of active bounds, solves the reduced normal
// equations and keeps the feasible minimizer. Exponential: vars <= ~12.
inline Eigen::VectorXd brute_force_bounded_ls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                              const Eigen::VectorXd& lower,
                                              const Eigen::VectorXd& upper) {
  const int n = static_cast<int>(a.cols());
  if (n > 12) throw std::invalid_argument("brute force oracle limited to 12 variables");
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = Eigen::VectorXd::Zero(n);
  // each variable: free (0), at lower (1), at upper (2)
  std::vector<int> state(static_cast<std::size_t>(n), 0);
  const long total = static_cast<long>(std::pow(3.0, n));
  for (long code = 0; code < total; ++code) {
    long c = code;
    bool valid = true;
    for (int i = 0; i < n; ++i) {
      state[static_cast<std::size_t>(i)] = static_cast<int>(c % 3);
      c /= 3;
      if (state[static_cast<std::size_t>(i)] == 1 && !std::isfinite(lower(i))) valid = false;
      if (state[static_cast<std::size_t>(i)] == 2 && !std::isfinite(upper(i))) valid = false;
    }
    if (!valid) continue;
    std::vector<int> free_idx;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (state[static_cast<std::size_t>(i)] == 0)
        free_idx.push_back(i);
      else
        x(i) = state[static_cast<std::size_t>(i)] == 1 ? lower(i) : upper(i);
    }
    if (!free_idx.empty()) {
      Eigen::MatrixXd af(a.rows(), static_cast<long>(free_idx.size()));
      for (std::size_t k = 0; k < free_idx.size(); ++k) af.col(static_cast<long>(k)) = a.col(free_idx[k]);
      Eigen::VectorXd rhs = b - a * x;
      const Eigen::VectorXd xf =
          af.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs);
      for (std::size_t k = 0; k < free_idx.size(); ++k) x(free_idx[k]) = xf(static_cast<long>(k));
    }
    bool feasible = true;
    for (int i = 0; i < n; ++i)
      if (x(i) < lower(i) - 1e-9 || x(i) > upper(i) + 1e-9) feasible = false;
    if (!feasible) continue;
    const double cost = (a * x - b).squaredNorm();
    if (cost < best - 1e-12) {
      best = cost;
      best_x = x;
    }
  }
  return best_x;
}

}  // namespace oracles

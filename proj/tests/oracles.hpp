#pragma once

// Reference computations written independently of the library: adaptive
// Simpson in one variable, periodic trapezoid in the azimuth, brute-force
// torus sums. Slow but simple.

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace oracle {

inline double simpson_step(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                           double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

/// Adaptive Simpson on [a, b] started from `pieces` equal panels, so narrow
/// peaks are seen before refinement begins.
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-12,
                        int pieces = 64) {
  double total = 0.0;
  const double h = (b - a) / pieces;
  for (int i = 0; i < pieces; ++i) {
    const double lo = a + i * h;
    const double hi = lo + h;
    const double fa = f(lo);
    const double fm = f(0.5 * (lo + hi));
    const double fb = f(hi);
    const double whole = h / 6.0 * (fa + 4.0 * fm + fb);
    total += simpson_step(f, lo, hi, fa, fm, fb, whole, tol / pieces, 40);
  }
  return total;
}

/// Orthonormal pair spanning the complement of a unit axis in R^3.
inline void complement(const Eigen::Vector3d& axis, Eigen::Vector3d& e1, Eigen::Vector3d& e2) {
  const Eigen::Vector3d seed = std::abs(axis.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  e1 = (seed - seed.dot(axis) * axis).normalized();
  e2 = axis.cross(e1);
}

/// Integral over S^2 of f with respect to surface measure, in cylindrical
/// coordinates (s, phi) around `axis`: dA = ds dphi. The azimuth uses a
/// periodic trapezoid rule, the height adaptive Simpson.
inline double sphere_integral(const std::function<double(const Eigen::Vector3d&)>& f, const Eigen::Vector3d& axis,
                              int azimuth_points = 256, double tol = 1e-11) {
  Eigen::Vector3d e1, e2;
  complement(axis, e1, e2);
  const double dphi = 2.0 * std::numbers::pi / azimuth_points;
  auto ring = [&](double s) {
    const double r = std::sqrt(std::max(0.0, 1.0 - s * s));
    double sum = 0.0;
    for (int j = 0; j < azimuth_points; ++j) {
      const double phi = j * dphi;
      sum += f(s * axis + r * (std::cos(phi) * e1 + std::sin(phi) * e2));
    }
    return sum * dphi;
  };
  return integrate(ring, -1.0, 1.0, tol, 128);
}

/// log of the sum over the torus [-pi, pi)^K of
/// exp{kappa'cos(psi) + sin(psi)'Lambda sin(psi)/2}, periodic trapezoid.
inline double log_torus_sum(const Eigen::VectorXd& kappa, const Eigen::MatrixXd& lambda, int points) {
  const int K = static_cast<int>(kappa.size());
  const double h = 2.0 * std::numbers::pi / points;
  std::vector<int> idx(K, 0);
  std::vector<double> values;
  double top = -1e300;
  while (true) {
    Eigen::VectorXd psi(K);
    for (int k = 0; k < K; ++k) psi[k] = -std::numbers::pi + idx[k] * h;
    const Eigen::VectorXd s = psi.array().sin().matrix();
    const double v = kappa.dot(psi.array().cos().matrix()) + 0.5 * s.dot(lambda * s);
    values.push_back(v);
    top = std::max(top, v);
    int k = 0;
    while (k < K && ++idx[k] == points) idx[k++] = 0;
    if (k == K) break;
  }
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - top);
  return top + std::log(sum) + K * std::log(h);
}

/// Correlation of (sin psi1, sin psi2) under the bivariate von Mises sine
/// model with concentrations k1, k2 and association lambda, by a periodic
/// trapezoid sum on the torus.
inline double mvm_sine_correlation(double k1, double k2, double lambda, int points = 512) {
  const double h = 2.0 * std::numbers::pi / points;
  double w_sum = 0.0, cross = 0.0, sq1 = 0.0, sq2 = 0.0;
  for (int i = 0; i < points; ++i) {
    const double a = -std::numbers::pi + i * h;
    for (int j = 0; j < points; ++j) {
      const double b = -std::numbers::pi + j * h;
      const double w = std::exp(k1 * (std::cos(a) - 1.0) + k2 * (std::cos(b) - 1.0) + lambda * std::sin(a) * std::sin(b) -
                                std::abs(lambda));
      w_sum += w;
      cross += w * std::sin(a) * std::sin(b);
      sq1 += w * std::sin(a) * std::sin(a);
      sq2 += w * std::sin(b) * std::sin(b);
    }
  }
  return cross / std::sqrt(sq1 * sq2);
}

/// I_v(x) by its power series, summed until terms stop contributing.
inline double bessel_series(double v, double x) {
  double term = std::pow(0.5 * x, v) / std::tgamma(v + 1.0);
  double sum = term;
  for (int k = 1; k < 1000; ++k) {
    term *= 0.25 * x * x / (k * (k + v));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

/// Rotation taking a random seed direction set; deterministic from angles.
inline Eigen::Matrix3d rotation(double a, double b, double c) {
  return (Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(b, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(c, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

}  // namespace oracle

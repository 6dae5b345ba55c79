#include "smallsphere/saddlepoint.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "smallsphere/error.hpp"

namespace smallsphere {

namespace {

// Diagonal of Psi splits into one entry kappa0 + h and p - 1 entries h; only
// the first two coordinates of xi are non-zero.
struct Blocks {
  double psi_axis;
  double psi_rest;
  double xi_axis;
  double xi_rest;
};

Blocks blocks(const SaddleProblem& prob) {
  const double psi_axis = prob.kappa0 + prob.h;
  const double psi_rest = prob.h;
  return {psi_axis, psi_rest, prob.nu * (2.0 * prob.kappa0 + prob.kappa1) / (2.0 * psi_axis),
          prob.kappa1 * std::sqrt(std::max(0.0, 1.0 - prob.nu * prob.nu)) / (2.0 * psi_rest)};
}

}  // namespace

void validate(const SaddleProblem& prob) {
  if (!(prob.kappa0 >= 0.0)) throw InvalidArgument("SaddleProblem: kappa0 must be non-negative");
  if (!(prob.kappa1 >= 0.0)) throw InvalidArgument("SaddleProblem: kappa1 must be non-negative");
  if (!(prob.nu > -1.0 && prob.nu < 1.0)) throw InvalidArgument("SaddleProblem: nu must lie in (-1, 1)");
  if (!(prob.h > 0.0)) throw InvalidArgument("SaddleProblem: h must be positive");
  if (prob.p < 3) throw InvalidArgument("SaddleProblem: p must be >= 3");
}

double kg_derivative(const SaddleProblem& prob, int order, double t) {
  if (order < 0 || order > 4) throw InvalidArgument("kg_derivative: order must be in 0..4");
  if (!(t < prob.h)) throw NumericalError("kg_derivative: t must lie below the pole at h");
  const Blocks b = blocks(prob);
  const double da = b.psi_axis - t;
  const double dr = b.psi_rest - t;
  // Non-centrality weights xi_i^2 psi_i^2.
  const double wa = b.xi_axis * b.xi_axis * b.psi_axis * b.psi_axis;
  const double wr = b.xi_rest * b.xi_rest * b.psi_rest * b.psi_rest;
  if (order == 0) {
    // Sum over coordinates of the log-MGF of Z_i^2 with Z_i ~ N(xi_i, 1/(2 psi_i)):
    //   -1/2 log(1 - t/psi_i) + xi_i^2 psi_i t / (psi_i - t).
    return -0.5 * std::log1p(-t / b.psi_axis) - 0.5 * (prob.p - 1) * std::log1p(-t / b.psi_rest) +
           wa / b.psi_axis * t / da + wr / b.psi_rest * t / dr;
  }
  double fact_prev = 1.0;  // (order - 1)!
  for (int i = 2; i < order; ++i) fact_prev *= i;
  const double fact = fact_prev * order;
  return 0.5 * fact_prev * (1.0 / std::pow(da, order) + (prob.p - 1) / std::pow(dr, order)) +
         fact * (wa / std::pow(da, order + 1) + wr / std::pow(dr, order + 1));
}

double solve_saddle(const SaddleProblem& prob) {
  validate(prob);
  auto residual = [&](double t) { return kg_derivative(prob, 1, t) - 1.0; };
  // Upper end: approach the pole at h until K'(t) exceeds 1.
  double gap = 1.0;
  double hi = prob.h - gap;
  while (residual(hi) <= 0.0) {
    gap *= 0.5;
    hi = prob.h - gap;
    if (gap < 1e-300) throw NumericalError("solve_saddle: could not bracket the root near h");
  }
  // Lower end: expand to the left by doubling.
  double step = 1.0;
  double lo = hi - step;
  int doublings = 0;
  while (residual(lo) >= 0.0) {
    step *= 2.0;
    lo = hi - step;
    if (++doublings > 200) throw NumericalError("solve_saddle: bracket expansion exceeded 200 doublings");
  }
  for (int iter = 0; iter < 400 && hi - lo > 1e-12 * std::max(1.0, std::abs(lo)); ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (residual(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  // Newton polish inside the bracket.
  double t = 0.5 * (lo + hi);
  for (int iter = 0; iter < 5; ++iter) {
    const double r = residual(t);
    if (r == 0.0) break;
    const double next = t - r / kg_derivative(prob, 2, t);
    if (!(next > lo && next < hi)) break;
    if (r < 0.0) lo = t; else hi = t;
    t = next;
  }
  return t;
}

double s1_log_norm_const(const SaddleProblem& prob) {
  validate(prob);
  const double t = solve_saddle(prob);
  const double k2 = kg_derivative(prob, 2, t);
  const double k3 = kg_derivative(prob, 3, t);
  const double k4 = kg_derivative(prob, 4, t);
  const double correction = k4 / (8.0 * k2 * k2) - 5.0 * k3 * k3 / (24.0 * k2 * k2 * k2);
  const double log_g1 = -0.5 * std::log(2.0 * std::numbers::pi * k2) + kg_derivative(prob, 0, t) - t + correction;

  const Blocks b = blocks(prob);
  const double log_det_psi = std::log(b.psi_axis) + (prob.p - 1) * std::log(b.psi_rest);
  const double xi_psi_xi = b.xi_axis * b.xi_axis * b.psi_axis + b.xi_rest * b.xi_rest * b.psi_rest;
  return std::log(2.0) + 0.5 * prob.p * std::log(std::numbers::pi) - 0.5 * log_det_psi + log_g1 + xi_psi_xi + prob.h -
         prob.kappa0 * prob.nu * prob.nu;
}

}  // namespace smallsphere

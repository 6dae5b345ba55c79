#pragma once

// Saddle-point approximation of the normalizing constant of the small-sphere
// distribution of the first kind,
//   a(kappa0, kappa1, nu) = integral over S^{p-1} of
//                           exp{-kappa0 (mu0'x - nu)^2 + kappa1 mu1'x} dA(x).
//
// The constant is rewritten through the density g of R = Z'Z with
// Z ~ N_p(xi, Psi^{-1}/2), Psi = diag(kappa0 + h, h, ..., h), evaluated at
// r = 1. The cumulant generating function of R is available in closed form, so
// g(1) is approximated by a second-order saddle-point density.

namespace smallsphere {

struct SaddleProblem {
  double kappa0 = 1.0;
  double kappa1 = 0.0;
  double nu = 0.0;
  double h = 1.0;  ///< any h > 0 gives the same exact constant
  int p = 3;
};

void validate(const SaddleProblem& prob);

/// K_g(t) for order == 0, otherwise its order-th derivative (order <= 4).
/// Requires t < h.
double kg_derivative(const SaddleProblem& prob, int order, double t);

/// Unique root of K_g'(t) = 1 on (-inf, h).
double solve_saddle(const SaddleProblem& prob);

/// log of the saddle-point approximation of a(kappa0, kappa1, nu), including
/// the second-order correction term.
double s1_log_norm_const(const SaddleProblem& prob);

}  // namespace smallsphere

#pragma once

#include <functional>

#include <Eigen/Core>

namespace smallsphere {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;  ///< estimated absolute error
};

/// Globally adaptive Gauss-Kronrod (7/15) integration of f over [a, b].
/// Throws NumericalError, carrying the residual estimate, if the requested
/// tolerance is not met within max_intervals subdivisions.
QuadratureResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                    double rel_tol = 1e-12, double abs_tol = 0.0, int max_intervals = 2000);

/// Gauss-Legendre rule with n nodes on [-1, 1].
struct GaussLegendreRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

GaussLegendreRule gauss_legendre(int n);

}  // namespace smallsphere

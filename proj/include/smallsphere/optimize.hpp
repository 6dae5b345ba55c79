#pragma once

// Derivative-free minimization used by the estimators.

#include <functional>

#include <Eigen/Core>

namespace smallsphere {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct SimplexOptions {
  double initial_step = 0.1;
  double shrink = 0.5;
  int max_evals = 2000;
  double f_tol = 1e-10;  ///< spread of simplex values, relative to 1 + |f_best|
  double x_tol = 1e-9;   ///< largest vertex distance from the best vertex
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evals = 0;
  bool converged = false;
};

/// Nelder-Mead simplex descent. Non-finite objective values count as +inf.
/// steps, when non-empty, overrides initial_step per coordinate.
MinimizeResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const SimplexOptions& opts = {},
                           const Eigen::VectorXd& steps = Eigen::VectorXd());

/// Newton iterations with central finite-difference derivatives (step h) and
/// a backtracking line search; only accepts decreasing moves.
MinimizeResult newton_polish(const Objective& f, const Eigen::VectorXd& x0, double h = 1e-4, int max_iters = 10);

/// Golden-section search on [lo, hi] for a unimodal function.
MinimizeResult golden_section(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-10);

}  // namespace smallsphere

#pragma once

// Approximate maximum-likelihood estimation.
//
// First kind (S1, iMS1, BM): alternate an axis update that fits the small
// sphere by constrained least squares with the remaining parameters held
// fixed, and a low-dimensional search over (angle of mu1, log kappa0,
// log kappa1) given the axis.
//
// Second kind (S2, iMS2, MS2): given an axis the likelihood separates into a
// truncated-normal problem per marginal and a horizontal problem, so the
// axis is found by maximizing the resulting profile likelihood.

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "smallsphere/densities.hpp"
#include "smallsphere/optimize.hpp"
#include "smallsphere/sample.hpp"

namespace smallsphere {

/// Concentration estimates are capped here and flagged as saturated.
inline constexpr double kMaxConcentration = 1e6;

struct FitOptions {
  /// Starting nu for the first-kind algorithm; default is the mean of mu0'x
  /// after a great-sphere pre-pass.
  std::optional<double> nu_init;
  int max_outer_iters = 100;
  double tol = 1e-6;  ///< relative change of the negative log-likelihood
  SimplexOptions simplex;

  // Restrictions used by the likelihood-ratio tests.
  std::optional<UnitVec> fixed_mu0;  ///< axis held at this value
  bool great_sphere = false;         ///< every nu pinned to 0
  bool zero_association = false;     ///< MS2 with Lambda = 0
  /// Second kind only: every kappa0 pinned to 0, so the vertical coordinate
  /// is uniform and each horizontal component is von Mises-Fisher.
  bool flat_vertical = false;
  /// MS2: after the profile search, replace the moment estimates of
  /// (zeta, kappa1, Lambda) by maximizers of the exact likelihood.
  bool exact_mvm = false;
  /// First kind: use the quadrature constant instead of the saddle point.
  bool exact_s1_const = false;
};

void validate(const FitOptions& opts);

struct FitResult {
  ModelParams params;
  double neg_log_lik = 0.0;
  int n_iters = 0;
  bool converged = false;
  std::vector<double> trace;
  bool saturated = false;  ///< some concentration hit kMaxConcentration
};

/// -sum_i log_density(params, row_i).
double neg_log_lik(const ModelParams& params, const DirectionalSample& data);

/// Axis update for a single marginal (rows of X are unit vectors):
/// argmin over unit mu of sum_i (mu'x_i - nu)^2.
UnitVec update_mu0_step1(const Eigen::MatrixXd& X, double nu);

/// Weighted multivariate form: argmin sum_k w_k sum_i (mu'x_ik - nu_k)^2.
UnitVec update_mu0_step1(const DirectionalSample& data, const std::vector<double>& nu,
                         const std::vector<double>& weights);

/// Minimizer of mu'Sm mu - 2 b'mu over the unit sphere (S symmetric). With
/// b = 0 returns the smallest-eigenvalue eigenvector, sign canonicalized.
UnitVec minimize_quadratic_on_sphere(const Eigen::MatrixXd& S, const Eigen::VectorXd& b);

struct Step2Result {
  UnitVec mu1;
  double kappa0 = 0.0;
  double kappa1 = 0.0;
  double nu = 0.0;
  double neg_log_lik = 0.0;
  bool converged = false;
};

/// Fits (mu1, kappa0, kappa1) of one first-kind marginal given the axis,
/// with mu1 restricted to span{mu0, mean direction}. warm, when given,
/// supplies the starting point.
Step2Result update_rest_step2(const Eigen::MatrixXd& X, const UnitVec& mu0, const FitOptions& opts = {},
                              const std::optional<Step2Result>& warm = std::nullopt);

struct VerticalFit {
  double nu = 0.0;
  double kappa0 = 0.0;
  double neg_log_lik = 0.0;
  bool saturated = false;
};

/// Truncated-normal MLE on (-1, 1) with sd = (2 kappa0)^{-1/2}.
VerticalFit fit_trunc_normal_mle(const Eigen::VectorXd& s);

/// Vertical MLE for dimension p: the truncated normal weighted by
/// (1 - s^2)^{(p-3)/2}. pin_nu_zero fixes nu = 0.
VerticalFit fit_vertical_mle(const Eigen::VectorXd& s, int p, bool pin_nu_zero = false);

struct VonMisesFit {
  double zeta = 0.0;
  double kappa = 0.0;
  bool saturated = false;
  bool mean_undefined = false;
};

VonMisesFit fit_von_mises_mle(const Eigen::VectorXd& angles);

struct VmfFit {
  UnitVec mu;
  double kappa = 0.0;
  bool saturated = false;
};

/// vMF MLE from unit-vector rows of X on S^{d-1}, d >= 2.
VmfFit fit_vmf_mle(const Eigen::MatrixXd& X);

struct MvmFit {
  Eigen::VectorXd zeta;
  Eigen::VectorXd kappa1;
  Eigen::MatrixXd lambda;
  bool saturated = false;
};

/// Moment estimates from an n x K matrix of angles: circular means, then the
/// inverse of the sine covariance supplies kappa1 (diagonal) and -Lambda
/// (off-diagonal).
MvmFit fit_mvm_moment(const Eigen::MatrixXd& angles);

/// Maximizer of the exact sine-model likelihood (K <= 3), started at start.
MvmFit fit_mvm_mle(const Eigen::MatrixXd& angles, const MvmFit& start);

FitResult fit_vmf(const DirectionalSample& data);
FitResult fit_s1(const DirectionalSample& data, const FitOptions& opts = {});
FitResult fit_ims1(const DirectionalSample& data, const FitOptions& opts = {});
/// First-kind fit with kappa1 = 0 (BmParams when K = 1, IMS1Params otherwise).
FitResult fit_bm(const DirectionalSample& data, const FitOptions& opts = {});
FitResult fit_s2(const DirectionalSample& data, const FitOptions& opts = {});
FitResult fit_ims2(const DirectionalSample& data, const FitOptions& opts = {});
FitResult fit_ms2(const DirectionalSample& data, const FitOptions& opts = {});

/// Dispatches on the model kind.
FitResult fit_model(ModelKind kind, const DirectionalSample& data, const FitOptions& opts = {});

/// Axis and per-marginal nu of a fitted small-sphere model.
struct SphereEstimate {
  UnitVec mu0;
  std::vector<double> nu;
};

SphereEstimate sphere_estimate(const ModelParams& params);

}  // namespace smallsphere

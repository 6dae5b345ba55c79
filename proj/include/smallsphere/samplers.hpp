#pragma once

// Random generation for every model family. S2, iMS2 and MS2 are sampled
// exactly by composing a vertical draw, a horizontal draw and a frame
// rotation; S1 and iMS1 use a two-block Gibbs sampler in (s, y).

#include <Eigen/Core>

#include "smallsphere/densities.hpp"
#include "smallsphere/random.hpp"
#include "smallsphere/sample.hpp"
#include "smallsphere/special_functions.hpp"

namespace smallsphere {

struct GibbsConfig {
  int burn_in = 500;
  int thin = 5;
};

void validate(const GibbsConfig& config);

/// Inverse-CDF draws from a truncated normal.
Eigen::VectorXd sample_trunc_normal(RngStream& rng, const TruncNormalSpec& spec, int n);

/// Best-Fisher draws from vM(mean_angle, kappa), returned in [-pi, pi).
Eigen::VectorXd sample_von_mises(RngStream& rng, double mean_angle, double kappa, int n);

/// n x p draws from vMF(mu, kappa) on S^{p-1}, p >= 2 (Wood's algorithm for
/// p >= 3, von Mises for p = 2).
Eigen::MatrixXd sample_vmf(RngStream& rng, const UnitVec& mu, double kappa, int n);

/// n x K draws of angles phi from the sine multivariate von Mises model with
/// centres zeta, by Gibbs sampling with von Mises full conditionals.
Eigen::MatrixXd sample_mvm(RngStream& rng, const Eigen::VectorXd& zeta, const Eigen::VectorXd& kappa1,
                           const Eigen::MatrixXd& lambda, const GibbsConfig& config, int n);

DirectionalSample sample_model(RngStream& rng, const ModelParams& params, int n, const GibbsConfig& config = {});

/// One draw of s from the S1 conditional s | y, where proj is the component
/// of y along the horizontal mode. Exposed for testing the grid sampler.
double sample_s1_vertical(RngStream& rng, int p, double kappa0, double kappa1, double nu, double proj, int grid = 512);

}  // namespace smallsphere

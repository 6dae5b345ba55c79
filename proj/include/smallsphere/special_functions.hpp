#pragma once

// Scalar special functions used by the densities and the tests of this
// library. Everything here works in double precision and exposes log-domain
// variants wherever the value can overflow at concentrations of a few hundred.

namespace smallsphere {

/// Largest Bessel order accepted by bessel_i / log_bessel_i. Orders reachable
/// from sphere dimensions p <= 20 (p/2 - 1 and the ratio partner p/2) stay
/// below this bound.
inline constexpr double kMaxBesselOrder = 10.0;

/// Modified Bessel function of the first kind I_order(x).
/// order must be a non-negative multiple of 1/2 not exceeding kMaxBesselOrder.
/// Overflows to +inf for x beyond ~700; use log_bessel_i there.
double bessel_i(double order, double x);

/// log I_order(x); finite for all x > 0 (returns -inf for x == 0, order > 0).
double log_bessel_i(double order, double x);

/// I_{order+1}(x) / I_order(x), computed without overflow.
double bessel_i_ratio(double order, double x);

double std_normal_pdf(double z);

/// Phi(z), absolute error below 1e-12.
double std_normal_cdf(double z);

/// log Phi(z), accurate deep into the lower tail.
double log_std_normal_cdf(double z);

/// log(Phi(b) - Phi(a)) for a < b without cancellation in either tail.
double log_normal_interval(double a, double b);

/// Inverse of Phi on (0, 1).
double std_normal_quantile(double prob);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);

/// Upper tail P(chi^2_df > x). df must be >= 1.
double chi_square_sf(double x, int df);

/// log of the surface area of S^{p-1} (the unit sphere in R^p).
double log_sphere_area(int p);

/// log of the integral of exp(kappa * mu'x) over S^{p-1} with respect to
/// surface measure. p >= 2, kappa >= 0.
double log_vmf_integral(int p, double kappa);

/// Normal distribution with mean and sd truncated to [lower, upper].
struct TruncNormalSpec {
  double mean = 0.0;
  double sd = 1.0;
  double lower = -1.0;
  double upper = 1.0;
};

void validate(const TruncNormalSpec& spec);

/// Log density; -inf outside [lower, upper].
double trunc_normal_logpdf(const TruncNormalSpec& spec, double s);

double trunc_normal_cdf(const TruncNormalSpec& spec, double s);

}  // namespace smallsphere

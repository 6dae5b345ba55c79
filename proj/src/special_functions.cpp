#include "smallsphere/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <limits>
#include <numbers>

#include "smallsphere/error.hpp"

namespace smallsphere {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

void check_order(double order) {
  const double twice = 2.0 * order;
  if (!(order >= 0.0) || order > kMaxBesselOrder || twice != std::floor(twice)) {
    throw InvalidArgument("bessel_i: order must be a multiple of 1/2 in [0, " +
                          std::to_string(kMaxBesselOrder) + "]");
  }
}

// Beyond this point the large-argument expansion converges to full precision
// for every supported order.
double asymptotic_threshold(double order) { return std::max(40.0, 3.0 * order * order); }

// log of sum_k (x^2/4)^k / (k! (order+1)_k); all terms positive.
double log_series_sum(double order, double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 100000; ++k) {
    term *= q / (k * (k + order));
    sum += term;
    if (term < kEps * sum * 0.25) break;
  }
  return std::log(sum);
}

// log of sum_k (-1)^k a_k(order) / x^k, the bracket of the Hankel expansion
// I_v(x) ~ e^x / sqrt(2 pi x) * [...].
double log_asymptotic_bracket(double order, double x) {
  const double mu = 4.0 * order * order;
  double term = 1.0;
  double sum = 1.0;
  double prev_abs = 1.0;
  for (int k = 1; k < 200; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (8.0 * k * x);
    const double abs_term = std::abs(term);
    if (abs_term > prev_abs && k > 2) break;  // expansion started diverging
    sum += term;
    if (abs_term < kEps * std::abs(sum) * 0.25) break;
    prev_abs = abs_term;
  }
  return std::log(sum);
}

}  // namespace

double log_bessel_i(double order, double x) {
  check_order(order);
  if (!(x >= 0.0)) throw InvalidArgument("bessel_i: x must be non-negative");
  if (x == 0.0) return order == 0.0 ? 0.0 : -kInf;
  if (std::isinf(x)) return kInf;
  if (x >= asymptotic_threshold(order)) {
    return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + log_asymptotic_bracket(order, x);
  }
  return order * std::log(0.5 * x) - std::lgamma(order + 1.0) + log_series_sum(order, x);
}

double bessel_i(double order, double x) { return std::exp(log_bessel_i(order, x)); }

double bessel_i_ratio(double order, double x) {
  if (x == 0.0) {
    check_order(order);
    return 0.0;
  }
  return std::exp(log_bessel_i(order + 1.0, x) - log_bessel_i(order, x));
}

double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double log_std_normal_cdf(double z) {
  if (z > -30.0) return std::log(std_normal_cdf(z));
  // Mills-ratio expansion: Phi(z) = phi(z)/|z| * (1 - 1/z^2 + 3/z^4 - 15/z^6 + ...)
  const double z2 = z * z;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 12; ++k) {
    term *= -(2.0 * k - 1.0) / z2;
    sum += term;
  }
  return -0.5 * z2 - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(-z) + std::log(sum);
}

double log_normal_interval(double a, double b) {
  if (!(a < b)) throw InvalidArgument("log_normal_interval: need a < b");
  if (a >= 0.0) {
    // Upper tail: Q(a) - Q(b) with Q(z) = Phi(-z).
    const double la = log_std_normal_cdf(-a);
    const double lb = log_std_normal_cdf(-b);
    return la + std::log1p(-std::exp(lb - la));
  }
  if (b <= 0.0) {
    const double lb = log_std_normal_cdf(b);
    const double la = log_std_normal_cdf(a);
    return lb + std::log1p(-std::exp(la - lb));
  }
  return std::log1p(-std_normal_cdf(a) - std_normal_cdf(-b));
}

double std_normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    if (prob == 0.0) return -kInf;
    if (prob == 1.0) return kInf;
    throw InvalidArgument("std_normal_quantile: probability outside [0, 1]");
  }
  // Acklam's rational approximation followed by one Halley step.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (prob < p_low) {
    const double q = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (prob <= 1.0 - p_low) {
    const double q = prob - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Refine against whichever tail keeps the residual well conditioned.
  const double e = prob < 0.5 ? std_normal_cdf(x) - prob : (1.0 - prob) - std_normal_cdf(-x);
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

namespace {

double gamma_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 10000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw InvalidArgument("gamma_p: need a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_continued_fraction(a, x);
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw InvalidArgument("gamma_q: need a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_series(a, x);
  return gamma_continued_fraction(a, x);
}

double chi_square_sf(double x, int df) {
  if (df < 1) throw InvalidArgument("chi_square_sf: df must be >= 1");
  if (!(x > 0.0)) return 1.0;
  return gamma_q(0.5 * df, 0.5 * x);
}

double log_sphere_area(int p) {
  if (p < 1) throw InvalidArgument("log_sphere_area: p must be >= 1");
  return std::log(2.0) + 0.5 * p * std::log(std::numbers::pi) - std::lgamma(0.5 * p);
}

double log_vmf_integral(int p, double kappa) {
  if (p < 2) throw InvalidArgument("log_vmf_integral: p must be >= 2");
  if (!(kappa >= 0.0)) throw InvalidArgument("log_vmf_integral: kappa must be >= 0");
  if (kappa == 0.0) return log_sphere_area(p);
  const double order = 0.5 * p - 1.0;
  if (kappa < 1e-8) {
    // Leading series term: the (kappa/2)^order factors cancel analytically.
    return log_sphere_area(p) + std::log1p(kappa * kappa / (2.0 * p));
  }
  return 0.5 * p * std::log(2.0 * std::numbers::pi) + log_bessel_i(order, kappa) - order * std::log(kappa);
}

void validate(const TruncNormalSpec& spec) {
  if (!(spec.sd > 0.0)) throw InvalidArgument("TruncNormalSpec: sd must be positive");
  if (!(spec.lower < spec.upper)) throw InvalidArgument("TruncNormalSpec: lower must be below upper");
}

double trunc_normal_logpdf(const TruncNormalSpec& spec, double s) {
  validate(spec);
  if (s < spec.lower || s > spec.upper) return -kInf;
  const double z = (s - spec.mean) / spec.sd;
  const double log_mass = log_normal_interval((spec.lower - spec.mean) / spec.sd, (spec.upper - spec.mean) / spec.sd);
  return -0.5 * z * z - std::log(spec.sd * std::sqrt(2.0 * std::numbers::pi)) - log_mass;
}

double trunc_normal_cdf(const TruncNormalSpec& spec, double s) {
  validate(spec);
  if (s <= spec.lower) return 0.0;
  if (s >= spec.upper) return 1.0;
  const double a = (spec.lower - spec.mean) / spec.sd;
  const double b = (spec.upper - spec.mean) / spec.sd;
  const double z = (s - spec.mean) / spec.sd;
  return std::exp(log_normal_interval(a, z) - log_normal_interval(a, b));
}

}  // namespace smallsphere

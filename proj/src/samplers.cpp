#include "smallsphere/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "smallsphere/error.hpp"

namespace smallsphere {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a - std::numbers::pi;
}

double von_mises_draw(RngStream& rng, double mean, double kappa) {
  if (kappa < 1e-8) return wrap_angle(kTwoPi * rng.uniform());
  if (kappa > 1e6) return wrap_angle(mean + rng.normal() / std::sqrt(kappa));
  double s;
  if (kappa < 1e-5) {
    s = 1.0 / kappa + kappa;
  } else {
    const double r = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
    const double rho = (r - std::sqrt(2.0 * r)) / (2.0 * kappa);
    s = (1.0 + rho * rho) / (2.0 * rho);
  }
  double w;
  for (;;) {
    const double z = std::cos(std::numbers::pi * rng.uniform());
    w = (1.0 + s * z) / (s + z);
    const double y = kappa * (s - w);
    const double v = rng.uniform_open();
    if (y * (2.0 - y) - v >= 0.0 || std::log(y / v) + 1.0 - y >= 0.0) break;
  }
  double angle = std::acos(std::clamp(w, -1.0, 1.0));
  if (rng.uniform() < 0.5) angle = -angle;
  return wrap_angle(angle + mean);
}

Eigen::VectorXd uniform_direction(RngStream& rng, int d) {
  Eigen::VectorXd v(d);
  double norm;
  do {
    for (int i = 0; i < d; ++i) v[i] = rng.normal();
    norm = v.norm();
  } while (norm < 1e-300);
  return v / norm;
}

double chi_square_draw(RngStream& rng, int df) {
  double total = 0.0;
  for (int i = 0; i < df; ++i) {
    const double z = rng.normal();
    total += z * z;
  }
  return total;
}

// vMF draw on S^{d-1} with mean e1.
Eigen::VectorXd vmf_draw_e1(RngStream& rng, int d, double kappa) {
  if (d == 2) {
    const double a = von_mises_draw(rng, 0.0, kappa);
    return Eigen::Vector2d(std::cos(a), std::sin(a));
  }
  if (kappa < 1e-12) return uniform_direction(rng, d);
  const double dm1 = d - 1.0;
  const double b = dm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + dm1 * dm1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + dm1 * std::log(1.0 - x0 * x0);
  double w;
  for (;;) {
    const double g1 = chi_square_draw(rng, d - 1);
    const double g2 = chi_square_draw(rng, d - 1);
    const double z = g1 / (g1 + g2);
    w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    const double u = rng.uniform_open();
    if (kappa * w + dm1 * std::log(1.0 - x0 * w) - c >= std::log(u)) break;
  }
  Eigen::VectorXd out(d);
  out[0] = w;
  out.tail(d - 1) = std::sqrt(std::max(0.0, 1.0 - w * w)) * uniform_direction(rng, d - 1);
  return out;
}

double trunc_normal_draw(RngStream& rng, const TruncNormalSpec& spec) {
  double a = (spec.lower - spec.mean) / spec.sd;
  double b = (spec.upper - spec.mean) / spec.sd;
  double sign = 1.0;
  // Work in the lower tail where Phi keeps relative precision.
  if (a > 0.0) {
    sign = -1.0;
    std::swap(a, b);
    a = -a;
    b = -b;
  }
  double z;
  if (b > -35.0) {
    const double pa = std::isinf(a) ? 0.0 : std::exp(log_std_normal_cdf(a));
    const double pb = std::exp(log_std_normal_cdf(b));
    for (;;) {
      const double prob = pa + rng.uniform_open() * (pb - pa);
      if (prob > 0.0 && prob < 1.0) {
        z = std::clamp(std_normal_quantile(prob), a, b);
        break;
      }
    }
  } else {
    // Both bounds deep in the lower tail: exponential rejection on the
    // mirrored interval [-b, -a].
    const double lo = -b;
    const double hi = -a;
    double x;
    for (;;) {
      x = lo - std::log(rng.uniform_open()) / lo;
      if (x > hi) continue;
      const double d = x - lo;
      if (rng.uniform() <= std::exp(-0.5 * d * d)) break;
    }
    z = -x;
  }
  return spec.mean + spec.sd * sign * z;
}

// Vertical draw for the second kind: truncated normal, with the (1 - s^2)
// Jacobian of S^{p-1} applied by rejection when p > 3.
double s2_vertical_draw(RngStream& rng, int p, double kappa0, double nu) {
  const double half_power = 0.5 * (p - 3);
  for (;;) {
    double s;
    if (kappa0 > 0.0) {
      s = trunc_normal_draw(rng, TruncNormalSpec{nu, 1.0 / std::sqrt(2.0 * kappa0), -1.0, 1.0});
    } else {
      s = 2.0 * rng.uniform() - 1.0;
    }
    if (p == 3) return s;
    if (rng.uniform() < std::pow(std::max(0.0, 1.0 - s * s), half_power)) return s;
  }
}

void check_n(int n) {
  if (n < 0) throw InvalidArgument("sample size must be non-negative");
}

// Gibbs chain of one S1 marginal expressed in its mode frame.
Eigen::MatrixXd s1_chain(RngStream& rng, const UnitVec& mu0, const UnitVec& mu1, double kappa0, double kappa1, int n,
                         const GibbsConfig& config) {
  const int p = static_cast<int>(mu0.size());
  const double nu = mu0.coords().dot(mu1.coords());
  const double horizontal = std::sqrt(std::max(0.0, 1.0 - nu * nu));
  const Frame frame = mode_frame(mu0, mu1);
  double s = nu;
  Eigen::VectorXd y = Eigen::VectorXd::Unit(p - 1, 0);
  Eigen::MatrixXd out(n, p);
  auto sweep = [&] {
    y = vmf_draw_e1(rng, p - 1, kappa1 * horizontal * std::sqrt(std::max(0.0, 1.0 - s * s)));
    s = sample_s1_vertical(rng, p, kappa0, kappa1, nu, y[0]);
  };
  for (int i = 0; i < config.burn_in; ++i) sweep();
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < config.thin; ++t) sweep();
    out.row(i) = recompose(frame, s, y).coords().transpose();
  }
  return out;
}

Eigen::MatrixXd s2_marginal(RngStream& rng, const UnitVec& mu0, const UnitVec& mu1, double kappa0, double kappa1,
                            int n) {
  const int p = static_cast<int>(mu0.size());
  const double nu = mu0.coords().dot(mu1.coords());
  const Frame frame = mode_frame(mu0, mu1);
  Eigen::MatrixXd out(n, p);
  for (int i = 0; i < n; ++i) {
    const double s = s2_vertical_draw(rng, p, kappa0, nu);
    const Eigen::VectorXd y = vmf_draw_e1(rng, p - 1, kappa1);
    out.row(i) = recompose(frame, s, y).coords().transpose();
  }
  return out;
}

}  // namespace

void validate(const GibbsConfig& config) {
  if (config.burn_in < 0) throw InvalidArgument("GibbsConfig: burn_in must be >= 0");
  if (config.thin < 1) throw InvalidArgument("GibbsConfig: thin must be >= 1");
}

Eigen::VectorXd sample_trunc_normal(RngStream& rng, const TruncNormalSpec& spec, int n) {
  validate(spec);
  check_n(n);
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) out[i] = trunc_normal_draw(rng, spec);
  return out;
}

Eigen::VectorXd sample_von_mises(RngStream& rng, double mean_angle, double kappa, int n) {
  if (!(kappa >= 0.0)) throw InvalidArgument("sample_von_mises: kappa must be >= 0");
  check_n(n);
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) out[i] = von_mises_draw(rng, mean_angle, kappa);
  return out;
}

Eigen::MatrixXd sample_vmf(RngStream& rng, const UnitVec& mu, double kappa, int n) {
  if (!(kappa >= 0.0)) throw InvalidArgument("sample_vmf: kappa must be >= 0");
  if (mu.size() < 2) throw InvalidArgument("sample_vmf: dimension must be >= 2");
  check_n(n);
  const int d = static_cast<int>(mu.size());
  const Frame frame = axis_frame(mu);
  Eigen::MatrixXd out(n, d);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd local = vmf_draw_e1(rng, d, kappa);
    out.row(i) = (frame.columns * local).normalized().transpose();
  }
  return out;
}

Eigen::MatrixXd sample_mvm(RngStream& rng, const Eigen::VectorXd& zeta, const Eigen::VectorXd& kappa1,
                           const Eigen::MatrixXd& lambda, const GibbsConfig& config, int n) {
  validate(config);
  check_n(n);
  const Eigen::Index K = zeta.size();
  if (kappa1.size() != K || lambda.rows() != K || lambda.cols() != K)
    throw InvalidArgument("sample_mvm: dimension mismatch");
  if ((lambda - lambda.transpose()).cwiseAbs().maxCoeff() > 1e-12 || lambda.diagonal().cwiseAbs().maxCoeff() != 0.0)
    throw InvalidArgument("sample_mvm: lambda must be symmetric with zero diagonal");
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd sines = Eigen::VectorXd::Zero(K);
  auto sweep = [&] {
    for (Eigen::Index k = 0; k < K; ++k) {
      const double a = kappa1[k];
      const double b = lambda.row(k).dot(sines);
      psi[k] = von_mises_draw(rng, std::atan2(b, a), std::hypot(a, b));
      sines[k] = std::sin(psi[k]);
    }
  };
  for (int i = 0; i < config.burn_in; ++i) sweep();
  Eigen::MatrixXd out(n, K);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < config.thin; ++t) sweep();
    for (Eigen::Index k = 0; k < K; ++k) out(i, k) = wrap_angle(psi[k] + zeta[k]);
  }
  return out;
}

double sample_s1_vertical(RngStream& rng, int p, double kappa0, double kappa1, double nu, double proj, int grid) {
  if (grid < 8) throw InvalidArgument("sample_s1_vertical: grid too coarse");
  const double half_power = 0.5 * (p - 3);
  const double cross = kappa1 * std::sqrt(std::max(0.0, 1.0 - nu * nu)) * proj;
  auto logf = [&](double s) {
    const double d = s - nu;
    const double c = std::max(0.0, 1.0 - s * s);
    double v = -kappa0 * d * d + kappa1 * nu * s + cross * std::sqrt(c);
    if (half_power > 0.0) v += c > 0.0 ? half_power * std::log(c) : -std::numeric_limits<double>::infinity();
    return v;
  };

  std::vector<double> vals(grid + 1);
  auto fill = [&](double lo, double hi) {
    for (int i = 0; i <= grid; ++i) vals[i] = logf(lo + (hi - lo) * i / grid);
    return *std::max_element(vals.begin(), vals.end());
  };

  // Pass 1 locates the region carrying the mass; pass 2 resolves it.
  double lo = -1.0, hi = 1.0;
  double peak = fill(lo, hi);
  int first = grid, last = 0;
  for (int i = 0; i <= grid; ++i) {
    if (vals[i] > peak - 40.0) {
      first = std::min(first, i);
      last = std::max(last, i);
    }
  }
  const double h1 = (hi - lo) / grid;
  const double lo2 = std::max(-1.0, lo + h1 * (first - 1));
  const double hi2 = std::min(1.0, lo + h1 * (last + 1));
  lo = lo2;
  hi = hi2;
  peak = fill(lo, hi);
  const double h = (hi - lo) / grid;

  std::vector<double> cum(grid + 1, 0.0);
  for (int i = 0; i < grid; ++i) {
    const double a = vals[i] - peak;
    const double b = vals[i + 1] - peak;
    double mass;
    if (!std::isfinite(a) || !std::isfinite(b)) {
      mass = 0.5 * h * std::exp(std::max(a, b));
    } else if (std::abs(a - b) < 1e-10) {
      mass = h * std::exp(0.5 * (a + b));
    } else {
      mass = h * (std::exp(a) - std::exp(b)) / (a - b);
    }
    cum[i + 1] = cum[i] + mass;
  }
  const double target = rng.uniform() * cum[grid];
  int cell = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), target) - cum.begin()) - 1;
  cell = std::clamp(cell, 0, grid - 1);
  const double mass = cum[cell + 1] - cum[cell];
  const double r = mass > 0.0 ? (target - cum[cell]) / mass : 0.5;
  const double a = vals[cell];
  const double b = vals[cell + 1];
  double t;
  if (!std::isfinite(a) || !std::isfinite(b) || std::abs(b - a) < 1e-10) {
    t = r * h;
  } else {
    const double c = (b - a) / h;
    t = std::log1p(r * std::expm1(c * h)) / c;
  }
  return std::clamp(lo + h * cell + t, -1.0, 1.0);
}

DirectionalSample sample_model(RngStream& rng, const ModelParams& params, int n, const GibbsConfig& config) {
  validate(params);
  validate(config);
  check_n(n);
  const int p = dimension(params);
  const int K = num_marginals(params);
  DirectionalSample out(p, K, Eigen::MatrixXd(n, static_cast<Eigen::Index>(p) * K));

  if (const auto* m = std::get_if<VmfParams>(&params)) {
    out.rows = sample_vmf(rng, m->mu, m->kappa, n);
  } else if (const auto* m = std::get_if<BmParams>(&params)) {
    const Frame frame = axis_frame(m->mu);
    for (int i = 0; i < n; ++i) {
      const double s = s2_vertical_draw(rng, p, m->kappa, m->nu);
      out.rows.row(i) = recompose(frame, s, uniform_direction(rng, p - 1)).coords().transpose();
    }
  } else if (const auto* m = std::get_if<S1Params>(&params)) {
    out.rows = s1_chain(rng, m->mu0, m->mu1, m->kappa0, m->kappa1, n, config);
  } else if (const auto* m = std::get_if<S2Params>(&params)) {
    out.rows = s2_marginal(rng, m->mu0, m->mu1, m->kappa0, m->kappa1, n);
  } else if (const auto* m = std::get_if<IMS1Params>(&params)) {
    for (int k = 0; k < K; ++k) {
      const auto& mk = m->marginals[k];
      out.marginal(k) = s1_chain(rng, m->mu0, mk.mu1, mk.kappa0, mk.kappa1, n, config);
    }
  } else if (const auto* m = std::get_if<IMS2Params>(&params)) {
    for (int k = 0; k < K; ++k) {
      const auto& mk = m->marginals[k];
      out.marginal(k) = s2_marginal(rng, m->mu0, mk.mu1, mk.kappa0, mk.kappa1, n);
    }
  } else if (const auto* m = std::get_if<MS2Params>(&params)) {
    const Frame axis = axis_frame(m->mu0);
    Eigen::VectorXd zeta(K), kappa1(K);
    for (int k = 0; k < K; ++k) {
      const Eigen::VectorXd mode = horizontal_mode(axis, m->marginals[k].mu1);
      zeta[k] = std::atan2(mode[1], mode[0]);
      kappa1[k] = m->marginals[k].kappa1;
    }
    const Eigen::MatrixXd phi = sample_mvm(rng, zeta, kappa1, m->lambda, config, n);
    for (int k = 0; k < K; ++k) {
      const auto& mk = m->marginals[k];
      const double nu = m->mu0.coords().dot(mk.mu1.coords());
      for (int i = 0; i < n; ++i) {
        const double s = s2_vertical_draw(rng, 3, mk.kappa0, nu);
        const Eigen::Vector2d y(std::cos(phi(i, k)), std::sin(phi(i, k)));
        out.rows.block(i, static_cast<Eigen::Index>(k) * 3, 1, 3) = recompose(axis, s, y).coords().transpose();
      }
    }
  }
  return out;
}

}  // namespace smallsphere

#include "smallsphere/densities.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

#include "smallsphere/error.hpp"
#include "smallsphere/quadrature.hpp"
#include "smallsphere/saddlepoint.hpp"
#include "smallsphere/special_functions.hpp"

namespace smallsphere {

namespace {

constexpr double kNuBound = 1.0 - 1e-12;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_kappa(double kappa, const char* what) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw InvalidArgument(std::string(what) + " must be finite and >= 0");
}

void check_nu(double nu, const char* what) {
  if (!(std::abs(nu) < kNuBound)) throw InvalidArgument(std::string(what) + ": nu must lie in (-1, 1)");
}

void check_marginals(const UnitVec& mu0, const std::vector<MarginalParams>& marginals, const char* what) {
  if (mu0.size() < 3) throw InvalidArgument(std::string(what) + ": p must be >= 3");
  if (marginals.empty()) throw InvalidArgument(std::string(what) + ": at least one marginal required");
  for (const auto& m : marginals) {
    if (m.mu1.size() != mu0.size()) throw InvalidArgument(std::string(what) + ": mu1 dimension mismatch");
    check_kappa(m.kappa0, "kappa0");
    check_kappa(m.kappa1, "kappa1");
    check_nu(mu0.coords().dot(m.mu1.coords()), what);
  }
}

// Horizontal unit direction of x in axis-frame coordinates; zero at the poles
// so that every term built from it vanishes there.
Eigen::VectorXd horizontal_unit(const Frame& axis, const Eigen::Ref<const Eigen::VectorXd>& x, double& s) {
  const Eigen::VectorXd coords = axis.columns.transpose() * x;
  s = coords[0];
  Eigen::VectorXd rest = coords.tail(coords.size() - 1);
  const double norm = rest.norm();
  if (norm > 0.0) {
    rest /= norm;
  } else {
    rest.setZero();
  }
  return rest;
}

double cross2(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a[0] * b[1] - a[1] * b[0]; }

const GaussLegendreRule& circle_rule() {
  static const GaussLegendreRule rule = [] {
    GaussLegendreRule r = gauss_legendre(129);
    r.nodes *= std::numbers::pi;
    r.weights *= std::numbers::pi;
    return r;
  }();
  return rule;
}

double log_sum_exp(const std::vector<double>& terms) {
  const double m = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(m)) return m;
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - m);
  return m + std::log(sum);
}

}  // namespace

ModelKind kind_of(const ModelParams& params) { return static_cast<ModelKind>(params.index()); }

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::VMF: return "vmf";
    case ModelKind::BM: return "bm";
    case ModelKind::S1: return "s1";
    case ModelKind::S2: return "s2";
    case ModelKind::IMS1: return "ims1";
    case ModelKind::IMS2: return "ims2";
    case ModelKind::MS2: return "ms2";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (ModelKind k : {ModelKind::VMF, ModelKind::BM, ModelKind::S1, ModelKind::S2, ModelKind::IMS1, ModelKind::IMS2,
                      ModelKind::MS2}) {
    if (to_string(k) == lower) return k;
  }
  throw InvalidArgument("unknown model '" + name + "'");
}

int dimension(const ModelParams& params) {
  return std::visit(Overloaded{[](const VmfParams& m) { return static_cast<int>(m.mu.size()); },
                               [](const BmParams& m) { return static_cast<int>(m.mu.size()); },
                               [](const auto& m) { return static_cast<int>(m.mu0.size()); }},
                    params);
}

int num_marginals(const ModelParams& params) {
  return std::visit(Overloaded{[](const IMS1Params& m) { return static_cast<int>(m.marginals.size()); },
                               [](const IMS2Params& m) { return static_cast<int>(m.marginals.size()); },
                               [](const MS2Params& m) { return static_cast<int>(m.marginals.size()); },
                               [](const auto&) { return 1; }},
                    params);
}

void validate(const ModelParams& params) {
  std::visit(Overloaded{
                 [](const VmfParams& m) {
                   if (m.mu.size() < 3) throw InvalidArgument("vmf: p must be >= 3");
                   check_kappa(m.kappa, "kappa");
                 },
                 [](const BmParams& m) {
                   if (m.mu.size() < 3) throw InvalidArgument("bm: p must be >= 3");
                   check_kappa(m.kappa, "kappa");
                   check_nu(m.nu, "bm");
                 },
                 [](const S1Params& m) { check_marginals(m.mu0, {{m.mu1, m.kappa0, m.kappa1}}, "s1"); },
                 [](const S2Params& m) { check_marginals(m.mu0, {{m.mu1, m.kappa0, m.kappa1}}, "s2"); },
                 [](const IMS1Params& m) { check_marginals(m.mu0, m.marginals, "ims1"); },
                 [](const IMS2Params& m) { check_marginals(m.mu0, m.marginals, "ims2"); },
                 [](const MS2Params& m) {
                   if (m.mu0.size() != 3) throw UnsupportedModel("ms2: only p = 3 is supported");
                   check_marginals(m.mu0, m.marginals, "ms2");
                   const auto K = static_cast<Eigen::Index>(m.marginals.size());
                   if (m.lambda.rows() != K || m.lambda.cols() != K)
                     throw InvalidArgument("ms2: lambda must be K x K");
                   if (!m.lambda.allFinite()) throw InvalidArgument("ms2: lambda must be finite");
                   if ((m.lambda - m.lambda.transpose()).cwiseAbs().maxCoeff() > 1e-12)
                     throw InvalidArgument("ms2: lambda must be symmetric");
                   if (m.lambda.diagonal().cwiseAbs().maxCoeff() != 0.0)
                     throw InvalidArgument("ms2: lambda must have zero diagonal");
                 },
             },
             params);
}

double log_vertical_const(int p, double kappa0, double nu) {
  if (p < 3) throw InvalidArgument("log_vertical_const: p must be >= 3");
  check_kappa(kappa0, "kappa0");
  check_nu(nu, "log_vertical_const");
  if (kappa0 == 0.0) {
    // Beta(1/2, (p-1)/2).
    return std::lgamma(0.5) + std::lgamma(0.5 * (p - 1)) - std::lgamma(0.5 * p);
  }
  const double root = std::sqrt(2.0 * kappa0);
  if (p == 3) return 0.5 * std::log(std::numbers::pi / kappa0) + log_normal_interval(-(1.0 + nu) * root, (1.0 - nu) * root);

  const double half_power = 0.5 * (p - 3);
  const double sd = 1.0 / root;
  const double lo = std::max(-1.0, nu - 40.0 * sd);
  const double hi = std::min(1.0, nu + 40.0 * sd);
  auto f = [&](double s) {
    const double d = s - nu;
    return std::exp(-kappa0 * d * d + half_power * std::log1p(-s * s));
  };
  const QuadratureResult r = integrate_adaptive(f, lo, hi, 1e-11, 0.0, 4000);
  if (!(r.value > 0.0)) throw NumericalError("log_vertical_const: integral underflowed");
  return std::log(r.value);
}

double log_s2_const(int p, double kappa0, double kappa1, double nu) {
  check_kappa(kappa1, "kappa1");
  return log_vertical_const(p, kappa0, nu) + log_vmf_integral(p - 1, kappa1);
}

double log_s1_const(int p, double kappa0, double kappa1, double nu) {
  SaddleProblem prob;
  prob.kappa0 = kappa0;
  prob.kappa1 = kappa1;
  prob.nu = nu;
  prob.h = 1.0;
  prob.p = p;
  return s1_log_norm_const(prob);
}

double log_s1_const_exact(int p, double kappa0, double kappa1, double nu) {
  if (p < 3) throw InvalidArgument("log_s1_const_exact: p must be >= 3");
  check_kappa(kappa0, "kappa0");
  check_kappa(kappa1, "kappa1");
  check_nu(nu, "log_s1_const_exact");
  const double half_power = 0.5 * (p - 3);
  const double horizontal = kappa1 * std::sqrt(1.0 - nu * nu);
  auto g = [&](double s) {
    const double c = std::max(0.0, 1.0 - s * s);
    const double d = s - nu;
    const double jacobian = half_power == 0.0 ? 0.0 : half_power * std::log(c);
    return -kappa0 * d * d + kappa1 * nu * s + jacobian + log_vmf_integral(p - 1, horizontal * std::sqrt(c));
  };
  constexpr int kGrid = 128;
  double peak = nu;
  double top = g(nu);
  for (int i = 1; i < kGrid; ++i) {
    const double s = -1.0 + 2.0 * i / kGrid;
    if (const double v = g(s); v > top) {
      top = v;
      peak = s;
    }
  }
  auto f = [&](double s) { return std::exp(g(s) - top); };
  double total = 0.0;
  if (peak > -1.0) total += integrate_adaptive(f, -1.0, peak, 1e-10, 0.0, 4000).value;
  if (peak < 1.0) total += integrate_adaptive(f, peak, 1.0, 1e-10, 0.0, 4000).value;
  if (!(total > 0.0)) throw NumericalError("log_s1_const_exact: integral underflowed");
  return top + std::log(total);
}

double mvm_log_kernel(const Eigen::VectorXd& kappa1, const Eigen::MatrixXd& lambda, const Eigen::VectorXd& psi) {
  if (kappa1.size() != psi.size() || lambda.rows() != psi.size() || lambda.cols() != psi.size())
    throw InvalidArgument("mvm_log_kernel: dimension mismatch");
  const Eigen::VectorXd sines = psi.array().sin().matrix();
  return kappa1.dot(psi.array().cos().matrix()) + 0.5 * sines.dot(lambda * sines);
}

double log_mvm_const(const Eigen::VectorXd& kappa1, const Eigen::MatrixXd& lambda) {
  const Eigen::Index K = kappa1.size();
  if (K < 1 || lambda.rows() != K || lambda.cols() != K) throw InvalidArgument("log_mvm_const: dimension mismatch");
  for (Eigen::Index k = 0; k < K; ++k) check_kappa(kappa1[k], "kappa1");
  if (lambda.cwiseAbs().maxCoeff() == 0.0) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) total += log_vmf_integral(2, kappa1[k]);
    return total;
  }
  if (K > kMaxNormalizedMs2Marginals)
    throw UnsupportedModel("log_mvm_const: normalized evaluation limited to K <= " +
                           std::to_string(kMaxNormalizedMs2Marginals));

  // The last angle integrates in closed form,
  //   int exp{a cos t + c sin t} dt = 2 pi I_0(sqrt(a^2 + c^2)),
  // leaving a Gauss-Legendre tensor rule over the remaining angles.
  const GaussLegendreRule& rule = circle_rule();
  const Eigen::Index m = rule.nodes.size();
  std::vector<Eigen::VectorXd> base(K);
  const Eigen::VectorXd sines = rule.nodes.array().sin().matrix();
  for (Eigen::Index k = 0; k < K; ++k) {
    base[k] = (kappa1[k] * rule.nodes.array().cos() + rule.weights.array().log()).matrix();
  }
  const double last = kappa1[K - 1];
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  auto closed = [&](double c) { return log_two_pi + log_bessel_i(0.0, std::hypot(last, c)); };
  std::vector<double> terms;
  if (K == 2) {
    const double l01 = lambda(0, 1);
    terms.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) terms.push_back(base[0][i] + closed(l01 * sines[i]));
  } else {
    const double l01 = lambda(0, 1), l02 = lambda(0, 2), l12 = lambda(1, 2);
    terms.reserve(static_cast<std::size_t>(m * m));
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        terms.push_back(base[0][i] + base[1][j] + l01 * sines[i] * sines[j] + closed(l02 * sines[i] + l12 * sines[j]));
  }
  return log_sum_exp(terms);
}

Eigen::VectorXd horizontal_mode(const Frame& axis, const UnitVec& mu1) {
  if (axis.dim() != mu1.size()) throw InvalidArgument("horizontal_mode: dimension mismatch");
  const Eigen::VectorXd coords = axis.columns.transpose() * mu1.coords();
  Eigen::VectorXd rest = coords.tail(coords.size() - 1);
  const double norm = rest.norm();
  if (norm < 1e-12) throw DegeneracyError("horizontal_mode: mu1 is parallel to the axis");
  return rest / norm;
}

Density::Density(ModelParams params, bool normalized, S1Constant s1) : params_(std::move(params)), kind_(kind_of(params_)) {
  validate(params_);
  p_ = dimension(params_);
  K_ = smallsphere::num_marginals(params_);
  lambda_ = Eigen::MatrixXd::Zero(K_, K_);

  auto add_shared = [&](const UnitVec& mu0, const std::vector<MarginalParams>& ms, bool horizontal) {
    axis_ = axis_frame(mu0);
    for (const auto& m : ms) {
      Marginal out;
      out.mu1 = m.mu1.coords();
      out.kappa0 = m.kappa0;
      out.kappa1 = m.kappa1;
      out.nu = mu0.coords().dot(m.mu1.coords());
      if (horizontal) out.mode = horizontal_mode(axis_, m.mu1);
      marginals_.push_back(std::move(out));
    }
  };

  std::visit(Overloaded{
                 [&](const VmfParams& m) {
                   axis_ = axis_frame(m.mu);
                   Marginal out;
                   out.mu1 = m.mu.coords();
                   out.kappa1 = m.kappa;
                   marginals_.push_back(out);
                 },
                 [&](const BmParams& m) {
                   axis_ = axis_frame(m.mu);
                   Marginal out;
                   out.mu1 = m.mu.coords();
                   out.kappa0 = m.kappa;
                   out.nu = m.nu;
                   marginals_.push_back(out);
                 },
                 [&](const S1Params& m) { add_shared(m.mu0, {{m.mu1, m.kappa0, m.kappa1}}, false); },
                 [&](const S2Params& m) { add_shared(m.mu0, {{m.mu1, m.kappa0, m.kappa1}}, true); },
                 [&](const IMS1Params& m) { add_shared(m.mu0, m.marginals, false); },
                 [&](const IMS2Params& m) { add_shared(m.mu0, m.marginals, true); },
                 [&](const MS2Params& m) {
                   add_shared(m.mu0, m.marginals, true);
                   lambda_ = m.lambda;
                 },
             },
             params_);

  if (normalized) log_const_ = smallsphere::log_norm_const(params_, s1);
}

double Density::log_kernel(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != static_cast<Eigen::Index>(p_) * K_)
    throw InvalidArgument("log_kernel: observation has " + std::to_string(x.size()) + " values, expected " +
                          std::to_string(p_ * K_));
  switch (kind_) {
    case ModelKind::VMF: return marginals_[0].kappa1 * marginals_[0].mu1.dot(x);
    case ModelKind::BM: {
      const double d = marginals_[0].mu1.dot(x) - marginals_[0].nu;
      return -marginals_[0].kappa0 * d * d;
    }
    case ModelKind::S1:
    case ModelKind::IMS1: {
      double total = 0.0;
      const Eigen::VectorXd mu0 = axis_.axis();
      for (int k = 0; k < K_; ++k) {
        const auto& m = marginals_[k];
        const auto xk = x.segment(static_cast<Eigen::Index>(k) * p_, p_);
        const double d = mu0.dot(xk) - m.nu;
        total += -m.kappa0 * d * d + m.kappa1 * m.mu1.dot(xk);
      }
      return total;
    }
    case ModelKind::S2:
    case ModelKind::IMS2:
    case ModelKind::MS2: {
      double total = 0.0;
      Eigen::VectorXd sines(K_);
      for (int k = 0; k < K_; ++k) {
        const auto& m = marginals_[k];
        double s = 0.0;
        const Eigen::VectorXd y = horizontal_unit(axis_, x.segment(static_cast<Eigen::Index>(k) * p_, p_), s);
        const double d = s - m.nu;
        total += -m.kappa0 * d * d + m.kappa1 * m.mode.dot(y);
        if (kind_ == ModelKind::MS2) sines[k] = cross2(m.mode, y);
      }
      if (kind_ == ModelKind::MS2) total += 0.5 * sines.dot(lambda_ * sines);
      return total;
    }
  }
  return 0.0;
}

double log_norm_const(const ModelParams& params, S1Constant s1) {
  validate(params);
  const int p = dimension(params);
  auto first_kind_const = [&](double kappa0, double kappa1, double nu) {
    return s1 == S1Constant::Quadrature ? log_s1_const_exact(p, kappa0, kappa1, nu) : log_s1_const(p, kappa0, kappa1, nu);
  };
  auto sum_marginals = [&](const UnitVec& mu0, const std::vector<MarginalParams>& ms, bool first_kind) {
    double total = 0.0;
    for (const auto& m : ms) {
      const double nu = mu0.coords().dot(m.mu1.coords());
      total += first_kind ? first_kind_const(m.kappa0, m.kappa1, nu) : log_s2_const(p, m.kappa0, m.kappa1, nu);
    }
    return total;
  };
  return std::visit(
      Overloaded{
          [&](const VmfParams& m) { return log_vmf_integral(p, m.kappa); },
          [&](const BmParams& m) { return log_s2_const(p, m.kappa, 0.0, m.nu); },
          [&](const S1Params& m) { return first_kind_const(m.kappa0, m.kappa1, m.nu()); },
          [&](const S2Params& m) { return log_s2_const(p, m.kappa0, m.kappa1, m.nu()); },
          [&](const IMS1Params& m) { return sum_marginals(m.mu0, m.marginals, true); },
          [&](const IMS2Params& m) { return sum_marginals(m.mu0, m.marginals, false); },
          [&](const MS2Params& m) {
            const auto K = static_cast<Eigen::Index>(m.marginals.size());
            Eigen::VectorXd kappa1(K);
            double total = 0.0;
            for (Eigen::Index k = 0; k < K; ++k) {
              const auto& mk = m.marginals[k];
              kappa1[k] = mk.kappa1;
              total += log_vertical_const(3, mk.kappa0, m.mu0.coords().dot(mk.mu1.coords()));
            }
            return total + log_mvm_const(kappa1, m.lambda);
          },
      },
      params);
}

double log_kernel(const ModelParams& params, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return Density(params, false).log_kernel(x);
}

double log_density(const ModelParams& params, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return Density(params).log_density(x);
}

FisherBingham to_fisher_bingham(const S1Params& params) {
  validate(ModelParams{params});
  const double nu = params.nu();
  const Eigen::VectorXd& mu0 = params.mu0.coords();
  FisherBingham fb;
  fb.gamma = 2.0 * params.kappa0 * nu * mu0 + params.kappa1 * params.mu1.coords();
  fb.A = params.kappa0 * mu0 * mu0.transpose();
  fb.log_const = log_s1_const(static_cast<int>(mu0.size()), params.kappa0, params.kappa1, nu) + params.kappa0 * nu * nu;
  return fb;
}

PrecisionApprox ms2_precision_approx(const MS2Params& params) {
  validate(ModelParams{params});
  const auto K = static_cast<Eigen::Index>(params.marginals.size());
  PrecisionApprox out;
  out.precision = -params.lambda;
  for (Eigen::Index k = 0; k < K; ++k) out.precision(k, k) = params.marginals[k].kappa1;
  out.positive_definite = Eigen::LLT<Eigen::MatrixXd>(out.precision).info() == Eigen::Success;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(out.precision);
  const Eigen::MatrixXd cov =
      lu.isInvertible() ? Eigen::MatrixXd(lu.inverse())
                        : Eigen::MatrixXd(out.precision.completeOrthogonalDecomposition().pseudoInverse());
  out.correlation.resize(K, K);
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = 0; j < K; ++j) {
      const double scale = std::sqrt(std::abs(cov(i, i) * cov(j, j)));
      out.correlation(i, j) = scale > 0.0 ? cov(i, j) / scale : (i == j ? 1.0 : 0.0);
    }
  return out;
}

double gms2_log_kernel(const GMS2Params& params, const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_marginals(params.mu0, params.marginals, "gms2");
  const int p = static_cast<int>(params.mu0.size());
  const int K = static_cast<int>(params.marginals.size());
  const Eigen::Index q = static_cast<Eigen::Index>(p - 1) * K;
  if (params.B.rows() != q || params.B.cols() != q) throw InvalidArgument("gms2: B must be (p-1)K x (p-1)K");
  if (x.size() != static_cast<Eigen::Index>(p) * K) throw InvalidArgument("gms2: observation dimension mismatch");
  const Frame axis = axis_frame(params.mu0);
  Eigen::VectorXd ys(q);
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto& m = params.marginals[k];
    double s = 0.0;
    const Eigen::VectorXd y = horizontal_unit(axis, x.segment(static_cast<Eigen::Index>(k) * p, p), s);
    const double d = s - params.mu0.coords().dot(m.mu1.coords());
    total += -m.kappa0 * d * d + m.kappa1 * horizontal_mode(axis, m.mu1).dot(y);
    ys.segment(static_cast<Eigen::Index>(k) * (p - 1), p - 1) = y;
  }
  return total + ys.dot(params.B * ys);
}

GMS2Params ms2_as_gms2(const MS2Params& params) {
  validate(ModelParams{params});
  const auto K = static_cast<Eigen::Index>(params.marginals.size());
  const Frame axis = axis_frame(params.mu0);
  std::vector<Eigen::Vector2d> quarter(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::VectorXd m = horizontal_mode(axis, params.marginals[k].mu1);
    quarter[k] = Eigen::Vector2d(-m[1], m[0]);
  }
  GMS2Params out{params.mu0, params.marginals, Eigen::MatrixXd::Zero(2 * K, 2 * K)};
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index l = 0; l < K; ++l)
      if (k != l) out.B.block<2, 2>(2 * k, 2 * l) = 0.5 * params.lambda(k, l) * quarter[k] * quarter[l].transpose();
  return out;
}

}  // namespace smallsphere

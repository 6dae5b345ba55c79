#include "smallsphere/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "smallsphere/error.hpp"
#include "smallsphere/special_functions.hpp"

namespace smallsphere {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNuLimit = 1.0 - 1e-9;
const double kLogKappaMax = std::log(kMaxConcentration);
constexpr double kLogKappaMin = -20.0;
constexpr std::size_t kAxisStarts = 3;
// Another basin replaces the one reached from the primary start only when it
// improves the negative log-likelihood by more than this.
constexpr double kBasinMargin = 3.0;

double capped(double kappa, bool& saturated) {
  if (kappa >= kMaxConcentration) {
    saturated = true;
    return kMaxConcentration;
  }
  return std::max(kappa, 0.0);
}

// Concentration of the resultant length r of n unit vectors on S^{d-1}:
// solves A_d(kappa) = r with A_d = I_{d/2} / I_{d/2-1}.
double solve_mean_resultant(double r, int d, bool& saturated) {
  if (!(r > 0.0)) return 0.0;
  if (r >= 1.0 - 1e-12) {
    saturated = true;
    return kMaxConcentration;
  }
  double kappa = r * (d - r * r) / (1.0 - r * r);
  const double order = 0.5 * d - 1.0;
  for (int iter = 0; iter < 25; ++iter) {
    const double a = bessel_i_ratio(order, kappa);
    const double deriv = 1.0 - a * a - (d - 1.0) / kappa * a;
    if (!(deriv > 0.0)) break;
    double next = kappa - (a - r) / deriv;
    if (!(next > 0.0)) next = 0.5 * kappa;
    const bool done = std::abs(next - kappa) <= 1e-13 * kappa;
    kappa = next;
    if (done) break;
  }
  return capped(kappa, saturated);
}

// Smallest-eigenvalue eigenvector with the sign making the first nonzero
// coordinate positive.
Eigen::VectorXd smallest_eigenvector(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  Eigen::VectorXd v = eig.eigenvectors().col(0);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-12) {
      if (v[i] < 0.0) v = -v;
      break;
    }
  }
  return v;
}

MinimizeResult minimize(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& steps,
                        const SimplexOptions& simplex, double polish_h) {
  MinimizeResult best = nelder_mead(f, x0, simplex, steps);
  // A restart from the simplex optimum guards against premature collapse.
  MinimizeResult again = nelder_mead(f, best.x, simplex, steps);
  if (again.value <= best.value) {
    again.evals += best.evals;
    best = again;
  }
  MinimizeResult polished = newton_polish(f, best.x, polish_h, 8);
  if (polished.value <= best.value) {
    polished.converged = polished.converged && best.converged;
    return polished;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Vertical (truncated normal) fits.

struct VerticalStats {
  double n = 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;
};

VerticalStats vertical_stats(const Eigen::VectorXd& s) {
  return VerticalStats{static_cast<double>(s.size()), s.sum(), s.squaredNorm()};
}

double vertical_nll(const VerticalStats& st, int p, double nu, double kappa0) {
  // sum (s - nu)^2 = sum s^2 - 2 nu sum s + n nu^2
  const double ss = st.sum_sq - 2.0 * nu * st.sum + st.n * nu * nu;
  return st.n * log_vertical_const(p, kappa0, nu) + kappa0 * std::max(ss, 0.0);
}

// ---------------------------------------------------------------------------
// Second-kind profile machinery.

struct Marginal2 {
  VerticalFit vertical;
  Eigen::VectorXd mode;  // axis-frame horizontal mode
  double kappa1 = 0.0;
  double horizontal_nll = 0.0;
  bool saturated = false;
};

struct Profile {
  double value = kInf;
  std::vector<Marginal2> marginals;
  MvmFit mvm;  // MS2 only
  bool saturated = false;
};

enum class SecondKind { Independent, Dependent };

// Vertical coordinates and axis-frame horizontal unit vectors of marginal k.
void split_marginal(const DirectionalSample& data, int k, const Frame& axis, Eigen::VectorXd& s, Eigen::MatrixXd& y) {
  const auto X = data.marginal(k);
  const Eigen::MatrixXd coords = X * axis.columns;
  s = coords.col(0).cwiseMax(-1.0).cwiseMin(1.0);
  y = coords.rightCols(data.p - 1);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double norm = y.row(i).norm();
    if (norm > 0.0) {
      y.row(i) /= norm;
    } else {
      y.row(i).setZero();
    }
  }
}

double mvm_nll(const Eigen::MatrixXd& angles, const MvmFit& fit) {
  const Eigen::Index n = angles.rows();
  double total = n * log_mvm_const(fit.kappa1, fit.lambda);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd psi = (angles.row(i).transpose() - fit.zeta);
    total -= mvm_log_kernel(fit.kappa1, fit.lambda, psi);
  }
  return total;
}

Profile evaluate_profile(const DirectionalSample& data, const UnitVec& mu0, SecondKind kind, const FitOptions& opts,
                         bool exact_mvm) {
  const Frame axis = axis_frame(mu0);
  const int K = data.K;
  const double n = static_cast<double>(data.n());
  Profile out;
  out.value = 0.0;
  Eigen::MatrixXd angles(data.n(), K);
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd s;
    Eigen::MatrixXd y;
    split_marginal(data, k, axis, s, y);
    Marginal2 m;
    if (opts.flat_vertical) {
      m.vertical.neg_log_lik = n * log_vertical_const(data.p, 0.0, 0.0);
    } else {
      m.vertical = fit_vertical_mle(s, data.p, opts.great_sphere);
    }
    out.value += m.vertical.neg_log_lik;
    m.saturated = m.vertical.saturated;

    const VmfFit h = fit_vmf_mle(y);
    m.mode = h.mu.coords();
    m.kappa1 = h.kappa;
    m.saturated = m.saturated || h.saturated;
    const double resultant = y.colwise().sum().norm();
    m.horizontal_nll = n * log_vmf_integral(data.p - 1, m.kappa1) - m.kappa1 * resultant;
    if (data.p == 3)
      for (Eigen::Index i = 0; i < data.n(); ++i) angles(i, k) = std::atan2(y(i, 1), y(i, 0));
    out.saturated = out.saturated || m.saturated;
    out.marginals.push_back(std::move(m));
  }

  if (kind == SecondKind::Independent || opts.zero_association) {
    for (const auto& m : out.marginals) out.value += m.horizontal_nll;
    return out;
  }

  out.mvm = fit_mvm_moment(angles);
  if (exact_mvm) out.mvm = fit_mvm_mle(angles, out.mvm);
  out.saturated = out.saturated || out.mvm.saturated;
  for (int k = 0; k < K; ++k) {
    out.marginals[k].mode = Eigen::Vector2d(std::cos(out.mvm.zeta[k]), std::sin(out.mvm.zeta[k]));
    out.marginals[k].kappa1 = out.mvm.kappa1[k];
  }
  out.value += mvm_nll(angles, out.mvm);
  return out;
}

// Orthonormal tangent basis at mu built from the data alone, so that the
// search path is equivariant under rotations of the data.
Eigen::MatrixXd tangent_basis(const DirectionalSample& data, const UnitVec& mu) {
  const int p = data.p;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  for (int k = 0; k < data.K; ++k) {
    const auto X = data.marginal(k);
    S += X.transpose() * X;
    mean += X.colwise().sum().transpose();
  }
  const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(p, p) - mu.coords() * mu.coords().transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(P * S * P);
  // The axis itself has eigenvalue 0; keep the top p - 1 eigenvectors.
  Eigen::MatrixXd basis = eig.eigenvectors().rightCols(p - 1);
  for (int j = 0; j < p - 1; ++j) {
    Eigen::VectorXd v = P * basis.col(j);
    v.normalize();
    double orient = v.dot(mean);
    if (std::abs(orient) < 1e-12) {
      // Fall back to the third moment.
      orient = 0.0;
      for (int k = 0; k < data.K; ++k) orient += (data.marginal(k) * v).array().cube().sum();
    }
    basis.col(j) = orient < 0.0 ? Eigen::VectorXd(-v) : v;
  }
  return basis;
}

// Pre-pass axis: smallest eigenvector of the pooled second moment, oriented
// so that the average of mu0'x is non-negative.
UnitVec great_sphere_axis(const DirectionalSample& data, const std::vector<double>& weights) {
  const int p = data.p;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  for (int k = 0; k < data.K; ++k) {
    const auto X = data.marginal(k);
    S += weights[k] * (X.transpose() * X);
    mean += X.colwise().sum().transpose();
  }
  Eigen::VectorXd v = smallest_eigenvector(S);
  if (v.dot(mean) < 0.0) v = -v;
  return UnitVec(v);
}

UnitVec orient_axis(const DirectionalSample& data, const UnitVec& mu0) {
  double total = 0.0;
  for (int k = 0; k < data.K; ++k) total += (data.marginal(k) * mu0.coords()).sum();
  return total < 0.0 ? -mu0 : mu0;
}

// Starting axes derived from the data alone: eigenvectors of the raw and
// centred second moments, and normals of hyperplanes through p observations
// at fixed index offsets.
std::vector<UnitVec> candidate_axes(const DirectionalSample& data) {
  const int p = data.p;
  const Eigen::Index n = data.n();
  std::vector<UnitVec> out;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(p, p);
  for (int k = 0; k < data.K; ++k) {
    const auto X = data.marginal(k);
    S += X.transpose() * X;
    const Eigen::MatrixXd centred = X.rowwise() - X.colwise().mean();
    C += centred.transpose() * centred;
  }
  for (const Eigen::MatrixXd* M : {&S, &C}) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(*M);
    for (int j = 0; j < p; ++j) out.emplace_back(eig.eigenvectors().col(j));
  }
  const Eigen::Index stride = n / p;
  const Eigen::Index tries = std::min<Eigen::Index>(stride, 40);
  for (Eigen::Index t = 0; t < tries; ++t) {
    const auto X = data.marginal(static_cast<int>(t % data.K));
    Eigen::MatrixXd D(p - 1, p);
    for (int j = 1; j < p; ++j) D.row(j - 1) = X.row(t + j * stride) - X.row(t);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(D.transpose() * D);
    if (eig.eigenvalues()[1] < 1e-12 * std::max(eig.eigenvalues()[p - 1], 1e-300)) continue;
    out.emplace_back(eig.eigenvectors().col(0));
  }
  for (auto& c : out) c = orient_axis(data, c);
  return out;
}

// The best few candidates under score, at least min_gap radians apart as
// undirected axes.
std::vector<UnitVec> best_starts(const std::vector<UnitVec>& candidates, const std::function<double(const UnitVec&)>& score,
                                 std::size_t count, double min_gap = 0.05) {
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double v = kInf;
    try {
      v = score(candidates[i]);
    } catch (const Error&) {
    }
    if (std::isfinite(v)) ranked.emplace_back(v, i);
  }
  std::stable_sort(ranked.begin(), ranked.end());
  std::vector<UnitVec> out;
  for (const auto& [v, i] : ranked) {
    bool distinct = true;
    for (const auto& chosen : out)
      if (std::acos(std::min(1.0, std::abs(chosen.coords().dot(candidates[i].coords())))) < min_gap) distinct = false;
    if (distinct) out.push_back(candidates[i]);
    if (out.size() == count) break;
  }
  return out;
}

// Further starting axes beyond the primary one, best first under score.
std::vector<UnitVec> alternative_starts(const DirectionalSample& data, const UnitVec& primary,
                                        const std::function<double(const UnitVec&)>& score) {
  std::vector<UnitVec> candidates{primary};
  for (const auto& c : candidate_axes(data)) candidates.push_back(c);
  std::vector<UnitVec> out = best_starts(candidates, score, kAxisStarts + 1);
  std::erase_if(out, [&](const UnitVec& u) { return std::abs(u.coords().dot(primary.coords())) > std::cos(0.05); });
  if (out.size() > kAxisStarts) out.resize(kAxisStarts);
  return out;
}

struct AxisSearch {
  UnitVec mu0;
  Profile profile;
  int rounds = 0;
  bool converged = false;
  std::vector<double> trace;
};

AxisSearch search_axis(const DirectionalSample& data, const UnitVec& start, SecondKind kind, const FitOptions& opts) {
  const int p = data.p;
  AxisSearch out;
  out.mu0 = start;
  out.profile = evaluate_profile(data, start, kind, opts, false);
  out.trace.push_back(out.profile.value);

  for (int round = 0; round < opts.max_outer_iters; ++round) {
    ++out.rounds;
    const UnitVec anchor = out.mu0;
    const Eigen::MatrixXd basis = tangent_basis(data, anchor);
    auto point = [&](const Eigen::VectorXd& v) { return exp_map(anchor, basis * v); };
    Objective f = [&](const Eigen::VectorXd& v) {
      if (v.norm() > 1.5) return kInf;
      return evaluate_profile(data, point(v), kind, opts, false).value;
    };
    SimplexOptions simplex = opts.simplex;
    const double step = round == 0 ? simplex.initial_step : std::min(simplex.initial_step, 0.01);
    const MinimizeResult r = minimize(f, Eigen::VectorXd::Zero(p - 1), Eigen::VectorXd::Constant(p - 1, step),
                                      simplex, 1e-4);
    const double previous = out.profile.value;
    if (r.value < previous) {
      out.mu0 = point(r.x);
      out.profile = evaluate_profile(data, out.mu0, kind, opts, false);
      out.trace.push_back(out.profile.value);
    }
    const double moved = r.value < previous ? r.x.norm() : 0.0;
    if (moved < 1e-9 || previous - out.profile.value <= opts.tol * 1e-6 * (1.0 + std::abs(previous))) {
      out.converged = true;
      break;
    }
  }
  return out;
}

ModelParams second_kind_params(const UnitVec& mu0, const Profile& prof, ModelKind kind) {
  const Frame axis = axis_frame(mu0);
  std::vector<MarginalParams> marginals;
  for (const auto& m : prof.marginals) {
    const UnitVec mu1 = recompose(axis, m.vertical.nu, m.mode);
    marginals.push_back(MarginalParams{mu1, m.vertical.kappa0, m.kappa1});
  }
  switch (kind) {
    case ModelKind::S2: return S2Params{mu0, marginals[0].mu1, marginals[0].kappa0, marginals[0].kappa1};
    case ModelKind::IMS2: return IMS2Params{mu0, marginals};
    default: {
      const auto K = static_cast<Eigen::Index>(marginals.size());
      Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(K, K);
      if (prof.mvm.lambda.size() == K * K) lambda = prof.mvm.lambda;
      return MS2Params{mu0, marginals, lambda};
    }
  }
}

FitResult fit_second_kind(const DirectionalSample& data, ModelKind kind, const FitOptions& opts) {
  validate(opts);
  if (data.n() < data.p + 2) throw InvalidArgument("fit: need at least p + 2 observations");
  const SecondKind family = kind == ModelKind::MS2 ? SecondKind::Dependent : SecondKind::Independent;
  if (kind == ModelKind::MS2) {
    if (data.p != 3) throw UnsupportedModel("ms2: only p = 3 is supported");
    if (!opts.zero_association && data.K > kMaxNormalizedMs2Marginals)
      throw UnsupportedModel("ms2: likelihood fitting limited to K <= " + std::to_string(kMaxNormalizedMs2Marginals));
  }
  if (kind == ModelKind::S2 && data.K != 1) throw InvalidArgument("s2: data must have K = 1");

  FitResult result;
  UnitVec mu0;
  Profile prof;
  if (opts.fixed_mu0) {
    if (opts.fixed_mu0->size() != data.p) throw InvalidArgument("fit: fixed axis has the wrong dimension");
    mu0 = *opts.fixed_mu0;
    prof = evaluate_profile(data, mu0, family, opts, opts.exact_mvm);
    result.trace.push_back(prof.value);
    result.n_iters = 1;
    result.converged = true;
  } else {
    const UnitVec primary = great_sphere_axis(data, std::vector<double>(data.K, 1.0));
    AxisSearch search = search_axis(data, primary, family, opts);
    const double primary_value = search.profile.value;
    for (const auto& start : alternative_starts(
             data, primary,
             [&](const UnitVec& axis) { return evaluate_profile(data, axis, family, opts, false).value; })) {
      AxisSearch attempt = search_axis(data, start, family, opts);
      if (attempt.profile.value < std::min(search.profile.value, primary_value - kBasinMargin))
        search = std::move(attempt);
    }
    mu0 = orient_axis(data, search.mu0);
    prof = evaluate_profile(data, mu0, family, opts, opts.exact_mvm);
    if (opts.exact_mvm && family == SecondKind::Dependent && !opts.zero_association) {
      // The search ran on moment estimates; refine the axis on the exact profile.
      const UnitVec anchor = mu0;
      const Eigen::MatrixXd basis = tangent_basis(data, anchor);
      Objective f = [&](const Eigen::VectorXd& v) {
        if (v.norm() > 0.5) return kInf;
        try {
          return evaluate_profile(data, exp_map(anchor, basis * v), family, opts, true).value;
        } catch (const Error&) {
          return kInf;
        }
      };
      const MinimizeResult r = newton_polish(f, Eigen::VectorXd::Zero(data.p - 1), 1e-3, 20);
      if (r.value < prof.value) {
        mu0 = orient_axis(data, exp_map(anchor, basis * r.x));
        prof = evaluate_profile(data, mu0, family, opts, true);
      }
    }
    result.trace = search.trace;
    if (prof.value < result.trace.back()) result.trace.push_back(prof.value);
    result.n_iters = search.rounds;
    result.converged = search.converged;
  }
  result.params = second_kind_params(mu0, prof, kind);
  result.neg_log_lik = prof.value;
  result.saturated = prof.saturated;
  return result;
}

// ---------------------------------------------------------------------------
// First-kind alternating algorithm.

// Step-2 objective pieces for one marginal given the axis.
struct Step2Data {
  double n = 0.0;
  double sum_s = 0.0;
  double sum_s2 = 0.0;
  double sum_g = 0.0;  // sum of x'gamma*
  UnitVec gamma_star;
  int p = 3;
  bool exact_const = false;
};

Step2Data step2_data(const Eigen::MatrixXd& X, const UnitVec& mu0) {
  Step2Data d;
  d.p = static_cast<int>(X.cols());
  d.n = static_cast<double>(X.rows());
  const Eigen::VectorXd s = X * mu0.coords();
  d.sum_s = s.sum();
  d.sum_s2 = s.squaredNorm();
  const Eigen::VectorXd mean = X.colwise().mean().transpose();
  if (mean.norm() < 1e-14) throw DegeneracyError("step 2: the sample mean vanishes, mode direction undefined");
  Eigen::VectorXd g = project_complement(mu0.coords(), mean);
  if (g.norm() < 1e-14) {
    // Mean along the axis: any horizontal direction, taken from the frame.
    g = axis_frame(mu0).columns.col(1);
  }
  d.gamma_star = UnitVec(g);
  d.sum_g = (X * d.gamma_star.coords()).sum();
  return d;
}

double step2_objective(const Step2Data& d, double phi, double kappa0, double kappa1) {
  const double nu = std::cos(phi);
  const double ss = d.sum_s2 - 2.0 * nu * d.sum_s + d.n * nu * nu;
  const double mode_term = nu * d.sum_s + std::sin(phi) * d.sum_g;
  const double log_a =
      d.exact_const ? log_s1_const_exact(d.p, kappa0, kappa1, nu) : log_s1_const(d.p, kappa0, kappa1, nu);
  return d.n * log_a + kappa0 * std::max(ss, 0.0) - kappa1 * mode_term;
}

struct FirstKindState {
  UnitVec mu0;
  std::vector<Step2Result> marginals;
  double nll = kInf;
};

double total_nll(const std::vector<Step2Result>& ms) {
  double t = 0.0;
  for (const auto& m : ms) t += m.neg_log_lik;
  return t;
}

}  // namespace

Step2Result update_rest_step2(const Eigen::MatrixXd& X, const UnitVec& mu0, const FitOptions& opts,
                              const std::optional<Step2Result>& warm) {
  if (X.cols() != mu0.size()) throw InvalidArgument("update_rest_step2: dimension mismatch");
  Step2Data d = step2_data(X, mu0);
  d.exact_const = opts.exact_s1_const;
  const bool pin = opts.great_sphere;

  double phi0, kappa00, kappa10;
  if (warm) {
    phi0 = std::acos(std::clamp(warm->nu, -kNuLimit, kNuLimit));
    kappa00 = warm->kappa0;
    kappa10 = warm->kappa1;
  } else {
    const double mean_s = d.sum_s / d.n;
    const double var_s = std::max(d.sum_s2 / d.n - mean_s * mean_s, 1e-10);
    phi0 = std::acos(std::clamp(mean_s, -0.99, 0.99));
    kappa00 = 1.0 / (2.0 * var_s);
    // Horizontal concentration of the projected data, rescaled to the
    // ambient mode term.
    const Eigen::MatrixXd Y = X - (X * mu0.coords()) * mu0.coords().transpose();
    Eigen::MatrixXd U(Y.rows(), Y.cols());
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
      const double nr = Y.row(i).norm();
      U.row(i) = nr > 0.0 ? Eigen::RowVectorXd(Y.row(i) / nr) : Eigen::RowVectorXd::Zero(Y.cols());
    }
    bool sat = false;
    const double r = U.colwise().mean().norm();
    kappa10 = solve_mean_resultant(r, d.p - 1, sat) / std::max(std::sin(phi0), 0.1);
  }
  if (pin) phi0 = 0.5 * std::numbers::pi;
  kappa00 = std::clamp(kappa00, 1e-3, 1e5);
  kappa10 = std::clamp(kappa10, 1e-3, 1e5);

  const int o = pin ? 0 : 1;
  const int dim = o + 2;
  auto unpack = [&](const Eigen::VectorXd& v, double& phi, double& k0, double& k1) {
    phi = pin ? 0.5 * std::numbers::pi : v[0];
    k0 = std::exp(v[o]);
    k1 = std::exp(v[o + 1]);
  };
  Objective f = [&](const Eigen::VectorXd& v) {
    if (!pin && !(v[0] > 1e-6 && v[0] < std::numbers::pi - 1e-6)) return kInf;
    for (int j = o; j < dim; ++j)
      if (!(v[j] >= kLogKappaMin && v[j] <= kLogKappaMax)) return kInf;
    double phi, k0, k1;
    unpack(v, phi, k0, k1);
    try {
      return step2_objective(d, phi, k0, k1);
    } catch (const NumericalError&) {
      return kInf;
    }
  };
  Eigen::VectorXd x0(dim), steps(dim);
  if (!pin) {
    x0[0] = phi0;
    steps[0] = 0.05;
  }
  x0[o] = std::log(kappa00);
  steps[o] = 0.2;
  x0[o + 1] = std::log(kappa10);
  steps[o + 1] = 0.2;
  const MinimizeResult r = minimize(f, x0, steps, opts.simplex, 1e-5);

  Step2Result out;
  double phi, k0, k1;
  unpack(r.x, phi, k0, k1);
  out.kappa0 = k0;
  out.kappa1 = k1;
  out.nu = std::cos(phi);
  out.mu1 = UnitVec(std::cos(phi) * mu0.coords() + std::sin(phi) * d.gamma_star.coords());
  out.neg_log_lik = r.value;
  out.converged = r.converged && std::isfinite(r.value);
  return out;
}

namespace {

std::vector<Step2Result> fit_all_step2(const DirectionalSample& data, const UnitVec& mu0, const FitOptions& opts,
                                       const std::vector<Step2Result>* warm, bool bm) {
  std::vector<Step2Result> out;
  for (int k = 0; k < data.K; ++k) {
    const Eigen::MatrixXd X = data.marginal(k);
    if (bm) {
      const Eigen::VectorXd s = X * mu0.coords();
      const VerticalFit v = fit_vertical_mle(s, data.p, opts.great_sphere);
      Step2Result r;
      r.nu = v.nu;
      r.kappa0 = v.kappa0;
      r.kappa1 = 0.0;
      // Any mu1 on the fitted small sphere; use the mean direction's meridian.
      const Frame frame = axis_frame(mu0);
      Eigen::VectorXd horizontal = (frame.columns.transpose() * X.colwise().mean().transpose()).tail(data.p - 1);
      if (horizontal.norm() < 1e-14) horizontal = Eigen::VectorXd::Unit(data.p - 1, 0);
      r.mu1 = recompose(frame, v.nu, horizontal);
      r.neg_log_lik = v.neg_log_lik + X.rows() * log_vmf_integral(data.p - 1, 0.0);
      r.converged = true;
      out.push_back(r);
    } else {
      std::optional<Step2Result> start;
      if (warm) start = (*warm)[k];
      out.push_back(update_rest_step2(X, mu0, opts, start));
    }
  }
  return out;
}

FitResult fit_first_kind(const DirectionalSample& data, ModelKind kind, const FitOptions& opts, bool bm) {
  validate(opts);
  if (data.n() < data.p + 2) throw InvalidArgument("fit: need at least p + 2 observations");
  if (kind == ModelKind::S1 && data.K != 1) throw InvalidArgument("s1: data must have K = 1");
  if (opts.flat_vertical) throw InvalidArgument("fit: flat_vertical applies to second-kind models only");

  FitResult result;
  FirstKindState state;
  if (opts.fixed_mu0) {
    if (opts.fixed_mu0->size() != data.p) throw InvalidArgument("fit: fixed axis has the wrong dimension");
    state.mu0 = *opts.fixed_mu0;
    state.marginals = fit_all_step2(data, state.mu0, opts, nullptr, bm);
    state.nll = total_nll(state.marginals);
    result.trace.push_back(state.nll);
    result.n_iters = 1;
    result.converged = true;
  } else {
    auto run = [&](const UnitVec& mu0, FitResult& res) {
      FirstKindState st;
      std::vector<double> nu(data.K), weights(data.K, 1.0);
      for (int k = 0; k < data.K; ++k) {
        nu[k] = opts.great_sphere ? 0.0 : opts.nu_init.value_or((data.marginal(k) * mu0.coords()).mean());
      }
      const std::vector<Step2Result>* warm = nullptr;
      for (int iter = 0; iter < opts.max_outer_iters; ++iter) {
        UnitVec next_mu0 = opts.great_sphere ? great_sphere_axis(data, weights) : update_mu0_step1(data, nu, weights);
        next_mu0 = orient_axis(data, next_mu0);
        std::vector<Step2Result> next = fit_all_step2(data, next_mu0, opts, warm, bm);
        const double nll = total_nll(next);
        ++res.n_iters;
        if (!(nll < st.nll)) {
          res.converged = true;
          break;
        }
        const double previous = st.nll;
        st.mu0 = next_mu0;
        st.marginals = std::move(next);
        st.nll = nll;
        warm = &st.marginals;
        res.trace.push_back(nll);
        for (int k = 0; k < data.K; ++k) {
          nu[k] = st.marginals[k].nu;
          weights[k] = std::max(st.marginals[k].kappa0, 1e-8);
        }
        if (std::isfinite(previous) && previous - nll <= opts.tol * std::abs(nll)) {
          res.converged = true;
          break;
        }
      }
      return st;
    };

    const UnitVec primary = great_sphere_axis(data, std::vector<double>(data.K, 1.0));
    state = run(primary, result);
    if (!std::isfinite(state.nll)) throw NumericalError("fit: no finite likelihood reached");

    if (!result.converged) {
      // The alternation creeps along a ridge; finish on the axis profile.
      const FirstKindState anchor = state;
      const Eigen::MatrixXd basis = tangent_basis(data, anchor.mu0);
      Objective f = [&](const Eigen::VectorXd& v) {
        if (v.norm() > 0.3) return kInf;
        try {
          return total_nll(fit_all_step2(data, exp_map(anchor.mu0, basis * v), opts, &anchor.marginals, bm));
        } catch (const Error&) {
          return kInf;
        }
      };
      const MinimizeResult r = newton_polish(f, Eigen::VectorXd::Zero(data.p - 1), 1e-3, 20);
      if (r.value < state.nll) {
        state.mu0 = orient_axis(data, exp_map(anchor.mu0, basis * r.x));
        state.marginals = fit_all_step2(data, state.mu0, opts, &anchor.marginals, bm);
        state.nll = total_nll(state.marginals);
        result.trace.push_back(state.nll);
      }
      result.converged = r.converged;
    }
  }

  std::vector<MarginalParams> marginals;
  for (const auto& m : state.marginals) {
    marginals.push_back(MarginalParams{m.mu1, m.kappa0, m.kappa1});
    result.saturated = result.saturated || m.kappa0 >= kMaxConcentration || m.kappa1 >= kMaxConcentration;
  }
  if (bm && data.K == 1) {
    result.params = BmParams{state.mu0, marginals[0].kappa0, state.marginals[0].nu};
  } else if (kind == ModelKind::S1 && data.K == 1 && !bm) {
    result.params = S1Params{state.mu0, marginals[0].mu1, marginals[0].kappa0, marginals[0].kappa1};
  } else {
    result.params = IMS1Params{state.mu0, marginals};
  }
  result.neg_log_lik = state.nll;
  return result;
}

}  // namespace

void validate(const FitOptions& opts) {
  if (opts.nu_init && !(std::abs(*opts.nu_init) < 1.0)) throw InvalidArgument("FitOptions: |nu_init| must be < 1");
  if (opts.flat_vertical && opts.great_sphere)
    throw InvalidArgument("FitOptions: flat_vertical and great_sphere are exclusive");
  if (opts.max_outer_iters < 1) throw InvalidArgument("FitOptions: max_outer_iters must be >= 1");
  if (!(opts.tol > 0.0)) throw InvalidArgument("FitOptions: tol must be positive");
}

double neg_log_lik(const ModelParams& params, const DirectionalSample& data) {
  const Density density(params);
  if (density.dim() != data.p || density.num_marginals() != data.K)
    throw InvalidArgument("neg_log_lik: data shape does not match the model");
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) total -= density.log_density(data.rows.row(i).transpose());
  return total;
}

UnitVec minimize_quadratic_on_sphere(const Eigen::MatrixXd& S, const Eigen::VectorXd& b) {
  const Eigen::Index p = S.rows();
  if (S.cols() != p || b.size() != p) throw InvalidArgument("minimize_quadratic_on_sphere: dimension mismatch");
  const double bnorm = b.norm();
  if (bnorm == 0.0) return UnitVec(smallest_eigenvector(S));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  const Eigen::VectorXd evals = eig.eigenvalues();
  const Eigen::VectorXd c = eig.eigenvectors().transpose() * b;
  const double lambda_min = evals[0];
  // |mu(lambda)|^2 = sum_i c_i^2 / (e_i - lambda)^2 increases on (-inf, e_min).
  auto norm_sq = [&](double lambda) {
    double t = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
      const double d = evals[i] - lambda;
      t += c[i] * c[i] / (d * d);
    }
    return t;
  };
  double lo = lambda_min - bnorm;
  double hi = lambda_min;
  const double scale = std::max(1.0, std::abs(lambda_min) + bnorm);
  // Hard case: b has no weight on the bottom eigenspace.
  const double gap_tol = 1e-12 * scale;
  double bottom_weight = 0.0;
  for (Eigen::Index i = 0; i < p; ++i)
    if (evals[i] - lambda_min <= gap_tol) bottom_weight += c[i] * c[i];
  if (bottom_weight <= 1e-24 * bnorm * bnorm) {
    double partial = 0.0;
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < p; ++i)
      if (evals[i] - lambda_min > gap_tol) {
        coef[i] = c[i] / (evals[i] - lambda_min);
        partial += coef[i] * coef[i];
      }
    if (partial <= 1.0) {
      coef[0] = std::sqrt(1.0 - partial);
      return UnitVec(eig.eigenvectors() * coef);
    }
  }
  if (!(norm_sq(lo) <= 1.0)) throw NumericalError("step 1: bisection bracket has no sign change");
  for (int iter = 0; iter < 300 && hi - lo > 1e-12 * scale; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (norm_sq(mid) < 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double lambda = 0.5 * (lo + hi);
  Eigen::VectorXd coef(p);
  for (Eigen::Index i = 0; i < p; ++i) coef[i] = c[i] / (evals[i] - lambda);
  return UnitVec(eig.eigenvectors() * coef);
}

UnitVec update_mu0_step1(const Eigen::MatrixXd& X, double nu) {
  if (!(std::abs(nu) < 1.0)) throw InvalidArgument("update_mu0_step1: |nu| must be < 1");
  if (X.rows() < 1) throw InvalidArgument("update_mu0_step1: empty data");
  const double n = static_cast<double>(X.rows());
  const Eigen::MatrixXd S = X.transpose() * X / n;
  const Eigen::VectorXd mean = X.colwise().mean().transpose();
  return minimize_quadratic_on_sphere(S, nu * mean);
}

UnitVec update_mu0_step1(const DirectionalSample& data, const std::vector<double>& nu,
                         const std::vector<double>& weights) {
  if (static_cast<int>(nu.size()) != data.K || static_cast<int>(weights.size()) != data.K)
    throw InvalidArgument("update_mu0_step1: need one nu and one weight per marginal");
  const double n = static_cast<double>(data.n());
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(data.p, data.p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(data.p);
  for (int k = 0; k < data.K; ++k) {
    if (!(std::abs(nu[k]) < 1.0)) throw InvalidArgument("update_mu0_step1: |nu| must be < 1");
    if (!(weights[k] >= 0.0)) throw InvalidArgument("update_mu0_step1: weights must be non-negative");
    const auto X = data.marginal(k);
    S += weights[k] * (X.transpose() * X) / n;
    b += weights[k] * nu[k] * X.colwise().mean().transpose();
  }
  return minimize_quadratic_on_sphere(S, b);
}


VerticalFit fit_vertical_mle(const Eigen::VectorXd& s, int p, bool pin_nu_zero) {
  if (s.size() < 3) throw InvalidArgument("vertical fit: need at least 3 values");
  if (p < 3) throw InvalidArgument("vertical fit: p must be >= 3");
  const VerticalStats st = vertical_stats(s);
  const double mean = st.sum / st.n;
  const double var = st.sum_sq / st.n - mean * mean;
  const double spread = pin_nu_zero ? st.sum_sq / st.n : std::max(var, 0.0);
  if (spread * 2.0 * kMaxConcentration < 1.0) {
    // Tighter than the cap allows: the capped optimum sits at the sample mean.
    VerticalFit out;
    out.nu = pin_nu_zero ? 0.0 : std::clamp(mean, -kNuLimit, kNuLimit);
    out.kappa0 = kMaxConcentration;
    out.saturated = true;
    out.neg_log_lik = vertical_nll(st, p, out.nu, out.kappa0);
    return out;
  }

  Objective f = [&](const Eigen::VectorXd& v) {
    const double nu = pin_nu_zero ? 0.0 : v[0];
    const double logk = pin_nu_zero ? v[0] : v[1];
    if (!(std::abs(nu) < kNuLimit) || !(logk >= kLogKappaMin && logk <= kLogKappaMax)) return kInf;
    try {
      return vertical_nll(st, p, nu, std::exp(logk));
    } catch (const NumericalError&) {
      return kInf;
    }
  };
  const double k_start = std::clamp(1.0 / (2.0 * spread), 1e-3, 0.5 * kMaxConcentration);
  Eigen::VectorXd x0, steps;
  if (pin_nu_zero) {
    x0 = Eigen::VectorXd::Constant(1, std::log(k_start));
    steps = Eigen::VectorXd::Constant(1, 0.2);
  } else {
    x0 = Eigen::Vector2d(std::clamp(mean, -0.99, 0.99), std::log(k_start));
    steps = Eigen::Vector2d(0.1 * std::sqrt(spread) + 1e-6, 0.2);
  }
  SimplexOptions simplex;
  simplex.max_evals = 2000;
  const MinimizeResult r = minimize(f, x0, steps, simplex, 1e-6);
  VerticalFit out;
  out.nu = pin_nu_zero ? 0.0 : r.x[0];
  out.kappa0 = capped(std::exp(pin_nu_zero ? r.x[0] : r.x[1]), out.saturated);
  if (out.kappa0 >= 0.999 * kMaxConcentration) out.saturated = true;
  out.neg_log_lik = r.value;
  return out;
}

VerticalFit fit_trunc_normal_mle(const Eigen::VectorXd& s) {
  if ((s.array().abs() > 1.0).any()) throw InvalidArgument("fit_trunc_normal_mle: values must lie in [-1, 1]");
  return fit_vertical_mle(s, 3, false);
}

VonMisesFit fit_von_mises_mle(const Eigen::VectorXd& angles) {
  if (angles.size() < 2) throw InvalidArgument("fit_von_mises_mle: need at least 2 angles");
  const double c = angles.array().cos().mean();
  const double sn = angles.array().sin().mean();
  const double r = std::hypot(c, sn);
  VonMisesFit out;
  if (r < 1e-15) {
    out.mean_undefined = true;
    return out;
  }
  out.zeta = std::atan2(sn, c);
  out.kappa = solve_mean_resultant(r, 2, out.saturated);
  return out;
}

VmfFit fit_vmf_mle(const Eigen::MatrixXd& X) {
  if (X.rows() < 2 || X.cols() < 2) throw InvalidArgument("fit_vmf_mle: need n >= 2 and d >= 2");
  const Eigen::VectorXd sum = X.colwise().sum().transpose();
  const double n = static_cast<double>(X.rows());
  VmfFit out;
  const double norm = sum.norm();
  if (norm < 1e-14 * n) {
    out.mu = UnitVec(Eigen::VectorXd::Unit(X.cols(), 0));
    out.kappa = 0.0;
    return out;
  }
  out.mu = UnitVec(sum);
  out.kappa = solve_mean_resultant(norm / n, static_cast<int>(X.cols()), out.saturated);
  return out;
}

MvmFit fit_mvm_moment(const Eigen::MatrixXd& angles) {
  const Eigen::Index n = angles.rows();
  const Eigen::Index K = angles.cols();
  if (K < 1 || n <= K) throw InvalidArgument("fit_mvm_moment: need n > K");
  MvmFit out;
  out.zeta.resize(K);
  Eigen::MatrixXd sines(n, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    out.zeta[k] = std::atan2(angles.col(k).array().sin().sum(), angles.col(k).array().cos().sum());
    sines.col(k) = (angles.col(k).array() - out.zeta[k]).sin().matrix();
  }
  const Eigen::MatrixXd S = sines.transpose() * sines / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  if (!(eig.eigenvalues()[0] > 1e-12 * std::max(eig.eigenvalues()[K - 1], 1e-300))) {
    for (Eigen::Index k = 0; k < K; ++k)
      if (!(S(k, k) > 1e-12))
        throw NumericalError("fit_mvm_moment: marginal " + std::to_string(k + 1) + " has no horizontal spread");
    Eigen::Index bi = 0, bj = 1;
    double worst = -1.0;
    for (Eigen::Index i = 0; i < K; ++i)
      for (Eigen::Index j = i + 1; j < K; ++j) {
        const double corr = std::abs(S(i, j)) / std::sqrt(S(i, i) * S(j, j));
        if (corr > worst) worst = corr, bi = i, bj = j;
      }
    throw NumericalError("fit_mvm_moment: sine covariance is singular (marginals " + std::to_string(bi + 1) + " and " +
                         std::to_string(bj + 1) + " are near-collinear)");
  }
  const Eigen::MatrixXd inv = S.inverse();
  out.kappa1.resize(K);
  out.lambda = -inv;
  for (Eigen::Index k = 0; k < K; ++k) {
    out.kappa1[k] = capped(inv(k, k), out.saturated);
    out.lambda(k, k) = 0.0;
  }
  out.lambda = 0.5 * (out.lambda + out.lambda.transpose());
  return out;
}

MvmFit fit_mvm_mle(const Eigen::MatrixXd& angles, const MvmFit& start) {
  const Eigen::Index K = angles.cols();
  if (K > kMaxNormalizedMs2Marginals)
    throw UnsupportedModel("fit_mvm_mle: exact likelihood limited to K <= " +
                           std::to_string(kMaxNormalizedMs2Marginals));
  const Eigen::Index pairs = K * (K - 1) / 2;
  const Eigen::Index dim = 2 * K + pairs;
  auto unpack = [&](const Eigen::VectorXd& v) {
    MvmFit m;
    m.zeta = v.head(K);
    m.kappa1 = v.segment(K, K).array().exp().matrix();
    m.lambda = Eigen::MatrixXd::Zero(K, K);
    Eigen::Index idx = 2 * K;
    for (Eigen::Index i = 0; i < K; ++i)
      for (Eigen::Index j = i + 1; j < K; ++j) m.lambda(i, j) = m.lambda(j, i) = v[idx++];
    return m;
  };
  Objective f = [&](const Eigen::VectorXd& v) {
    for (Eigen::Index k = K; k < 2 * K; ++k)
      if (!(v[k] >= kLogKappaMin && v[k] <= kLogKappaMax)) return kInf;
    return mvm_nll(angles, unpack(v));
  };
  Eigen::VectorXd x0(dim), steps(dim);
  x0.head(K) = start.zeta;
  for (Eigen::Index k = 0; k < K; ++k) {
    x0[K + k] = std::log(std::clamp(start.kappa1[k], 1e-3, 1e5));
    steps[k] = 0.05;
    steps[K + k] = 0.1;
  }
  Eigen::Index idx = 2 * K;
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = i + 1; j < K; ++j) {
      x0[idx] = start.lambda(i, j);
      steps[idx++] = 0.1 * std::sqrt(start.kappa1[i] * start.kappa1[j]) + 0.1;
    }
  // The moment estimates usually start inside the quadratic basin.
  MinimizeResult r = newton_polish(f, x0, 1e-4, 40);
  if (!r.converged || !std::isfinite(r.value)) {
    const MinimizeResult fallback = minimize(f, r.x, steps, SimplexOptions{}, 1e-4);
    if (fallback.value < r.value || !std::isfinite(r.value)) r = fallback;
  }
  MvmFit out = unpack(r.x);
  for (Eigen::Index k = 0; k < K; ++k) {
    out.zeta[k] = std::remainder(out.zeta[k], 2.0 * std::numbers::pi);
    out.kappa1[k] = capped(out.kappa1[k], out.saturated);
  }
  return out;
}

FitResult fit_vmf(const DirectionalSample& data) {
  if (data.K != 1) throw InvalidArgument("vmf: data must have K = 1");
  if (data.n() < 2) throw InvalidArgument("vmf: need at least 2 observations");
  const VmfFit v = fit_vmf_mle(data.rows);
  FitResult out;
  out.params = VmfParams{v.mu, v.kappa};
  out.neg_log_lik = neg_log_lik(out.params, data);
  out.trace.push_back(out.neg_log_lik);
  out.n_iters = 1;
  out.converged = true;
  out.saturated = v.saturated;
  return out;
}

FitResult fit_s1(const DirectionalSample& data, const FitOptions& opts) {
  return fit_first_kind(data, ModelKind::S1, opts, false);
}

FitResult fit_ims1(const DirectionalSample& data, const FitOptions& opts) {
  return fit_first_kind(data, ModelKind::IMS1, opts, false);
}

FitResult fit_bm(const DirectionalSample& data, const FitOptions& opts) {
  return fit_first_kind(data, ModelKind::BM, opts, true);
}

FitResult fit_s2(const DirectionalSample& data, const FitOptions& opts) {
  return fit_second_kind(data, ModelKind::S2, opts);
}

FitResult fit_ims2(const DirectionalSample& data, const FitOptions& opts) {
  return fit_second_kind(data, ModelKind::IMS2, opts);
}

FitResult fit_ms2(const DirectionalSample& data, const FitOptions& opts) {
  return fit_second_kind(data, ModelKind::MS2, opts);
}

FitResult fit_model(ModelKind kind, const DirectionalSample& data, const FitOptions& opts) {
  switch (kind) {
    case ModelKind::VMF: return fit_vmf(data);
    case ModelKind::BM: return fit_bm(data, opts);
    case ModelKind::S1: return fit_s1(data, opts);
    case ModelKind::S2: return fit_s2(data, opts);
    case ModelKind::IMS1: return fit_ims1(data, opts);
    case ModelKind::IMS2: return fit_ims2(data, opts);
    case ModelKind::MS2: return fit_ms2(data, opts);
  }
  throw UnsupportedModel("fit_model: unknown model");
}

SphereEstimate sphere_estimate(const ModelParams& params) {
  return std::visit(
      [](const auto& m) -> SphereEstimate {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, VmfParams>) {
          throw UnsupportedModel("sphere_estimate: a vMF model carries no small sphere");
        } else if constexpr (std::is_same_v<T, BmParams>) {
          return SphereEstimate{m.mu, {m.nu}};
        } else if constexpr (std::is_same_v<T, S1Params> || std::is_same_v<T, S2Params>) {
          return SphereEstimate{m.mu0, {m.nu()}};
        } else {
          std::vector<double> nu;
          for (const auto& mk : m.marginals) nu.push_back(m.mu0.coords().dot(mk.mu1.coords()));
          return SphereEstimate{m.mu0, nu};
        }
      },
      params);
}

}  // namespace smallsphere

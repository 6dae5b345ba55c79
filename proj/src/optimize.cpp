#include "smallsphere/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "smallsphere/error.hpp"

namespace smallsphere {

namespace {

double safe_eval(const Objective& f, const Eigen::VectorXd& x, int& evals) {
  ++evals;
  const double v = f(x);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

}  // namespace

MinimizeResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const SimplexOptions& opts,
                           const Eigen::VectorXd& steps) {
  const Eigen::Index d = x0.size();
  if (d < 1) throw InvalidArgument("nelder_mead: empty starting point");
  if (steps.size() != 0 && steps.size() != d) throw InvalidArgument("nelder_mead: steps size mismatch");
  if (!(opts.shrink > 0.0 && opts.shrink < 1.0)) throw InvalidArgument("nelder_mead: shrink must lie in (0, 1)");

  int evals = 0;
  std::vector<Eigen::VectorXd> pts(d + 1, x0);
  std::vector<double> vals(d + 1);
  for (Eigen::Index i = 0; i < d; ++i) pts[i + 1][i] += steps.size() ? steps[i] : opts.initial_step;
  for (Eigen::Index i = 0; i <= d; ++i) vals[i] = safe_eval(f, pts[i], evals);

  std::vector<Eigen::Index> order(d + 1);
  bool converged = false;
  while (evals < opts.max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return vals[a] < vals[b]; });
    const Eigen::Index best = order.front(), worst = order.back(), second = order[d - 1];

    double diameter = 0.0;
    for (Eigen::Index i = 0; i <= d; ++i) diameter = std::max(diameter, (pts[i] - pts[best]).cwiseAbs().maxCoeff());
    if (std::isfinite(vals[worst]) && vals[worst] - vals[best] <= opts.f_tol * (1.0 + std::abs(vals[best])) &&
        diameter <= opts.x_tol) {
      converged = true;
      break;
    }
    if (diameter <= 1e-14 * (1.0 + pts[best].cwiseAbs().maxCoeff())) {
      converged = std::isfinite(vals[best]);
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i <= d; ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd reflected = centroid + (centroid - pts[worst]);
    const double fr = safe_eval(f, reflected, evals);
    if (fr < vals[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = safe_eval(f, expanded, evals);
      if (fe < fr) {
        pts[worst] = expanded;
        vals[worst] = fe;
      } else {
        pts[worst] = reflected;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = reflected;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid)) : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = safe_eval(f, contracted, evals);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = contracted;
      vals[worst] = fc;
      continue;
    }
    for (Eigen::Index i = 0; i <= d; ++i) {
      if (i == best) continue;
      pts[i] = pts[best] + opts.shrink * (pts[i] - pts[best]);
      vals[i] = safe_eval(f, pts[i], evals);
    }
  }
  const auto best = std::min_element(vals.begin(), vals.end()) - vals.begin();
  return MinimizeResult{pts[best], vals[best], evals, converged};
}

MinimizeResult newton_polish(const Objective& f, const Eigen::VectorXd& x0, double h, int max_iters) {
  const Eigen::Index d = x0.size();
  int evals = 0;
  Eigen::VectorXd x = x0;
  double fx = safe_eval(f, x, evals);
  bool converged = false;
  for (int iter = 0; iter < max_iters && std::isfinite(fx); ++iter) {
    Eigen::VectorXd grad(d);
    Eigen::MatrixXd hess(d, d);
    std::vector<double> fp(d), fm(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      fp[i] = safe_eval(f, xp, evals);
      fm[i] = safe_eval(f, xm, evals);
      grad[i] = (fp[i] - fm[i]) / (2.0 * h);
      hess(i, i) = (fp[i] - 2.0 * fx + fm[i]) / (h * h);
    }
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = i + 1; j < d; ++j) {
        Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
        xpp[i] += h, xpp[j] += h;
        xpm[i] += h, xpm[j] -= h;
        xmp[i] -= h, xmp[j] += h;
        xmm[i] -= h, xmm[j] -= h;
        hess(i, j) = hess(j, i) = (safe_eval(f, xpp, evals) - safe_eval(f, xpm, evals) - safe_eval(f, xmp, evals) +
                                   safe_eval(f, xmm, evals)) /
                                  (4.0 * h * h);
      }
    if (!grad.allFinite() || !hess.allFinite()) break;
    // Regularize to a positive definite model.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
    Eigen::VectorXd ev = eig.eigenvalues();
    const double floor = std::max(1e-8, 1e-6 * ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < d; ++i) ev[i] = std::max(std::abs(ev[i]), floor);
    const Eigen::VectorXd step =
        -(eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose() * grad);
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
      const Eigen::VectorXd trial = x + t * step;
      const double ft = safe_eval(f, trial, evals);
      if (ft < fx) {
        const double gain = fx - ft;
        x = trial;
        fx = ft;
        moved = true;
        if (gain <= 1e-13 * (1.0 + std::abs(fx))) converged = true;
        break;
      }
    }
    if (!moved) {
      converged = true;
      break;
    }
    if (converged) break;
  }
  return MinimizeResult{x, fx, evals, converged};
}

MinimizeResult golden_section(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  int evals = 0;
  double a = lo, b = hi;
  double c = b - ratio * (b - a), d = a + ratio * (b - a);
  double fc = f(c), fd = f(d);
  evals += 2;
  while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = f(d);
    }
    ++evals;
  }
  const double x = fc < fd ? c : d;
  Eigen::VectorXd out(1);
  out[0] = x;
  return MinimizeResult{out, std::min(fc, fd), evals, true};
}

}  // namespace smallsphere

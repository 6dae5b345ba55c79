#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "gof.hpp"
#include "oracles.hpp"
#include "smallsphere/samplers.hpp"
#include "smallsphere/special_functions.hpp"

using namespace smallsphere;

namespace {

const UnitVec kPole{0.0, 0.0, 1.0};

UnitVec circle_point(double nu, double azimuth) {
  const double r = std::sqrt(1.0 - nu * nu);
  return UnitVec(Eigen::Vector3d(r * std::cos(azimuth), r * std::sin(azimuth), nu));
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd x = a.array() - a.mean();
  const Eigen::ArrayXd y = b.array() - b.mean();
  return (x * y).sum() / std::sqrt((x * x).sum() * (y * y).sum());
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

double wrap(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

}  // namespace

TEST_CASE("truncated normal sampler") {
  RngStream rng(1);
  const TruncNormalSpec spec{0.5, 0.05, -1.0, 1.0};
  const Eigen::VectorXd s = sample_trunc_normal(rng, spec, 100000);
  CHECK(s.minCoeff() >= -1.0);
  CHECK(s.maxCoeff() <= 1.0);
  CHECK(s.mean() == doctest::Approx(0.5).epsilon(0.002));
  // Far tail: all mass sits against the bound.
  const Eigen::VectorXd t = sample_trunc_normal(rng, TruncNormalSpec{3.0, 0.1, -1.0, 1.0}, 1000);
  CHECK(t.minCoeff() >= -1.0);
  CHECK(t.maxCoeff() <= 1.0);
  CHECK(t.mean() > 0.85);
  // Compare the empirical distribution with the cdf.
  const TruncNormalSpec wide{0.2, 0.6, -1.0, 1.0};
  Eigen::VectorXd w = sample_trunc_normal(rng, wide, 20000);
  std::sort(w.data(), w.data() + w.size());
  double d = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double f = trunc_normal_cdf(wide, w[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / w.size()), std::abs(f - static_cast<double>(i + 1) / w.size())});
  }
  CHECK(d < 1.63 / std::sqrt(static_cast<double>(w.size())));
}

TEST_CASE("von Mises sampler") {
  RngStream rng(2);
  const Eigen::VectorXd u = sample_von_mises(rng, 0.0, 0.0, 100000);
  std::vector<double> counts(20, 0.0);
  for (double a : u) {
    const double x = std::fmod(a + 4.0 * std::numbers::pi, 2.0 * std::numbers::pi);
    counts[std::min(19, static_cast<int>(x / (2.0 * std::numbers::pi) * 20))] += 1.0;
  }
  double stat = 0.0;
  for (double c : counts) stat += (c - 5000.0) * (c - 5000.0) / 5000.0;
  CHECK(chi_square_sf(stat, 19) > 0.01);

  const Eigen::VectorXd v = sample_von_mises(rng, 1.2, 10.0, 100000);
  const double c = v.array().cos().mean();
  const double s = v.array().sin().mean();
  CHECK(std::abs(wrap(std::atan2(s, c) - 1.2)) < 0.02);
  CHECK(std::hypot(c, s) == doctest::Approx(oracle::bessel_series(1.0, 10.0) / oracle::bessel_series(0.0, 10.0)).epsilon(0.005));
  CHECK(std::hypot(c, s) == doctest::Approx(0.9486).epsilon(0.005));
}

TEST_CASE("vMF sampler") {
  RngStream rng(3);
  const UnitVec mu = circle_point(0.2, 1.0);
  const Eigen::MatrixXd x = sample_vmf(rng, mu, 5.0, 50000);
  CHECK((x.rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
  const Eigen::Vector3d mean = x.colwise().mean().transpose();
  // Mean resultant length on S^2 is coth(k) - 1/k.
  CHECK(mean.norm() == doctest::Approx(1.0 / std::tanh(5.0) - 0.2).epsilon(0.005));
  CHECK(mean.normalized().dot(Eigen::Vector3d(mu.coords())) > 0.9999);
  const UnitVec mu4(Eigen::Vector4d(0.5, 0.5, 0.5, 0.5));
  const Eigen::MatrixXd y = sample_vmf(rng, mu4, 3.0, 20000);
  CHECK(y.cols() == 4);
  CHECK((y.rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("multivariate von Mises sampler") {
  RngStream rng(4);
  const GibbsConfig config;
  Eigen::Vector2d zeta(0.3, -1.0);
  Eigen::Vector2d kappa(20.0, 20.0);
  Eigen::Matrix2d lambda;
  lambda << 0.0, 15.0, 15.0, 0.0;
  // The large-concentration normal approximation gives 0.75 here; the
  // sampler is held to the exact value instead.
  const double exact = oracle::mvm_sine_correlation(20.0, 20.0, 15.0);
  CHECK(exact == doctest::Approx(0.6913).epsilon(1e-3));
  Eigen::MatrixXd a = sample_mvm(rng, zeta, kappa, lambda, config, 10000);
  CHECK(std::abs(correlation((a.col(0).array() - zeta[0]).sin().matrix(), (a.col(1).array() - zeta[1]).sin().matrix()) -
                 exact) <= 0.02);

  kappa << 30.0, 30.0;
  lambda << 0.0, 24.0, 24.0, 0.0;
  a = sample_mvm(rng, zeta, kappa, lambda, config, 10000);
  CHECK(std::abs(correlation((a.col(0).array() - zeta[0]).sin().matrix(), (a.col(1).array() - zeta[1]).sin().matrix()) -
                 oracle::mvm_sine_correlation(30.0, 30.0, 24.0)) <= 0.02);

  kappa << 5.0, 12.0;
  a = sample_mvm(rng, zeta, kappa, Eigen::Matrix2d::Zero(), config, 10000);
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXd ref = sample_von_mises(rng, zeta[k], kappa[k], 10000);
    std::vector<double> x(10000), y(10000);
    for (int i = 0; i < 10000; ++i) {
      x[i] = wrap(a(i, k) - zeta[k]);
      y[i] = wrap(ref[i] - zeta[k]);
    }
    // 1% critical value for equal sample sizes of 10^4.
    CHECK(ks_statistic(x, y) < 1.628 * std::sqrt(2.0 / 10000.0));
  }
}

TEST_CASE("second-kind sampler moments") {
  RngStream rng(5);
  const UnitVec mu1 = circle_point(0.5, 0.8);
  const DirectionalSample d = sample_model(rng, S2Params{kPole, mu1, 100.0, 10.0}, 10000);
  const Eigen::VectorXd s = d.rows.col(2);
  CHECK(std::abs(s.mean() - 0.5) <= 0.005);
  const double c = (d.rows.col(0).array() / (1.0 - s.array().square()).sqrt()).mean();
  const double sn = (d.rows.col(1).array() / (1.0 - s.array().square()).sqrt()).mean();
  CHECK(std::abs(wrap(std::atan2(sn, c) - 0.8)) <= 0.01);
  CHECK((d.rows.rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("first-kind and second-kind samplers fit their densities") {
  RngStream rng(6);
  const UnitVec mu1 = circle_point(0.5, 0.0);
  const Eigen::Vector3d axis(0.0, 0.0, 1.0);
  const Eigen::Vector3d ref(1.0, 0.0, 0.0);
  {
    const double k0 = 10.0, k1 = 1.0;
    const DirectionalSample d = sample_model(rng, S1Params{kPole, mu1, k0, k1}, 20000);
    const auto kernel = [&](double s, double phi) {
      return -k0 * (s - 0.5) * (s - 0.5) + k1 * (0.5 * s + std::sqrt(0.75) * std::sqrt(1.0 - s * s) * std::cos(phi));
    };
    const gof::Outcome r = gof::chi_square_2d(d.rows, axis, ref, kernel);
    CAPTURE(r.statistic);
    CHECK(r.p_value > 0.01);
  }
  {
    const double k0 = 100.0, k1 = 10.0;
    const DirectionalSample d = sample_model(rng, S2Params{kPole, mu1, k0, k1}, 20000);
    const auto kernel = [&](double s, double phi) { return -k0 * (s - 0.5) * (s - 0.5) + k1 * std::cos(phi); };
    const gof::Outcome r = gof::chi_square_2d(d.rows, axis, ref, kernel);
    CAPTURE(r.statistic);
    CHECK(r.p_value > 0.01);
  }
}

TEST_CASE("first-kind Gibbs chains mix") {
  // Split potential scale reduction over four chains on the height.
  for (auto [k0, k1] : {std::pair{10.0, 1.0}, {100.0, 1.0}, {100.0, 10.0}, {100.0, 0.0}}) {
    std::vector<Eigen::VectorXd> halves;
    for (int chain = 0; chain < 4; ++chain) {
      RngStream rng = RngStream(77).split(chain);
      const DirectionalSample d = sample_model(rng, S1Params{kPole, circle_point(0.5, 0.0), k0, k1}, 1000);
      halves.push_back(d.rows.col(2).head(500));
      halves.push_back(d.rows.col(2).tail(500));
    }
    const double m = static_cast<double>(halves.size());
    const double n = 500.0;
    Eigen::VectorXd means(halves.size()), vars(halves.size());
    for (std::size_t i = 0; i < halves.size(); ++i) {
      means[i] = halves[i].mean();
      vars[i] = (halves[i].array() - means[i]).square().sum() / (n - 1.0);
    }
    const double B = n * (means.array() - means.mean()).square().sum() / (m - 1.0);
    const double W = vars.mean();
    const double rhat = std::sqrt(((n - 1.0) / n * W + B / n) / W);
    CAPTURE(k0);
    CAPTURE(k1);
    CHECK(rhat <= 1.05);
  }
}

TEST_CASE("independent joint sampler") {
  RngStream rng(8);
  const IMS2Params params{kPole,
                          {{circle_point(0.5, 0.0), 100.0, 10.0},
                           {circle_point(-0.3, 1.5), 100.0, 10.0},
                           {circle_point(0.2, -2.0), 50.0, 5.0}}};
  const DirectionalSample d = sample_model(rng, params, 10000);
  CHECK(d.K == 3);
  std::vector<Eigen::VectorXd> sines;
  for (int k = 0; k < 3; ++k) {
    const auto x = d.marginal(k);
    const Eigen::Vector3d xi = params.marginals[k].mu1.coords();
    const double zeta = std::atan2(xi.y(), xi.x());
    Eigen::VectorXd v(d.n());
    for (Eigen::Index i = 0; i < d.n(); ++i) v[i] = std::sin(std::atan2(x(i, 1), x(i, 0)) - zeta);
    sines.push_back(v);
  }
  for (int k = 0; k < 3; ++k)
    for (int l = k + 1; l < 3; ++l) CHECK(std::abs(correlation(sines[k], sines[l])) <= 0.03);
}

TEST_CASE("sampling is reproducible") {
  const MS2Params params{kPole,
                         {{circle_point(0.5, 0.0), 100.0, 20.0}, {circle_point(-0.3, 1.5), 100.0, 20.0}},
                         (Eigen::Matrix2d() << 0.0, 15.0, 15.0, 0.0).finished()};
  RngStream a(99), b(99);
  const DirectionalSample x = sample_model(a, params, 200);
  const DirectionalSample y = sample_model(b, params, 200);
  CHECK(x.rows == y.rows);
  for (int k = 0; k < 2; ++k) CHECK((x.marginal(k).rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
  RngStream c(99);
  const DirectionalSample z = sample_model(c, S1Params{kPole, circle_point(0.5, 0.0), 10.0, 1.0}, 50);
  RngStream e(99);
  CHECK(sample_model(e, S1Params{kPole, circle_point(0.5, 0.0), 10.0, 1.0}, 50).rows == z.rows);
  CHECK(RngStream(5).split(3).seed() == RngStream(5).split(3).seed());
  CHECK(RngStream(5).split(3).seed() != RngStream(5).split(4).seed());
}

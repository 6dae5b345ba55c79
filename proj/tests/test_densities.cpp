#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "smallsphere/densities.hpp"
#include "smallsphere/error.hpp"
#include "smallsphere/random.hpp"
#include "smallsphere/samplers.hpp"
#include "smallsphere/special_functions.hpp"

using namespace smallsphere;

namespace {

const UnitVec kPole{0.0, 0.0, 1.0};

UnitVec circle_point(double nu, double azimuth) {
  const double r = std::sqrt(1.0 - nu * nu);
  return UnitVec(Eigen::Vector3d(r * std::cos(azimuth), r * std::sin(azimuth), nu));
}

double mass(const Density& d, const Eigen::Vector3d& axis) {
  return oracle::sphere_integral([&](const Eigen::Vector3d& x) { return std::exp(d.log_density(x)); }, axis, 256);
}

Eigen::MatrixXd uniform_points(std::uint64_t seed, int n) {
  RngStream rng(seed);
  return sample_vmf(rng, kPole, 0.0, n);
}

}  // namespace

TEST_CASE("vMF density values") {
  const Eigen::Vector3d x(0.3, -0.4, std::sqrt(0.75));
  CHECK(std::exp(log_density(VmfParams{kPole, 0.0}, x)) == doctest::Approx(1.0 / (4.0 * std::numbers::pi)).epsilon(1e-12));
  CHECK(std::exp(log_density(VmfParams{kPole, 2.0}, kPole.coords())) ==
        doctest::Approx(2.0 * std::exp(2.0) / (4.0 * std::numbers::pi * std::sinh(2.0))).epsilon(1e-12));
  CHECK(std::exp(log_density(VmfParams{kPole, 2.0}, kPole.coords())) == doctest::Approx(0.324249).epsilon(1e-6));
  const double k = 2.0;
  CHECK(std::exp(log_density(VmfParams{kPole, k}, x)) ==
        doctest::Approx(k / (4.0 * std::numbers::pi * std::sinh(k)) * std::exp(k * x.z())).epsilon(1e-12));
}

TEST_CASE("second-kind closed-form constant") {
  const double b = std::exp(log_s2_const(3, 10.0, 1.0, 0.5));
  CHECK(b == doctest::Approx(4.4024).epsilon(1e-4));
  const double closed = std::pow(2.0 * std::numbers::pi, 1.5) / std::sqrt(20.0) * oracle::bessel_series(0.0, 1.0) *
                        (std_normal_cdf(0.5 * std::sqrt(20.0)) - std_normal_cdf(-1.5 * std::sqrt(20.0)));
  CHECK(b == doctest::Approx(closed).epsilon(1e-12));
  for (double k1 : {0.5, 3.0, 10.0}) {
    const double ratio = std::exp(log_s2_const(3, 10.0, 0.0, 0.5) - log_s2_const(3, 10.0, k1, 0.5));
    CHECK(ratio == doctest::Approx(1.0 / oracle::bessel_series(0.0, k1)).epsilon(1e-12));
  }
  // Cross-check against the 2D integral of the raw kernel.
  const UnitVec mu1 = circle_point(0.5, 0.0);
  const double raw = oracle::sphere_integral(
      [&](const Eigen::Vector3d& x) {
        const double s = x.z();
        const double rho = std::sqrt(std::max(0.0, 1.0 - s * s));
        const double cos_phi = rho > 0.0 ? x.x() / rho : 0.0;
        return std::exp(-10.0 * (s - 0.5) * (s - 0.5) + 1.0 * cos_phi);
      },
      kPole.coords());
  CHECK(raw == doctest::Approx(b).epsilon(1e-8));
  (void)mu1;
}

TEST_CASE("densities integrate to one") {
  const UnitVec mu1 = circle_point(0.5, 0.7);
  for (auto [k0, k1] : {std::pair{10.0, 1.0}, {100.0, 1.0}, {100.0, 10.0}}) {
    CAPTURE(k0);
    CAPTURE(k1);
    CHECK(mass(Density(S2Params{kPole, mu1, k0, k1}), kPole.coords()) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(mass(Density(S1Params{kPole, mu1, k0, k1}, true, S1Constant::Quadrature), kPole.coords()) ==
          doctest::Approx(1.0).epsilon(1e-5));
    CHECK(mass(Density(S1Params{kPole, mu1, k0, k1}), kPole.coords()) == doctest::Approx(1.0).epsilon(0.015));
    CHECK(mass(Density(BmParams{kPole, k0, 0.5}), kPole.coords()) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(mass(Density(VmfParams{mu1, k1}), mu1.coords()) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("Fisher-Bingham form") {
  const S1Params params{UnitVec{1.0, 0.0, 0.0}, UnitVec(Eigen::Vector3d(0.5, std::sqrt(0.75), 0.0)), 10.0, 1.0};
  const FisherBingham fb = to_fisher_bingham(params);
  CHECK(fb.gamma[0] == doctest::Approx(10.5).epsilon(1e-12));
  CHECK(fb.gamma[1] == doctest::Approx(0.8660254).epsilon(1e-7));
  CHECK(std::abs(fb.gamma[2]) < 1e-12);
  CHECK((fb.A - 10.0 * Eigen::Vector3d::UnitX() * Eigen::Vector3d::UnitX().transpose()).norm() < 1e-12);
  CHECK(fb.log_const == doctest::Approx(log_norm_const(params) + 10.0 * 0.25).epsilon(1e-10));

  const Eigen::MatrixXd pts = uniform_points(3, 100);
  const auto offset = [&](const Eigen::VectorXd& x) { return log_kernel(params, x) - (fb.gamma.dot(x) - x.dot(fb.A * x)); };
  const double c = offset(pts.row(0).transpose());
  for (Eigen::Index i = 1; i < pts.rows(); ++i) CHECK(std::abs(offset(pts.row(i).transpose()) - c) <= 1e-10);

  const FisherBingham great = to_fisher_bingham(S1Params{kPole, circle_point(0.0, 1.0), 7.0, 0.0});
  CHECK(great.gamma.norm() < 1e-12);
}

TEST_CASE("precision approximation") {
  MS2Params params{kPole, {{circle_point(0.5, 0.0), 100.0, 20.0}, {circle_point(-0.3, 1.5), 100.0, 20.0}},
                   Eigen::MatrixXd::Zero(2, 2)};
  PrecisionApprox none = ms2_precision_approx(params);
  CHECK(none.precision.isApprox(20.0 * Eigen::MatrixXd::Identity(2, 2)));
  CHECK(none.correlation(0, 1) == 0.0);
  params.lambda << 0.0, 15.0, 15.0, 0.0;
  const PrecisionApprox dep = ms2_precision_approx(params);
  Eigen::Matrix2d expected;
  expected << 20.0, -15.0, -15.0, 20.0;
  CHECK(dep.precision.isApprox(expected));
  CHECK(dep.correlation(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(dep.positive_definite);
  params.marginals[0].kappa1 = params.marginals[1].kappa1 = 30.0;
  params.lambda << 0.0, 24.0, 24.0, 0.0;
  CHECK(ms2_precision_approx(params).correlation(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  params.lambda << 0.0, 40.0, 40.0, 0.0;
  CHECK_FALSE(ms2_precision_approx(params).positive_definite);
}

TEST_CASE("reflection invariance and axis symmetry") {
  const UnitVec mu1 = circle_point(0.5, 0.4);
  const Eigen::Vector3d u = kPole.coords().head<3>().cross(Eigen::Vector3d(mu1.coords())).normalized();
  const Eigen::Matrix3d B = Eigen::Matrix3d::Identity() - 2.0 * u * u.transpose();
  const Eigen::MatrixXd pts = uniform_points(17, 100);
  const ModelParams s1 = S1Params{kPole, mu1, 30.0, 4.0};
  const ModelParams s2 = S2Params{kPole, mu1, 30.0, 4.0};
  const ModelParams s1_flip = S1Params{-kPole, mu1, 30.0, 4.0};
  const ModelParams s2_flip = S2Params{-kPole, mu1, 30.0, 4.0};
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const Eigen::Vector3d x = pts.row(i).transpose();
    for (const ModelParams* m : {&s1, &s2}) {
      CHECK(std::abs(log_density(*m, B * x) - log_density(*m, x)) <= 1e-10);
    }
    CHECK(std::abs(log_density(s1_flip, x) - log_density(s1, x)) <= 1e-10);
    CHECK(std::abs(log_density(s2_flip, x) - log_density(s2, x)) <= 1e-10);
  }
}

TEST_CASE("second kind separates height and azimuth") {
  const S2Params s2{kPole, circle_point(0.5, 0.3), 30.0, 4.0};
  const S1Params s1{kPole, circle_point(0.5, 0.3), 30.0, 4.0};
  const auto kernel = [](const ModelParams& m, double s, double phi) {
    const double r = std::sqrt(1.0 - s * s);
    return log_kernel(m, Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi), s));
  };
  const double h = 1e-3;
  const auto mixed = [&](const ModelParams& m, double s, double phi) {
    return (kernel(m, s + h, phi + h) - kernel(m, s + h, phi - h) - kernel(m, s - h, phi + h) +
            kernel(m, s - h, phi - h)) /
           (4.0 * h * h);
  };
  for (double s : {-0.6, 0.1, 0.5, 0.8}) {
    for (double phi : {-2.0, 0.0, 0.9, 2.5}) {
      CHECK(std::abs(mixed(s2, s, phi)) <= 1e-6);
    }
  }
  CHECK(std::abs(mixed(s1, 0.5, 0.9)) > 1e-2);
  CHECK(std::isfinite(log_density(s2, kPole.coords())));
  CHECK(std::isfinite(log_density(s2, (-kPole).coords())));
}

TEST_CASE("multivariate von Mises constant") {
  Eigen::Vector2d k2(20.0, 12.0);
  Eigen::Matrix2d l2;
  l2 << 0.0, 15.0, 15.0, 0.0;
  CHECK(log_mvm_const(k2, l2) == doctest::Approx(oracle::log_torus_sum(k2, l2, 128)).epsilon(1e-10));
  l2 << 0.0, -6.0, -6.0, 0.0;
  CHECK(log_mvm_const(k2, l2) == doctest::Approx(oracle::log_torus_sum(k2, l2, 128)).epsilon(1e-10));

  Eigen::Vector3d k3(10.0, 5.0, 2.0);
  Eigen::Matrix3d l3;
  l3 << 0.0, 4.0, -2.0, 4.0, 0.0, 1.5, -2.0, 1.5, 0.0;
  CHECK(log_mvm_const(k3, l3) == doctest::Approx(oracle::log_torus_sum(k3, l3, 64)).epsilon(1e-9));
  CHECK(log_mvm_const(k3, Eigen::Matrix3d::Zero()) ==
        doctest::Approx(3.0 * std::log(2.0 * std::numbers::pi) + std::log(oracle::bessel_series(0.0, 10.0)) +
                        std::log(oracle::bessel_series(0.0, 5.0)) + std::log(oracle::bessel_series(0.0, 2.0)))
            .epsilon(1e-12));

  const Eigen::Vector3d psi(0.3, -1.0, 2.0);
  const Eigen::Vector3d sines = psi.array().sin();
  CHECK(mvm_log_kernel(k3, l3, psi) ==
        doctest::Approx(k3.dot(Eigen::Vector3d(psi.array().cos())) + 0.5 * sines.dot(l3 * sines)).epsilon(1e-14));

  MS2Params four{kPole, std::vector<MarginalParams>(4, {circle_point(0.2, 0.0), 10.0, 5.0}), Eigen::MatrixXd::Zero(4, 4)};
  four.lambda(0, 1) = four.lambda(1, 0) = 2.0;
  CHECK_THROWS_AS(log_norm_const(four), UnsupportedModel);
}

TEST_CASE("joint model with no association matches independence") {
  const std::vector<MarginalParams> marg{{circle_point(0.5, 0.0), 100.0, 20.0}, {circle_point(-0.3, 1.5), 50.0, 8.0}};
  const MS2Params ms2{kPole, marg, Eigen::MatrixXd::Zero(2, 2)};
  const IMS2Params ims2{kPole, marg};
  const Eigen::MatrixXd a = uniform_points(4, 50);
  const Eigen::MatrixXd b = uniform_points(5, 50);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Eigen::VectorXd x(6);
    x << a.row(i).transpose(), b.row(i).transpose();
    CHECK(std::abs(log_density(ms2, x) - log_density(ims2, x)) <= 1e-12);
  }
}

TEST_CASE("association term of the joint model") {
  const std::vector<MarginalParams> marg{{circle_point(0.5, 0.0), 100.0, 20.0}, {circle_point(-0.3, 1.5), 50.0, 8.0}};
  MS2Params ms2{kPole, marg, Eigen::MatrixXd::Zero(2, 2)};
  ms2.lambda(0, 1) = ms2.lambda(1, 0) = 6.0;
  const IMS2Params ims2{kPole, marg};
  Eigen::Vector2d kappa(20.0, 8.0);
  const double shift = log_mvm_const(kappa, ms2.lambda) - log_mvm_const(kappa, Eigen::Matrix2d::Zero());
  const Eigen::MatrixXd a = uniform_points(6, 30);
  const Eigen::MatrixXd b = uniform_points(7, 30);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Eigen::VectorXd x(6);
    x << a.row(i).transpose(), b.row(i).transpose();
    double sines[2];
    for (int k = 0; k < 2; ++k) {
      const Eigen::Vector3d xk = x.segment<3>(3 * k);
      const Eigen::Vector3d mode = marg[k].mu1.coords();
      const Eigen::Vector3d y = (xk - xk.z() * Eigen::Vector3d::UnitZ()).normalized();
      const Eigen::Vector3d xi = (mode - mode.z() * Eigen::Vector3d::UnitZ()).normalized();
      sines[k] = Eigen::Vector3d::UnitZ().dot(xi.cross(y));
    }
    CHECK(log_density(ms2, x) - log_density(ims2, x) ==
          doctest::Approx(6.0 * sines[0] * sines[1] - shift).epsilon(1e-10));
  }
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(validate(ModelParams{VmfParams{kPole, -1.0}}), InvalidArgument);
  CHECK_THROWS_AS(validate(ModelParams{S2Params{kPole, kPole, 10.0, 1.0}}), InvalidArgument);
  CHECK_THROWS_AS(log_density(VmfParams{kPole, 1.0}, Eigen::Vector4d(1.0, 0.0, 0.0, 0.0)), InvalidArgument);
  CHECK(parse_model_kind("ms2") == ModelKind::MS2);
  CHECK(to_string(ModelKind::IMS1) == "ims1");
  CHECK_THROWS_AS(parse_model_kind("kent"), InvalidArgument);
}

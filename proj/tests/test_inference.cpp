#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "smallsphere/error.hpp"
#include "smallsphere/inference.hpp"
#include "smallsphere/samplers.hpp"
#include "smallsphere/simulation.hpp"

using namespace smallsphere;

namespace {

const UnitVec kPole{0.0, 0.0, 1.0};

Hypothesis hypothesis(HypothesisKind kind, ModelKind alt, std::optional<UnitVec> star = std::nullopt) {
  Hypothesis h;
  h.kind = kind;
  h.alternative = alt;
  h.mu0_star = star;
  return h;
}

}  // namespace

TEST_CASE("degrees of freedom") {
  CHECK(degrees_of_freedom(hypothesis(HypothesisKind::Association, ModelKind::MS2), 3, 2) == 1);
  CHECK(degrees_of_freedom(hypothesis(HypothesisKind::Association, ModelKind::MS2), 3, 3) == 3);
  for (int K : {1, 2, 3}) {
    const ModelKind alt = K == 1 ? ModelKind::S2 : ModelKind::MS2;
    CHECK(degrees_of_freedom(hypothesis(HypothesisKind::Axis, alt, kPole), 3, K) == 2);
  }
  CHECK(degrees_of_freedom(hypothesis(HypothesisKind::GreatSphere, ModelKind::IMS2), 3, 3) == 3);
}

TEST_CASE("hypothesis validation") {
  CHECK_THROWS_AS(validate(hypothesis(HypothesisKind::Association, ModelKind::S2), 3, 1), UnsupportedModel);
  CHECK_THROWS_AS(validate(hypothesis(HypothesisKind::Axis, ModelKind::S2), 3, 1), InvalidArgument);
  CHECK_NOTHROW(validate(hypothesis(HypothesisKind::Axis, ModelKind::S2, kPole), 3, 1));
  CHECK(parse_hypothesis_kind("vmf") == HypothesisKind::VonMisesFisher);
  CHECK_THROWS_AS(parse_hypothesis_kind("none"), InvalidArgument);
}

TEST_CASE("restricted fits never beat the alternative") {
  RngStream rng(101);
  const DirectionalSample s2 = sample_model(rng, table2_truth("c"), 50);
  const DirectionalSample ms2 = sample_model(rng, table3_truth("f"), 60);
  const std::vector<std::pair<Hypothesis, const DirectionalSample*>> cases{
      {hypothesis(HypothesisKind::Axis, ModelKind::S2, kPole), &s2},
      {hypothesis(HypothesisKind::GreatSphere, ModelKind::S2), &s2},
      {hypothesis(HypothesisKind::VonMisesFisher, ModelKind::S2), &s2},
      {hypothesis(HypothesisKind::BinghamMardia, ModelKind::S1), &s2},
      {hypothesis(HypothesisKind::Axis, ModelKind::S1, kPole), &s2},
      {hypothesis(HypothesisKind::Association, ModelKind::MS2), &ms2},
      {hypothesis(HypothesisKind::Axis, ModelKind::MS2, kPole), &ms2},
  };
  for (const auto& [h, data] : cases) {
    const TestResult r = lr_test(h, *data);
    CAPTURE(to_string(h.kind));
    CHECK(r.L0 <= r.L1 + 1e-6);
    CHECK(r.W_n >= 0.0);
    CHECK(r.p_value == doctest::Approx(chi_square_sf(r.W_n, r.df)).epsilon(1e-12));
  }
  // Strong association in the data is detected.
  CHECK(lr_test(hypothesis(HypothesisKind::Association, ModelKind::MS2), ms2).p_value < 1e-3);
}

TEST_CASE("axis test is rotation consistent") {
  RngStream rng(103);
  const DirectionalSample d = sample_model(rng, table2_truth("b"), 50);
  const UnitVec star(Eigen::Vector3d(0.05, 0.02, 1.0));
  const Eigen::Matrix3d R = oracle::rotation(1.3, 0.6, -2.0);
  const TestResult a = lr_test(hypothesis(HypothesisKind::Axis, ModelKind::S2, star), d);
  const DirectionalSample rotated(3, 1, d.rows * R.transpose());
  const TestResult b =
      lr_test(hypothesis(HypothesisKind::Axis, ModelKind::S2, UnitVec(Eigen::Vector3d(R * star.coords()))), rotated);
  CHECK(std::abs(a.W_n - b.W_n) < 1e-4);
}

TEST_CASE("great-sphere fit on great-circle data") {
  const Eigen::Matrix3d R = oracle::rotation(0.2, 0.9, 0.4);
  const int n = 40;
  Eigen::MatrixXd X(n, 3);
  for (int i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * i / n;
    X.row(i) = (R * Eigen::Vector3d(std::cos(t), std::sin(t), 0.0)).transpose();
  }
  const FitResult f = restricted_fit(hypothesis(HypothesisKind::GreatSphere, ModelKind::S2), DirectionalSample(3, 1, X));
  const SphereEstimate e = sphere_estimate(f.params);
  CHECK(std::abs(e.nu[0]) <= 1e-12);
  const Eigen::Vector3d normal = R.col(2);
  CHECK(std::abs(std::abs(e.mu0.coords().dot(normal)) - 1.0) <= 1e-12);
  CHECK(std::min(geodesic_distance(e.mu0, UnitVec(normal)), geodesic_distance(e.mu0, -UnitVec(normal))) <= 1e-6);
}

TEST_CASE("Bingham-Mardia null on Bingham-Mardia data") {
  RngStream rng(107);
  const DirectionalSample d = sample_model(rng, table2_truth("d"), 50);
  const TestResult r = lr_test(hypothesis(HypothesisKind::BinghamMardia, ModelKind::S1), d);
  CHECK(r.L1 - r.L0 < 5.0);
  CHECK(r.df == 2);
}

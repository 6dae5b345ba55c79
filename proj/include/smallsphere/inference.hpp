#pragma once

// Likelihood-ratio tests. Each hypothesis restricts the parameter space of an
// alternative model; W_n = -2 (L0 - L1) is referred to a chi-square with the
// difference in dimensions as degrees of freedom.

#include <optional>
#include <string>

#include "smallsphere/densities.hpp"
#include "smallsphere/estimation.hpp"
#include "smallsphere/sample.hpp"

namespace smallsphere {

enum class HypothesisKind {
  Association,     ///< Lambda = 0 (MS2 only)
  Axis,            ///< mu0 equals a given axis
  GreatSphere,     ///< every nu is 0
  VonMisesFisher,  ///< every kappa0 is 0
  BinghamMardia,   ///< every kappa1 is 0
};

std::string to_string(HypothesisKind kind);
/// Parses "association", "axis", "great-sphere", "vmf", "bm".
HypothesisKind parse_hypothesis_kind(const std::string& name);

struct Hypothesis {
  HypothesisKind kind = HypothesisKind::Axis;
  ModelKind alternative = ModelKind::S2;
  std::optional<UnitVec> mu0_star;  ///< required for Axis
};

/// Throws InvalidArgument / UnsupportedModel for combinations outside the
/// supported table.
void validate(const Hypothesis& h, int p, int K);

int degrees_of_freedom(const Hypothesis& h, int p, int K);

struct TestResult {
  Hypothesis hypothesis;
  double W_n = 0.0;  ///< clamped at 0
  int df = 0;
  double p_value = 1.0;
  double L0 = 0.0;  ///< maximized log-likelihood under the null
  double L1 = 0.0;  ///< maximized log-likelihood under the alternative
  FitResult null_fit;
  FitResult alternative_fit;
  bool converged = false;  ///< false flags the result as unreliable
};

/// Maximum-likelihood fit under the null of h.
FitResult restricted_fit(const Hypothesis& h, const DirectionalSample& data, const FitOptions& opts = {});

/// Unrestricted fit under the alternative model of h.
FitResult alternative_fit(const Hypothesis& h, const DirectionalSample& data, const FitOptions& opts = {});

TestResult lr_test(const Hypothesis& h, const DirectionalSample& data, const FitOptions& opts = {});

}  // namespace smallsphere

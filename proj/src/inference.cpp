#include "smallsphere/inference.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "smallsphere/error.hpp"
#include "smallsphere/special_functions.hpp"

namespace smallsphere {

namespace {

bool first_kind(ModelKind kind) { return kind == ModelKind::S1 || kind == ModelKind::IMS1; }

bool second_kind(ModelKind kind) {
  return kind == ModelKind::S2 || kind == ModelKind::IMS2 || kind == ModelKind::MS2;
}

std::optional<UnitVec> axis_of(const ModelParams& params) {
  return std::visit(
      [](const auto& m) -> std::optional<UnitVec> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, VmfParams>) {
          return std::nullopt;
        } else if constexpr (std::is_same_v<T, BmParams>) {
          return m.mu;
        } else {
          return m.mu0;
        }
      },
      params);
}

// Likelihood ratios are sensitive to small errors in the constants, so both
// fits use exact ones where the estimator would otherwise approximate.
FitOptions exact_constants(FitOptions opts, ModelKind kind) {
  if (kind == ModelKind::MS2) opts.exact_mvm = true;
  if (first_kind(kind)) opts.exact_s1_const = true;
  return opts;
}

// Independent vMF fits per marginal, packaged as first-kind marginals with
// kappa0 = 0. The likelihood is computed with exact vMF constants.
FitResult vmf_product_fit(const DirectionalSample& data) {
  std::vector<MarginalParams> marginals;
  FitResult out;
  out.neg_log_lik = 0.0;
  for (int k = 0; k < data.K; ++k) {
    const Eigen::MatrixXd X = data.marginal(k);
    const VmfFit v = fit_vmf_mle(X);
    const double resultant = X.colwise().sum().norm();
    out.neg_log_lik += X.rows() * log_vmf_integral(data.p, v.kappa) - v.kappa * resultant;
    out.saturated = out.saturated || v.saturated;
    marginals.push_back(MarginalParams{v.mu, 0.0, v.kappa});
  }
  // The axis is not identified under this null; the first mode stands in.
  out.params = IMS1Params{marginals.front().mu1, marginals};
  out.trace.push_back(out.neg_log_lik);
  out.n_iters = 1;
  out.converged = true;
  return out;
}

}  // namespace

std::string to_string(HypothesisKind kind) {
  switch (kind) {
    case HypothesisKind::Association: return "association";
    case HypothesisKind::Axis: return "axis";
    case HypothesisKind::GreatSphere: return "great-sphere";
    case HypothesisKind::VonMisesFisher: return "vmf";
    case HypothesisKind::BinghamMardia: return "bm";
  }
  return "unknown";
}

HypothesisKind parse_hypothesis_kind(const std::string& name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "association") return HypothesisKind::Association;
  if (lower == "axis") return HypothesisKind::Axis;
  if (lower == "great-sphere" || lower == "greatsphere" || lower == "great_sphere") return HypothesisKind::GreatSphere;
  if (lower == "vmf" || lower == "von-mises-fisher") return HypothesisKind::VonMisesFisher;
  if (lower == "bm" || lower == "bingham-mardia") return HypothesisKind::BinghamMardia;
  throw InvalidArgument("unknown hypothesis '" + name + "'");
}

void validate(const Hypothesis& h, int p, int K) {
  const ModelKind alt = h.alternative;
  if (!first_kind(alt) && !second_kind(alt))
    throw UnsupportedModel("test: the alternative must be s1, s2, ims1, ims2 or ms2");
  if ((alt == ModelKind::S1 || alt == ModelKind::S2) && K != 1)
    throw InvalidArgument("test: " + to_string(alt) + " alternative needs K = 1");
  if (alt == ModelKind::MS2 && p != 3) throw UnsupportedModel("test: ms2 alternative needs p = 3");
  switch (h.kind) {
    case HypothesisKind::Association:
      if (alt != ModelKind::MS2) throw UnsupportedModel("test: association is only defined under ms2");
      if (K < 2) throw InvalidArgument("test: association needs K >= 2");
      break;
    case HypothesisKind::Axis:
      if (!h.mu0_star) throw InvalidArgument("test: axis hypothesis needs mu0_star");
      if (h.mu0_star->size() != p) throw InvalidArgument("test: mu0_star has the wrong dimension");
      break;
    case HypothesisKind::GreatSphere:
    case HypothesisKind::VonMisesFisher:
      break;
    case HypothesisKind::BinghamMardia:
      if (alt == ModelKind::MS2) throw UnsupportedModel("test: bm hypothesis is not supported under ms2");
      break;
  }
}

int degrees_of_freedom(const Hypothesis& h, int p, int K) {
  validate(h, p, K);
  switch (h.kind) {
    case HypothesisKind::Association: return K * (K - 1) / 2;
    case HypothesisKind::Axis: return p - 1;
    case HypothesisKind::GreatSphere: return K;
    case HypothesisKind::VonMisesFisher:
      if (h.alternative == ModelKind::S1) return p;
      if (h.alternative == ModelKind::IMS1) return p - 1 + K;
      return 2 * K;
    case HypothesisKind::BinghamMardia: return (p - 1) * K;
  }
  throw InvalidArgument("test: unknown hypothesis");
}

FitResult alternative_fit(const Hypothesis& h, const DirectionalSample& data, const FitOptions& opts) {
  validate(h, data.p, data.K);
  return fit_model(h.alternative, data, exact_constants(opts, h.alternative));
}

FitResult restricted_fit(const Hypothesis& h, const DirectionalSample& data, const FitOptions& opts) {
  validate(h, data.p, data.K);
  FitOptions o = exact_constants(opts, h.alternative);
  switch (h.kind) {
    case HypothesisKind::Association:
      return fit_ims2(data, opts);
    case HypothesisKind::Axis:
      o.fixed_mu0 = h.mu0_star;
      return fit_model(h.alternative, data, o);
    case HypothesisKind::GreatSphere:
      o.great_sphere = true;
      return fit_model(h.alternative, data, o);
    case HypothesisKind::VonMisesFisher:
      if (h.alternative == ModelKind::S1) return fit_vmf(data);
      if (h.alternative == ModelKind::IMS1) return vmf_product_fit(data);
      o.flat_vertical = true;
      return fit_model(h.alternative, data, o);
    case HypothesisKind::BinghamMardia:
      return fit_bm(data, opts);
  }
  throw InvalidArgument("test: unknown hypothesis");
}

TestResult lr_test(const Hypothesis& h, const DirectionalSample& data, const FitOptions& opts) {
  validate(h, data.p, data.K);
  TestResult out;
  out.hypothesis = h;
  out.df = degrees_of_freedom(h, data.p, data.K);
  out.null_fit = restricted_fit(h, data, opts);
  out.alternative_fit = alternative_fit(h, data, opts);

  // The alternative contains the null. When the null fit has the
  // alternative's form it is itself a candidate; for association the exact
  // alternative is also fitted at the null's axis.
  const bool same_form = h.kind == HypothesisKind::Axis || h.kind == HypothesisKind::GreatSphere ||
                         (h.kind == HypothesisKind::VonMisesFisher && second_kind(h.alternative));
  if (same_form && out.null_fit.neg_log_lik < out.alternative_fit.neg_log_lik) {
    const bool converged = out.alternative_fit.converged;
    out.alternative_fit = out.null_fit;
    out.alternative_fit.converged = converged;
  }
  if (h.kind == HypothesisKind::Association) {
    FitOptions o = exact_constants(opts, h.alternative);
    o.fixed_mu0 = axis_of(out.null_fit.params);
    FitResult at_null_axis = fit_ms2(data, o);
    if (at_null_axis.neg_log_lik < out.alternative_fit.neg_log_lik) {
      at_null_axis.converged = out.alternative_fit.converged;
      out.alternative_fit = std::move(at_null_axis);
    }
  }

  out.L0 = -out.null_fit.neg_log_lik;
  out.L1 = -out.alternative_fit.neg_log_lik;
  out.W_n = std::max(0.0, -2.0 * (out.L0 - out.L1));
  out.p_value = chi_square_sf(out.W_n, out.df);
  out.converged = out.null_fit.converged && out.alternative_fit.converged && std::isfinite(out.W_n);
  return out;
}

}  // namespace smallsphere

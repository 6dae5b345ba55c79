#pragma once

// Parameter types, log-densities and normalizing constants of the
// small-sphere families on (S^{p-1})^K.
//
// Every density is taken with respect to surface (Hausdorff) measure on each
// sphere factor. In (s, y) coordinates relative to an axis mu0, surface
// measure on S^{p-1} is (1 - s^2)^{(p-3)/2} ds dA(y), so the constants below
// carry that Jacobian for p > 3.

#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "smallsphere/sphere.hpp"

namespace smallsphere {

struct VmfParams {
  UnitVec mu;
  double kappa = 0.0;
};

/// Bingham-Mardia: ridge of constant density along C(mu, nu).
struct BmParams {
  UnitVec mu;
  double kappa = 1.0;
  double nu = 0.0;
};

/// Small-sphere distribution of the first kind: BM ridge plus a vMF mode
/// term kappa1 * mu1'x on the ambient sphere.
struct S1Params {
  UnitVec mu0;
  UnitVec mu1;
  double kappa0 = 1.0;
  double kappa1 = 0.0;
  double nu() const { return mu0.coords().dot(mu1.coords()); }
};

/// Small-sphere distribution of the second kind: the mode term acts on the
/// horizontal direction y only, making s and y independent.
struct S2Params {
  UnitVec mu0;
  UnitVec mu1;
  double kappa0 = 1.0;
  double kappa1 = 0.0;
  double nu() const { return mu0.coords().dot(mu1.coords()); }
};

/// Per-marginal parameters of a multivariate model with shared axis.
struct MarginalParams {
  UnitVec mu1;
  double kappa0 = 1.0;
  double kappa1 = 0.0;
};

/// Independent products; IMS1Params uses S1 marginals, IMS2Params S2 ones.
struct IMS1Params {
  UnitVec mu0;
  std::vector<MarginalParams> marginals;
};

struct IMS2Params {
  UnitVec mu0;
  std::vector<MarginalParams> marginals;
};

/// Multivariate S2 on (S^2)^K with horizontal angles following the sine
/// multivariate von Mises model. lambda is K x K, symmetric, zero diagonal.
struct MS2Params {
  UnitVec mu0;
  std::vector<MarginalParams> marginals;
  Eigen::MatrixXd lambda;
};

using ModelParams = std::variant<VmfParams, BmParams, S1Params, S2Params, IMS1Params, IMS2Params, MS2Params>;

enum class ModelKind { VMF, BM, S1, S2, IMS1, IMS2, MS2 };

ModelKind kind_of(const ModelParams& params);
std::string to_string(ModelKind kind);
/// Parses "vmf", "bm", "s1", "s2", "ims1", "ims2", "ms2" (case-insensitive).
ModelKind parse_model_kind(const std::string& name);

/// Dimension p of each sphere factor and number of factors K.
int dimension(const ModelParams& params);
int num_marginals(const ModelParams& params);

/// Throws InvalidArgument / UnsupportedModel when invariants fail.
void validate(const ModelParams& params);

/// When set, MS2 constants refuse K beyond this bound.
inline constexpr int kMaxNormalizedMs2Marginals = 3;

/// How first-kind constants are computed: the saddle-point approximation,
/// or adaptive quadrature over the vertical coordinate.
enum class S1Constant { Saddlepoint, Quadrature };

/// Log normalizing constant with respect to surface measure.
double log_norm_const(const ModelParams& params, S1Constant s1 = S1Constant::Saddlepoint);

/// Unnormalized log-kernel of one observation (a row of K * p values,
/// marginal-major).
double log_kernel(const ModelParams& params, const Eigen::Ref<const Eigen::VectorXd>& x);

/// log_kernel(x) - log_norm_const.
double log_density(const ModelParams& params, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Validated parameters with the frame, horizontal modes and normalizing
/// constant precomputed, for repeated evaluation over a sample.
class Density {
 public:
  /// normalized = false skips the constant (log_norm_const() then returns 0),
  /// which permits MS2 with K > 3.
  explicit Density(ModelParams params, bool normalized = true, S1Constant s1 = S1Constant::Saddlepoint);

  const ModelParams& params() const { return params_; }
  int dim() const { return p_; }
  int num_marginals() const { return K_; }
  double log_norm_const() const { return log_const_; }
  double log_kernel(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const { return log_kernel(x) - log_const_; }

 private:
  struct Marginal {
    Eigen::VectorXd mu1;   // ambient mode direction
    Eigen::VectorXd mode;  // horizontal mode in axis-frame coordinates
    double kappa0 = 0.0;
    double kappa1 = 0.0;
    double nu = 0.0;
  };

  ModelParams params_;
  ModelKind kind_;
  int p_ = 0;
  int K_ = 0;
  double log_const_ = 0.0;
  Frame axis_;
  std::vector<Marginal> marginals_;
  Eigen::MatrixXd lambda_;
};

// Building blocks exposed for estimation and tests.

/// log of the integral of exp{-kappa0 (s - nu)^2} (1 - s^2)^{(p-3)/2} over
/// [-1, 1]; closed form for p = 3, adaptive quadrature otherwise.
double log_vertical_const(int p, double kappa0, double nu);

/// log of b(kappa0, kappa1, nu), the S2 constant (also the BM constant when
/// kappa1 = 0).
double log_s2_const(int p, double kappa0, double kappa1, double nu);

/// log of a(kappa0, kappa1, nu) via the saddle-point approximation (h = 1).
double log_s1_const(int p, double kappa0, double kappa1, double nu);

/// log a(kappa0, kappa1, nu) by adaptive quadrature over the vertical
/// coordinate, the horizontal part integrating to a vMF constant.
double log_s1_const_exact(int p, double kappa0, double kappa1, double nu);

/// log T3(kappa1, Lambda): integral of
/// exp{kappa1'cos(psi) + sin(psi)'Lambda sin(psi)/2} over [-pi, pi)^K.
/// Uses the Bessel product when Lambda = 0. Otherwise the last angle is
/// integrated in closed form and the others by 129-node Gauss-Legendre,
/// K <= 3.
double log_mvm_const(const Eigen::VectorXd& kappa1, const Eigen::MatrixXd& lambda);

/// Exponent of the unnormalized sine-model kernel at angles psi = phi - zeta.
double mvm_log_kernel(const Eigen::VectorXd& kappa1, const Eigen::MatrixXd& lambda, const Eigen::VectorXd& psi);

/// Fisher-Bingham form exp{gamma'x - x'Ax} of an S1 density.
struct FisherBingham {
  Eigen::VectorXd gamma;
  Eigen::MatrixXd A;
  /// log alpha(gamma, A) = log a(kappa0, kappa1, nu) + kappa0 nu^2.
  double log_const = 0.0;
};

FisherBingham to_fisher_bingham(const S1Params& params);

/// Large-concentration Gaussian view of the MS2 horizontal angles: precision
/// diag(kappa1) with off-diagonals -lambda, and the implied correlations.
struct PrecisionApprox {
  Eigen::MatrixXd precision;
  Eigen::MatrixXd correlation;
  /// False when the precision is not positive definite; correlation is then
  /// computed from a pseudo-inverse and should not be trusted.
  bool positive_definite = true;
};

PrecisionApprox ms2_precision_approx(const MS2Params& params);

/// General dependent second-kind model (density evaluation only): the
/// horizontal quadratic uses a (p-1)K x (p-1)K symmetric block matrix B with
/// zero diagonal blocks.
struct GMS2Params {
  UnitVec mu0;
  std::vector<MarginalParams> marginals;
  Eigen::MatrixXd B;
};

/// Unnormalized log-kernel: sum_k [-kappa0_k (s_k - nu_k)^2 + kappa1_k mu1~_k'y_k]
/// + vec(y)' B vec(y), with y_k expressed in the axis frame of mu0.
double gms2_log_kernel(const GMS2Params& params, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Block matrix reproducing an MS2 kernel inside gms2_log_kernel:
/// B_kl = (lambda_kl / 2) mu2~_k mu2~_l' with mu2~ the quarter-turn of mu1~.
GMS2Params ms2_as_gms2(const MS2Params& params);

/// Horizontal mode mu1~ of a marginal in the axis frame (unit vector of
/// dimension p - 1).
Eigen::VectorXd horizontal_mode(const Frame& axis, const UnitVec& mu1);

}  // namespace smallsphere

#include "smallsphere/sphere.hpp"

#include <Eigen/QR>

namespace smallsphere {

namespace {

Eigen::MatrixXd complete_basis(const Eigen::MatrixXd& leading) {
  const Eigen::Index p = leading.rows();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(leading);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
  q.leftCols(leading.cols()) = leading;
  return q;
}

}  // namespace

Frame axis_frame(const UnitVec& mu0) {
  if (mu0.size() < 2) throw InvalidArgument("axis_frame: dimension must be at least 2");
  return Frame{complete_basis(mu0.coords())};
}

Frame mode_frame(const UnitVec& mu0, const UnitVec& mu1) {
  if (mu0.size() != mu1.size()) throw InvalidArgument("mode_frame: dimension mismatch");
  const Eigen::VectorXd horizontal = project_complement(mu0.coords(), mu1.coords());
  const double norm = horizontal.norm();
  if (norm < 1e-12) throw DegeneracyError("mode_frame: mu1 is parallel to mu0");
  Eigen::MatrixXd leading(mu0.size(), 2);
  leading.col(0) = mu0.coords();
  leading.col(1) = horizontal / norm;
  return Frame{complete_basis(leading)};
}

Canonical decompose(const Frame& frame, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (frame.dim() != x.size()) throw InvalidArgument("decompose: dimension mismatch");
  const Eigen::VectorXd coords = frame.columns.transpose() * x;
  const Eigen::VectorXd rest = coords.tail(coords.size() - 1);
  const double rest_sq = rest.squaredNorm();
  if (rest_sq < 2e-12) throw DegeneracyError("decompose: direction coincides with the axis (pole)");
  return Canonical{std::clamp(coords[0], -1.0, 1.0), UnitVec(rest)};
}

Canonical decompose(const UnitVec& mu0, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return decompose(axis_frame(mu0), x);
}

UnitVec recompose(const Frame& frame, double s, const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (y.size() != frame.dim() - 1) throw InvalidArgument("recompose: y must have dimension p - 1");
  if (!(std::abs(s) <= 1.0 + 1e-12)) throw InvalidArgument("recompose: |s| must not exceed 1");
  s = std::clamp(s, -1.0, 1.0);
  const double ny = y.norm();
  if (!(ny > 0.0)) throw InvalidArgument("recompose: y must be non-zero");
  Eigen::VectorXd coords(frame.dim());
  coords[0] = s;
  coords.tail(y.size()) = std::sqrt(std::max(0.0, 1.0 - s * s)) / ny * y;
  return UnitVec(frame.columns * coords);
}

UnitVec exp_map(const UnitVec& base, const Eigen::Ref<const Eigen::VectorXd>& tangent) {
  if (tangent.size() != base.size()) throw InvalidArgument("exp_map: dimension mismatch");
  const Eigen::VectorXd t = project_complement(base.coords(), tangent);
  const double theta = t.norm();
  if (theta == 0.0) return base;
  return UnitVec(std::cos(theta) * base.coords() + (std::sin(theta) / theta) * t);
}

void validate(const SmallSphere& sphere) {
  if (!(sphere.nu > -1.0 && sphere.nu < 1.0)) throw InvalidArgument("SmallSphere: nu must lie in (-1, 1)");
}

namespace {

// +1 when the first nonzero coordinate of the axis is positive, else -1.
double canonical_sign(const UnitVec& axis) {
  for (Eigen::Index i = 0; i < axis.size(); ++i) {
    if (std::abs(axis[i]) > 1e-12) return axis[i] < 0.0 ? -1.0 : 1.0;
  }
  return 1.0;
}

}  // namespace

SmallSphere canonicalized(const SmallSphere& sphere) {
  if (canonical_sign(sphere.mu0) < 0.0) return SmallSphere{-sphere.mu0, -sphere.nu};
  return sphere;
}

double angular_product_error(const SmallSphere& truth, const SmallSphere& estimate) {
  return angular_product_error(truth.mu0, {truth.nu}, estimate.mu0, {estimate.nu});
}

double angular_product_error(const UnitVec& mu0, const std::vector<double>& nu, const UnitVec& mu0_hat,
                             const std::vector<double>& nu_hat) {
  if (mu0.size() != mu0_hat.size()) throw InvalidArgument("angular_product_error: dimension mismatch");
  if (nu.size() != nu_hat.size() || nu.empty()) throw InvalidArgument("angular_product_error: nu size mismatch");
  // Canonicalize both sides, then take the estimate's representation that
  // faces the truth.
  const double truth_sign = canonical_sign(mu0);
  const UnitVec truth_axis = truth_sign > 0 ? mu0 : -mu0;
  double est_sign = canonical_sign(mu0_hat);
  UnitVec est_axis = est_sign > 0 ? mu0_hat : -mu0_hat;
  if (truth_axis.coords().dot(est_axis.coords()) < 0.0) {
    est_sign = -est_sign;
    est_axis = -est_axis;
  }

  const double angle = degrees(geodesic_distance(truth_axis, est_axis));
  double sum_sq = angle * angle;
  for (std::size_t k = 0; k < nu.size(); ++k) {
    const double nu_true = truth_sign * nu[k];
    const double nu_est = est_sign * nu_hat[k];
    const double d = degrees(std::acos(std::clamp(nu_est, -1.0, 1.0)) - std::acos(std::clamp(nu_true, -1.0, 1.0)));
    sum_sq += d * d;
  }
  return std::sqrt(sum_sq);
}

}  // namespace smallsphere

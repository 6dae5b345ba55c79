#pragma once

// Geometry of unit spheres: unit vectors, distances, the (s, y) split of a
// direction relative to an axis, orthonormal frames and the small-circle
// error metric.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "smallsphere/error.hpp"

namespace smallsphere {

/// A point on the unit sphere S^{p-1}. Construction normalizes its input.
template <typename Scalar>
class UnitVector {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  UnitVector() = default;

  template <typename Derived>
  explicit UnitVector(const Eigen::MatrixBase<Derived>& v) : coords_(v) {
    const Scalar norm = coords_.norm();
    if (!(norm > Scalar(0)) || !std::isfinite(static_cast<double>(norm))) {
      throw InvalidArgument("UnitVector: input must be finite and non-zero");
    }
    coords_ /= norm;
  }

  UnitVector(std::initializer_list<Scalar> values)
      : UnitVector(Eigen::Map<const Vector>(values.begin(), static_cast<Eigen::Index>(values.size()))) {}

  const Vector& coords() const { return coords_; }
  operator const Vector&() const { return coords_; }
  Eigen::Index size() const { return coords_.size(); }
  Scalar operator[](Eigen::Index i) const { return coords_[i]; }

  UnitVector operator-() const {
    UnitVector out;
    out.coords_ = -coords_;
    return out;
  }

 private:
  Vector coords_;
};

using UnitVec = UnitVector<double>;

/// Geodesic distance arccos(u'v) in [0, pi].
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar geodesic_distance(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  using Scalar = typename DerivedA::Scalar;
  if (u.size() != v.size()) throw InvalidArgument("geodesic_distance: dimension mismatch");
  // atan2 form keeps full precision near 0 and pi.
  const Scalar cross = (u - (u.dot(v)) * v).norm();
  return std::atan2(cross, std::clamp(u.dot(v), Scalar(-1), Scalar(1)));
}

template <typename Scalar>
Scalar geodesic_distance(const UnitVector<Scalar>& u, const UnitVector<Scalar>& v) {
  return geodesic_distance(u.coords(), v.coords());
}

/// (I - mu0 mu0') x.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedB::Scalar, Eigen::Dynamic, 1> project_complement(const Eigen::MatrixBase<DerivedA>& mu0,
                                                                                const Eigen::MatrixBase<DerivedB>& x) {
  if (mu0.size() != x.size()) throw InvalidArgument("project_complement: dimension mismatch");
  return x - mu0.dot(x) * mu0;
}

/// Orthogonal p x p matrix whose first column is the axis mu0; when built
/// from a mode, the second column is the normalized projection of mu1 onto
/// the orthogonal complement of mu0.
struct Frame {
  Eigen::MatrixXd columns;

  Eigen::Index dim() const { return columns.rows(); }
  Eigen::VectorXd axis() const { return columns.col(0); }
};

/// Deterministic frame built from the axis alone.
Frame axis_frame(const UnitVec& mu0);

/// Frame with column 1 = mu0, column 2 = P_{mu0} mu1 / |P_{mu0} mu1|.
/// Throws DegeneracyError when mu1 = +-mu0.
Frame mode_frame(const UnitVec& mu0, const UnitVec& mu1);

/// (s, y) coordinates of a direction: s = mu0'x, y on S^{p-2}.
struct Canonical {
  double s = 0.0;
  UnitVec y;
};

/// Splits x into s = mu0'x and the unit vector y of the remaining frame
/// coordinates. Throws DegeneracyError at x = +-mu0 where y is undefined.
Canonical decompose(const Frame& frame, const Eigen::Ref<const Eigen::VectorXd>& x);
Canonical decompose(const UnitVec& mu0, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Inverse of decompose: x = E (s, sqrt(1 - s^2) y).
UnitVec recompose(const Frame& frame, double s, const Eigen::Ref<const Eigen::VectorXd>& y);

/// Rodrigues-style exponential map at base along a tangent vector.
UnitVec exp_map(const UnitVec& base, const Eigen::Ref<const Eigen::VectorXd>& tangent);

/// A (p-2)-subsphere C(mu0, nu) = {x : mu0'x = nu}.
struct SmallSphere {
  UnitVec mu0;
  double nu = 0.0;
};

void validate(const SmallSphere& sphere);

/// Representation of the same subsphere with the first nonzero coordinate of
/// the axis positive; (mu0, nu) and (-mu0, -nu) describe one set.
SmallSphere canonicalized(const SmallSphere& sphere);

/// Angular product error in degrees between a true and an estimated small
/// sphere: sqrt(angle(mu0_hat, mu0)^2 + (deg(arccos nu_hat - arccos nu))^2).
/// Both inputs are canonicalized; the estimate is then taken in whichever of
/// its two equivalent representations lies on the truth's side.
double angular_product_error(const SmallSphere& truth, const SmallSphere& estimate);

/// Multivariate form for concentric subspheres sharing one axis:
/// sqrt(angle^2 + sum_k deg(arccos nu_hat_k - arccos nu_k)^2).
double angular_product_error(const UnitVec& mu0, const std::vector<double>& nu, const UnitVec& mu0_hat,
                             const std::vector<double>& nu_hat);

inline double degrees(double radians) { return radians * 180.0 / std::numbers::pi; }
inline double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

}  // namespace smallsphere

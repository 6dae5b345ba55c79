#pragma once

#include <Eigen/Core>

#include "smallsphere/error.hpp"

namespace smallsphere {

/// n observations on (S^{p-1})^K stored as an n x (K p) matrix; row i holds
/// the K unit vectors of observation i, marginal-major.
struct DirectionalSample {
  int p = 3;
  int K = 1;
  Eigen::MatrixXd rows;

  DirectionalSample() = default;
  DirectionalSample(int dim, int marginals, Eigen::MatrixXd data) : p(dim), K(marginals), rows(std::move(data)) {
    if (rows.cols() != static_cast<Eigen::Index>(p) * K)
      throw InvalidArgument("DirectionalSample: expected K * p columns");
  }

  Eigen::Index n() const { return rows.rows(); }

  /// n x p block of marginal k.
  auto marginal(int k) const { return rows.middleCols(static_cast<Eigen::Index>(k) * p, p); }
  auto marginal(int k) { return rows.middleCols(static_cast<Eigen::Index>(k) * p, p); }
};

}  // namespace smallsphere

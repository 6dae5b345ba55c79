#pragma once

// Two-dimensional chi-square goodness of fit for samples on S^2, in
// cylindrical coordinates (s, phi) about an axis. Cells are built to be
// roughly equiprobable under the reference kernel: twelve height bands by the
// height marginal, then twelve azimuth sectors inside each band.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "smallsphere/special_functions.hpp"

namespace gof {

struct Outcome {
  double statistic = 0.0;
  int df = 0;
  double p_value = 0.0;
};

/// `log_kernel(s, phi)` need not be normalized. phi is measured from `ref`,
/// a unit vector orthogonal to `axis`, towards axis x ref.
inline Outcome chi_square_2d(const Eigen::MatrixXd& sample, const Eigen::Vector3d& axis, const Eigen::Vector3d& ref,
                             const std::function<double(double, double)>& log_kernel, int bins = 12,
                             int s_nodes = 4000, int phi_nodes = 720) {
  const double pi = std::numbers::pi;
  const double ds = 2.0 / s_nodes;
  const double dphi = 2.0 * pi / phi_nodes;
  Eigen::MatrixXd logw(s_nodes, phi_nodes);
  for (int i = 0; i < s_nodes; ++i) {
    const double s = -1.0 + (i + 0.5) * ds;
    for (int j = 0; j < phi_nodes; ++j) logw(i, j) = log_kernel(s, -pi + (j + 0.5) * dphi);
  }
  const Eigen::MatrixXd w = (logw.array() - logw.maxCoeff()).exp().matrix() / (logw.array() - logw.maxCoeff()).exp().sum();

  // Height bands on node boundaries.
  const Eigen::VectorXd row_mass = w.rowwise().sum();
  std::vector<int> s_edge{0};
  double acc = 0.0;
  for (int i = 0; i < s_nodes && static_cast<int>(s_edge.size()) < bins; ++i) {
    acc += row_mass[i];
    if (acc >= static_cast<double>(s_edge.size()) / bins) s_edge.push_back(i + 1);
  }
  while (static_cast<int>(s_edge.size()) <= bins) s_edge.push_back(s_nodes);
  s_edge.back() = s_nodes;

  std::vector<std::vector<int>> phi_edge(bins);
  std::vector<std::vector<double>> expected(bins, std::vector<double>(bins, 0.0));
  for (int b = 0; b < bins; ++b) {
    const Eigen::VectorXd col = w.middleRows(s_edge[b], s_edge[b + 1] - s_edge[b]).colwise().sum().transpose();
    const double band = col.sum();
    std::vector<int>& edges = phi_edge[b];
    edges.push_back(0);
    double part = 0.0;
    for (int j = 0; j < phi_nodes && static_cast<int>(edges.size()) < bins; ++j) {
      part += col[j];
      if (part >= band * static_cast<double>(edges.size()) / bins) edges.push_back(j + 1);
    }
    while (static_cast<int>(edges.size()) <= bins) edges.push_back(phi_nodes);
    edges.back() = phi_nodes;
    for (int c = 0; c < bins; ++c) expected[b][c] = col.segment(edges[c], edges[c + 1] - edges[c]).sum();
  }

  const Eigen::Vector3d e2 = axis.cross(ref);
  std::vector<std::vector<double>> observed(bins, std::vector<double>(bins, 0.0));
  for (Eigen::Index r = 0; r < sample.rows(); ++r) {
    const Eigen::Vector3d x = sample.row(r).transpose();
    const double s = std::clamp(axis.dot(x), -1.0, 1.0);
    const double phi = std::atan2(e2.dot(x), ref.dot(x));
    const int si = std::clamp(static_cast<int>((s + 1.0) / ds), 0, s_nodes - 1);
    const int pj = std::clamp(static_cast<int>((phi + pi) / dphi), 0, phi_nodes - 1);
    int b = 0;
    while (b + 1 < bins && si >= s_edge[b + 1]) ++b;
    int c = 0;
    while (c + 1 < bins && pj >= phi_edge[b][c + 1]) ++c;
    observed[b][c] += 1.0;
  }

  Outcome out;
  const double n = static_cast<double>(sample.rows());
  int cells = 0;
  for (int b = 0; b < bins; ++b) {
    for (int c = 0; c < bins; ++c) {
      const double e = n * expected[b][c];
      if (e <= 0.0) continue;
      out.statistic += (observed[b][c] - e) * (observed[b][c] - e) / e;
      ++cells;
    }
  }
  out.df = cells - 1;
  out.p_value = smallsphere::chi_square_sf(out.statistic, out.df);
  return out;
}

}  // namespace gof

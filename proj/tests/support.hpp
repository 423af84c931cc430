#pragma once

// Shared fixtures and independent reference computations for the tests.

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "panelctrl/panel.hpp"

namespace testsupport {

inline Eigen::MatrixXd normal_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                                     double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = nd(rng);
  return m;
}

inline Eigen::VectorXd normal_vector(Eigen::Index n, std::mt19937_64& rng, double sd = 1.0) {
  return normal_matrix(n, 1, rng, sd).col(0);
}

// Random blocks where the treated unit sits partly outside the donor hull.
inline panelctrl::PanelBlocks random_blocks(Eigen::Index n0, Eigen::Index t0, Eigen::Index n_post,
                                            std::mt19937_64& rng, bool center = true,
                                            double treated_shift = 1.0) {
  Eigen::MatrixXd x0 = normal_matrix(n0, t0, rng);
  Eigen::VectorXd x1 = normal_vector(t0, rng).array() + treated_shift;
  Eigen::MatrixXd y0 = normal_matrix(n0, n_post, rng);
  Eigen::VectorXd y1 = normal_vector(n_post, rng);
  return panelctrl::make_blocks(x1, x0, y1, y0, center);
}

inline double log_uniform(double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

// Dense normal-equation solve of (A'A + lambda I) x = b.
inline Eigen::VectorXd dense_ridge_solve(const Eigen::MatrixXd& a, double lambda,
                                         const Eigen::VectorXd& rhs) {
  Eigen::MatrixXd m = a.transpose() * a;
  m.diagonal().array() += lambda;
  return m.fullPivLu().solve(rhs);
}

// SCM objective with identity importance and squared-L2 penalty.
inline double plain_objective(const panelctrl::PanelBlocks& b, const Eigen::VectorXd& g,
                              double zeta) {
  return (b.x1 - b.x0.transpose() * g).squaredNorm() + zeta * g.squaredNorm();
}

}  // namespace testsupport

#include <doctest.h>

#include <random>

#include "panelctrl/error.hpp"
#include "panelctrl/scm.hpp"
#include "support.hpp"

using namespace panelctrl;
using testsupport::normal_matrix;
using testsupport::normal_vector;

namespace {

PanelBlocks blocks_from(const Eigen::MatrixXd& x0, const Eigen::VectorXd& x1) {
  return make_blocks(x1, x0, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(x0.rows(), 1),
                     false);
}

// Minimum of the objective over a regular grid on the 3-simplex.
double grid_min_3(const PanelBlocks& b, double zeta, double step) {
  const int n = static_cast<int>(std::lround(1.0 / step));
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd g(3);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; i + j <= n; ++j) {
      g << i * step, j * step, (n - i - j) * step;
      best = std::min(best, testsupport::plain_objective(b, g, zeta));
    }
  return best;
}

}  // namespace

TEST_CASE("simplex projection") {
  Eigen::VectorXd v(3);
  v << 0.2, 0.3, 0.5;
  CHECK((project_to_simplex(v) - v).norm() < 1e-15);
  v << 2.0, 0.0, 0.0;
  Eigen::VectorXd p = project_to_simplex(v);
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] == 0.0);

  // Projection is the closest feasible point: compare against random feasible points.
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd z = normal_vector(5, rng, 2.0);
    Eigen::VectorXd pz = project_to_simplex(z);
    CHECK(pz.minCoeff() >= 0.0);
    CHECK(std::abs(pz.sum() - 1.0) < 1e-12);
    for (int k = 0; k < 20; ++k) {
      Eigen::VectorXd q = project_to_simplex(normal_vector(5, rng, 3.0));
      CHECK((z - pz).norm() <= (z - q).norm() + 1e-12);
    }
  }
}

TEST_CASE("symmetric midpoint") {
  Eigen::MatrixXd x0(2, 2);
  x0 << 0, 0, 2, 2;
  Eigen::VectorXd x1(2);
  x1 << 1, 1;
  const PanelBlocks b = blocks_from(x0, x1);
  ScmConfig cfg;
  cfg.zeta = 0.0;
  const DonorWeights w = solve_scm(b, cfg);
  CHECK(w.values[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(w.values[1] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(imbalance(b, w) < 1e-9);
}

TEST_CASE("exact vertex fit") {
  std::mt19937_64 rng(11);
  Eigen::MatrixXd x0 = normal_matrix(5, 4, rng);
  const Eigen::VectorXd x1 = x0.row(0).transpose();
  const PanelBlocks b = blocks_from(x0, x1);
  ScmConfig cfg;
  cfg.zeta = 1e-6;
  const DonorWeights w = solve_scm(b, cfg);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(5);
  e[0] = 1.0;
  CHECK((w.values - e).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("grid oracle on three donors") {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 10; ++rep) {
    const PanelBlocks b = blocks_from(normal_matrix(3, 2, rng), normal_vector(2, rng));
    ScmConfig cfg;
    cfg.zeta = 0.0;
    const ScmSolution s = solve_scm_detailed(b, cfg);
    const double solver = testsupport::plain_objective(b, s.weights.values, 0.0);
    const double grid = grid_min_3(b, 0.0, 1e-3);
    CHECK(solver <= grid + 1e-12);
    CHECK(grid - solver <= 1e-5);
  }
}

TEST_CASE("imbalance values") {
  Eigen::MatrixXd x0(2, 2);
  x0 << 0, 0, 2, 0;
  Eigen::VectorXd x1(2);
  x1 << 0, 1;
  const PanelBlocks b = blocks_from(x0, x1);
  DonorWeights w;
  w.values = Eigen::Vector2d(0.5, 0.5);
  CHECK(imbalance(b, w) == doctest::Approx(std::sqrt(2.0)));
  CHECK(imbalance(blocks_from(x0, Eigen::Vector2d(1, 0)), w) == 0.0);

  Eigen::VectorXd v(2);
  v << 4, 1;
  const Eigen::VectorXd gap = x1 - x0.transpose() * w.values;
  const double direct = std::sqrt(gap.dot(v.asDiagonal() * gap));
  CHECK(imbalance(b, w, v) == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("solver properties on random instances") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::Index n0 = 4 + rep % 12;
    const Eigen::Index t0 = 3 + rep % 8;
    const PanelBlocks b = testsupport::random_blocks(n0, t0, 1, rng);
    ScmConfig cfg;
    const ScmSolution s = solve_scm_detailed(b, cfg, nullptr, true);
    CHECK(s.kkt_residual <= 1e-8);
    CHECK(s.weights.values.minCoeff() >= 0.0);
    CHECK(std::abs(s.weights.values.sum() - 1.0) <= 1e-10);
    for (std::size_t k = 1; k < s.trace.size(); ++k) CHECK(s.trace[k] <= s.trace[k - 1] + 1e-12);

    // Uniqueness for zeta > 0: a vertex start reaches the same point.
    cfg.zeta = 1e-2;
    const ScmSolution a = solve_scm_detailed(b, cfg);
    Eigen::VectorXd start = Eigen::VectorXd::Zero(n0);
    start[n0 - 1] = 1.0;
    const ScmSolution c = solve_scm_detailed(b, cfg, &start);
    CHECK((a.weights.values - c.weights.values).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("hull membership gives exact fit") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::MatrixXd x0 = normal_matrix(6, 3, rng);
    Eigen::VectorXd mix = project_to_simplex(normal_vector(6, rng));
    const PanelBlocks b = blocks_from(x0, x0.transpose() * mix);
    ScmConfig cfg;
    cfg.zeta = 0.0;
    CHECK(imbalance(b, solve_scm(b, cfg)) <= 1e-8);
  }
}

TEST_CASE("entropy penalty stays interior") {
  std::mt19937_64 rng(8);
  const PanelBlocks b = testsupport::random_blocks(6, 4, 1, rng);
  ScmConfig cfg;
  cfg.penalty = Penalty::entropy;
  cfg.zeta = 0.5;
  const DonorWeights w = solve_scm(b, cfg);
  CHECK(w.values.minCoeff() > 0.0);
  CHECK(std::abs(w.values.sum() - 1.0) < 1e-10);
  CHECK(scm_kkt_residual(b, w.values, {}, 0.5, Penalty::entropy) <= 1e-8);
}

TEST_CASE("config validation") {
  ScmConfig cfg;
  cfg.zeta = -1.0;
  CHECK_THROWS_AS(cfg.validate(2), Error);
  cfg.zeta = 0.0;
  cfg.tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(2), Error);
  cfg.tol = 1e-10;
  cfg.importance = Eigen::Vector3d(1, 1, 1);
  CHECK_THROWS_AS(cfg.validate(2), Error);
}

TEST_CASE("non-convergence reports the residual") {
  std::mt19937_64 rng(1);
  const PanelBlocks b = testsupport::random_blocks(15, 6, 1, rng);
  ScmConfig cfg;
  cfg.max_iter = 1;
  cfg.tol = 1e-300;
  try {
    solve_scm(b, cfg);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual() > 0.0);
    CHECK(e.iterations() >= 1);
  }
}

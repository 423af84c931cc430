#pragma once

// Penalized synthetic control weights on the simplex:
//
//   min_g  (x1 - x0' g)' V (x1 - x0' g) + zeta * sum_i f(g_i)
//   s.t.   g >= 0, sum_i g_i = 1
//
// with V diagonal and f either g^2 (default) or g log g.

#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "panelctrl/panel.hpp"

namespace panelctrl {

enum class Penalty { squared_l2, entropy };

struct ScmConfig {
  Eigen::VectorXd importance;   // diagonal of V; empty means all ones
  std::optional<double> zeta;   // unset: 1e-8 * tr(x0' V x0) / N0
  Penalty penalty = Penalty::squared_l2;
  int max_iter = 50000;
  double tol = 1e-10;

  // Throws on a negative entry or a length mismatch; tol must be positive.
  void validate(Eigen::Index t0) const;
};

enum class Provenance { scm, ridge, augmented, covariate_adjusted };

std::string_view provenance_name(Provenance p) noexcept;

struct DonorWeights {
  Eigen::VectorXd values;
  Provenance provenance = Provenance::scm;
  bool sum_constrained = true;
  bool simplex = true;

  Eigen::Index size() const { return values.size(); }
  void validate() const;
};

struct ScmSolution {
  DonorWeights weights;
  double objective = 0.0;
  double kkt_residual = 0.0;
  double zeta = 0.0;
  int iterations = 0;
  std::vector<double> trace;  // objective after each accepted iterate
};

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

double default_zeta(const PanelBlocks& b, const Eigen::VectorXd& importance);

// Solves from `start` (uniform when null). Throws ConvergenceError when the
// KKT residual is still above cfg.tol after cfg.max_iter iterations.
ScmSolution solve_scm_detailed(const PanelBlocks& b, const ScmConfig& cfg,
                               const Eigen::VectorXd* start = nullptr,
                               bool record_trace = false);

DonorWeights solve_scm(const PanelBlocks& b, const ScmConfig& cfg);

// Value of the SCM objective at g for the given penalty.
double scm_objective(const PanelBlocks& b, const Eigen::VectorXd& g,
                     const Eigen::VectorXd& importance, double zeta, Penalty penalty);

// Gradient-mapping residual |g - P(g - grad/L)|_inf, in weight units.
double scm_kkt_residual(const PanelBlocks& b, const Eigen::VectorXd& g,
                        const Eigen::VectorXd& importance, double zeta, Penalty penalty);

// Weighted L2 norm of the pre-period gap x1 - x0' g.
double imbalance(const PanelBlocks& b, const DonorWeights& w,
                 const Eigen::VectorXd& importance = {});

// Pre-period gap vector x1 - x0' g.
Eigen::VectorXd pre_gap(const PanelBlocks& b, const Eigen::VectorXd& g);

}  // namespace panelctrl

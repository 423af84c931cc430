#pragma once

// Auxiliary covariates: joint balancing on stacked (X, Z) features and the
// two-step estimator that residualizes outcomes on Z before augmentation.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panelctrl/panel.hpp"
#include "panelctrl/ridge_augment.hpp"
#include "panelctrl/scm.hpp"

namespace panelctrl {

struct CovariatePanel {
  Eigen::VectorXd z1;         // K
  Eigen::MatrixXd z0;         // N0 x K, centered on control means
  Eigen::VectorXd centering;  // control means removed
  Eigen::VectorXd scale;      // multiplier applied after centering (ones if not standardized)
  std::vector<std::string> names;
  double theta_x = 1.0;
  double theta_z = 1.0;
  std::optional<double> lambda_z;  // unset: same as the outcome penalty

  Eigen::Index k() const { return z0.cols(); }
};

// Centers z on the control means. With `standardize`, every column is
// rescaled so its control standard deviation equals the pooled control
// standard deviation of the pre-period outcome columns of `b`.
CovariatePanel make_covariate_panel(const Eigen::VectorXd& z1_raw, const Eigen::MatrixXd& z0_raw,
                                    std::vector<std::string> names, const PanelBlocks& b,
                                    bool standardize = true);
CovariatePanel make_covariate_panel(const PanelData& p, const PanelBlocks& b,
                                    bool standardize = true);

// Blocks whose pre-period features are (X, z_scale * Z).
PanelBlocks stacked_blocks(const PanelBlocks& b, const CovariatePanel& cov, double z_scale = 1.0);

// Simplex weights for theta_x |x gap|_V^2 + theta_z |z gap|^2 + zeta f.
DonorWeights joint_solve(const PanelBlocks& b, const CovariatePanel& cov, const ScmConfig& cfg);

// Ridge ASCM on the stacked system with penalties lambda on X and
// cov.lambda_z (default lambda) on Z.
AugEstimate joint_augment(const DonorWeights& scm_w, const PanelBlocks& b,
                          const CovariatePanel& cov, double lambda_ridge);

// Stacked blocks scaled so one ridge penalty lambda_ridge reproduces the
// (lambda_x, lambda_z) pair.
PanelBlocks ridge_stacked_blocks(const PanelBlocks& b, const CovariatePanel& cov,
                                 double lambda_ridge);

struct ResidualizedPanel {
  Eigen::VectorXd x1_check;     // T0
  Eigen::MatrixXd x0_check;     // N0 x T0
  Eigen::MatrixXd projection;   // K x T0
  Eigen::MatrixXd y_projection; // K x (T - T0)
  PanelBlocks blocks;           // residualized pre and post outcomes
};

// Regresses control outcomes on Z and removes the fitted part from treated
// and control rows alike. Requires K < N0 and z0 of full column rank.
ResidualizedPanel residualize(const PanelBlocks& b, const CovariatePanel& cov);

// gamma + X0c A^{-1} (x1c - X0c' gamma) + Z0 (Z0'Z0)^{-1} (z1 - Z0' gamma),
// A = X0c'X0c + lambda I.
DonorWeights two_step_weights(const DonorWeights& scm_w_on_resid, const PanelBlocks& b,
                              const CovariatePanel& cov, double lambda_ridge);
DonorWeights two_step_weights(const DonorWeights& scm_w_on_resid, const ResidualizedPanel& r,
                              const CovariatePanel& cov, double lambda_ridge);

struct TwoStepResult {
  ResidualizedPanel residualized;
  DonorWeights scm_weights;  // fitted on residualized outcomes
  AugEstimate estimate;      // weights are the covariate-adjusted weights
};

TwoStepResult two_step_estimate(const PanelBlocks& b, const CovariatePanel& cov,
                                double lambda_ridge, const ScmConfig& cfg);

struct TwoStepBound {
  double imbalance = 0.0;  // |x1c - X0c' gamma_cov|
  double bound = 0.0;
  double d_min = 0.0;      // smallest singular value of X0c / sqrt(N0), 0 if rank deficient
};

TwoStepBound two_step_bound(const DonorWeights& scm_w_on_resid, const DonorWeights& cov_w,
                            const ResidualizedPanel& r, double lambda_ridge);

struct BalanceRow {
  std::string covariate;
  double raw_gap = 0.0;       // |z1 - mean z0| / sd
  double weighted_gap = 0.0;  // |z1 - z0' gamma| / sd
};

// Standardized absolute covariate differences on the raw covariate scale.
std::vector<BalanceRow> balance_table(const PanelData& p, const DonorWeights& w);
void write_balance_csv(std::ostream& os, const std::vector<BalanceRow>& rows);

}  // namespace panelctrl

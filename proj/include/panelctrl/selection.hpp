#pragma once

// Ridge penalty selection by cross-validation over pre-treatment periods,
// plus the panel-level entry points built on it.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "panelctrl/estimator.hpp"

namespace panelctrl {

struct CvResult {
  std::vector<double> lambda_grid;  // lambda_ridge, descending
  std::vector<double> cv_mse;       // mean squared held-out residual
  std::vector<double> cv_se;        // sd of squared residuals / sqrt(n)
  double lambda_min = 0.0;
  double lambda_1se = 0.0;
  CvMode mode = CvMode::leave_one;
  std::vector<Eigen::Index> used_periods;     // held-out pre-period indices
  std::vector<Eigen::Index> skipped_periods;  // too few remaining periods
  Eigen::MatrixXd residuals;                  // used period x lambda
};

// Twenty log-spaced values of lambda_ridge, descending, spanning
// N0 * [1e-3, 1e3] * d_1^2 with d_1 the top singular value of x0 / sqrt(N0).
std::vector<double> default_lambda_grid(const PanelBlocks& b, int n = 20);

CvResult loo_cv(const PanelBlocks& b, const std::optional<CovariatePanel>& cov,
                const EstimatorSpec& spec, std::vector<double> lambda_grid,
                CvMode mode = CvMode::leave_one, int threads = 1);

// Fills lambda_min and lambda_1se from a descending grid and its CV curve.
void choose_lambdas(CvResult& cv);

double select_lambda(const CvResult& cv, LambdaRule rule);

void write_cv_csv(std::ostream& os, const CvResult& cv);

struct EstimateResult {
  AugEstimate estimate;
  PreparedPanel prepared;
  std::optional<double> lambda;  // lambda_ridge used
  std::optional<CvResult> cv;
};

// Lambda for the spec on these blocks. Unset when the estimator has no ridge term.
std::pair<std::optional<double>, std::optional<CvResult>> resolve_lambda(
    const PanelBlocks& b, const std::optional<CovariatePanel>& cov, const EstimatorSpec& spec,
    int threads = 1);

EstimateResult estimate_panel(const PanelData& p, const EstimatorSpec& spec, int threads = 1);

struct PlaceboResult {
  std::string placebo_time;
  Eigen::Index placebo_t0 = 0;
  PanelData panel;  // truncated panel with the placebo pre-period
  EstimateResult result;
};

// Drops the true post-period and reruns with treatment at `placebo_time`.
PlaceboResult in_time_placebo(const PanelData& p, const std::string& placebo_time,
                              const EstimatorSpec& spec, int threads = 1);

}  // namespace panelctrl

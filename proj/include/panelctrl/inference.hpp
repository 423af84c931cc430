#pragma once

// Conformal inference for a single post period: full conformal p-values and
// test-inversion intervals, and jackknife+ prediction intervals.

#include <optional>
#include <string_view>
#include <vector>

#include "panelctrl/estimator.hpp"

namespace panelctrl {

enum class IntervalMethod { full_conformal, jackknife_plus };
enum class IntervalTarget { effect, counterfactual };

std::string_view interval_method_name(IntervalMethod m) noexcept;

struct PredictionInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  IntervalMethod method = IntervalMethod::full_conformal;
  IntervalTarget target = IntervalTarget::effect;
  Eigen::Index post_period = 0;
  double observed = 0.0;  // treated outcome in that period, for target conversion

  // Full conformal diagnostics.
  double grid_step = 0.0;
  std::size_t grid_points = 0;
  int widenings = 0;
  bool disconnected = false;
};

// Exact shift between effect and counterfactual: tau in C iff Y - tau in C_Y.
PredictionInterval convert_target(const PredictionInterval& pi, IntervalTarget target);

// Refit with Y_1T - tau0 appended as an extra pre-period and rank the
// adjusted residual among the pre-period residuals. `spec` must carry a
// fixed lambda when the estimator uses one.
double conformal_p(const PanelBlocks& b, const std::optional<CovariatePanel>& cov,
                   const EstimatorSpec& spec, double tau0, Eigen::Index post_period);

struct ConformalScan {
  std::vector<double> grid;
  std::vector<double> pvalues;
};

ConformalScan conformal_scan(const PanelBlocks& b, const std::optional<CovariatePanel>& cov,
                             const EstimatorSpec& spec, const std::vector<double>& grid,
                             Eigen::Index post_period, int threads = 1);

// Hull of {tau0 : p(tau0) >= alpha}. An empty grid uses 101 points over
// tau_hat +- 5 * RMS(pre residuals), doubled while an endpoint is accepted;
// an endpoint still accepted after ten doublings becomes infinite, which is
// always the case when alpha < 1 / (T0 + 1).
PredictionInterval conformal_interval(const PanelBlocks& b,
                                      const std::optional<CovariatePanel>& cov,
                                      const EstimatorSpec& spec, double alpha,
                                      Eigen::Index post_period,
                                      std::vector<double> grid = {}, int threads = 1);

// k-th smallest value, 1-based.
double order_statistic(std::vector<double> v, std::size_t k);

struct JackknifeDetail {
  std::vector<double> loo_prediction;  // Y_1T predicted without period t
  std::vector<double> loo_residual;    // |Y_1t - prediction of Y_1t without t|
  std::size_t k_lower = 0;
  std::size_t k_upper = 0;
};

// Interval for Y_1T(0) from leave-one-period-out refits.
PredictionInterval jackknife_plus(const PanelBlocks& b, const std::optional<CovariatePanel>& cov,
                                  const EstimatorSpec& spec, double alpha,
                                  Eigen::Index post_period, int threads = 1,
                                  JackknifeDetail* detail = nullptr);

// Interval bounds from leave-one-out predictions and residuals.
std::pair<double, double> jackknife_bounds(const std::vector<double>& prediction,
                                           const std::vector<double>& residual, double alpha,
                                           std::size_t* k_lower = nullptr,
                                           std::size_t* k_upper = nullptr);

}  // namespace panelctrl

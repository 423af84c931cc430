#pragma once

// Estimator bank used by every higher-level module. A FitPath holds everything that does not depend on the
// ridge penalty so a lambda grid can be evaluated cheaply.

#include <optional>
#include <string_view>
#include <vector>

#include "panelctrl/covariates.hpp"
#include "panelctrl/panel.hpp"
#include "panelctrl/ridge_augment.hpp"
#include "panelctrl/scm.hpp"

namespace panelctrl {

enum class EstimatorKind { scm, ridge, ascm_ridge, fixed_effects, demeaned_scm };
enum class CovariateMode { none, joint, residualize };
enum class LambdaRule { min, one_se };
enum class CvMode { leave_one, leave_future };

std::string_view estimator_name(EstimatorKind k) noexcept;
EstimatorKind parse_estimator(std::string_view s);
std::string_view lambda_rule_name(LambdaRule r) noexcept;
LambdaRule parse_lambda_rule(std::string_view s);
std::string_view covariate_mode_name(CovariateMode m) noexcept;
CovariateMode parse_covariate_mode(std::string_view s);

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::ascm_ridge;
  std::optional<double> lambda;      // fixed lambda_ridge; unset selects by CV
  LambdaRule rule = LambdaRule::min;
  std::vector<double> lambda_grid;   // empty: default grid
  CvMode cv_mode = CvMode::leave_one;
  ScmConfig scm;
  CovariateMode covariates = CovariateMode::none;
  bool standardize_covariates = true;

  bool uses_lambda() const {
    return kind == EstimatorKind::ridge || kind == EstimatorKind::ascm_ridge;
  }
};

class FitPath {
 public:
  // `b` must be centered. `cov` is required unless spec.covariates is none.
  FitPath(PanelBlocks b, std::optional<CovariatePanel> cov, const EstimatorSpec& spec);

  // Ignores lambda_ridge for estimators without a ridge component.
  AugEstimate estimate(double lambda_ridge) const;

  const PanelBlocks& blocks() const { return b_; }
  const std::optional<DonorWeights>& base_weights() const { return base_; }

 private:
  PanelBlocks b_;
  std::optional<CovariatePanel> cov_;
  EstimatorSpec spec_;
  std::optional<DonorWeights> base_;
  std::optional<ResidualizedPanel> resid_;
  std::optional<ControlSVD> svd_;  // control design, no-covariate path
};

// Centered blocks of a panel plus its covariate panel when the spec asks for one.
struct PreparedPanel {
  PanelBlocks blocks;
  std::optional<CovariatePanel> cov;
};

PreparedPanel prepare(const PanelData& p, const EstimatorSpec& spec);

// Rebuilds centered blocks from uncentered pieces.
PanelBlocks recentered(const Eigen::VectorXd& x1, const Eigen::MatrixXd& x0,
                       const Eigen::VectorXd& y1_post, const Eigen::MatrixXd& y0_post);

}  // namespace panelctrl

#include "panelctrl/estimator.hpp"

#include <cmath>
#include <limits>

#include "panelctrl/error.hpp"

namespace panelctrl {

std::string_view estimator_name(EstimatorKind k) noexcept {
  switch (k) {
    case EstimatorKind::scm: return "scm";
    case EstimatorKind::ridge: return "ridge";
    case EstimatorKind::ascm_ridge: return "ascm_ridge";
    case EstimatorKind::fixed_effects: return "fixed_effects";
    case EstimatorKind::demeaned_scm: return "demeaned_scm";
  }
  return "unknown";
}

EstimatorKind parse_estimator(std::string_view s) {
  for (auto k : {EstimatorKind::scm, EstimatorKind::ridge, EstimatorKind::ascm_ridge,
                 EstimatorKind::fixed_effects, EstimatorKind::demeaned_scm})
    if (estimator_name(k) == s) return k;
  throw Error(ErrorCode::invalid_argument, "unknown estimator '" + std::string(s) + "'");
}

std::string_view lambda_rule_name(LambdaRule r) noexcept {
  return r == LambdaRule::min ? "min" : "one-se";
}

LambdaRule parse_lambda_rule(std::string_view s) {
  if (s == "min") return LambdaRule::min;
  if (s == "one-se") return LambdaRule::one_se;
  throw Error(ErrorCode::invalid_argument, "unknown selection rule '" + std::string(s) + "'");
}

std::string_view covariate_mode_name(CovariateMode m) noexcept {
  switch (m) {
    case CovariateMode::none: return "none";
    case CovariateMode::joint: return "joint";
    case CovariateMode::residualize: return "residualize";
  }
  return "unknown";
}

CovariateMode parse_covariate_mode(std::string_view s) {
  for (auto m : {CovariateMode::none, CovariateMode::joint, CovariateMode::residualize})
    if (covariate_mode_name(m) == s) return m;
  throw Error(ErrorCode::invalid_argument, "unknown covariate mode '" + std::string(s) + "'");
}

namespace {

DonorWeights uniform_weights(Eigen::Index n0) {
  DonorWeights w;
  w.values = uniform_anchor(n0);
  w.simplex = true;
  return w;
}

}  // namespace

FitPath::FitPath(PanelBlocks b, std::optional<CovariatePanel> cov, const EstimatorSpec& spec)
    : b_(std::move(b)), cov_(std::move(cov)), spec_(spec) {
  if (!b_.centered)
    throw Error(ErrorCode::invalid_argument, "estimators expect centered blocks");
  const bool with_cov = spec_.covariates != CovariateMode::none && cov_ && cov_->k() > 0;
  if (spec_.covariates != CovariateMode::none && !cov_)
    throw Error(ErrorCode::invalid_argument, "covariate mode set but no covariates supplied");
  if (with_cov && (spec_.kind == EstimatorKind::fixed_effects ||
                   spec_.kind == EstimatorKind::demeaned_scm))
    throw Error(ErrorCode::invalid_argument,
                "covariates are supported for scm, ridge and ascm_ridge only");

  const auto kind = spec_.kind;
  if (!with_cov) {
    if (kind == EstimatorKind::scm || kind == EstimatorKind::ascm_ridge ||
        kind == EstimatorKind::demeaned_scm)
      base_ = solve_scm(b_, spec_.scm);
    if (spec_.uses_lambda()) svd_ = control_svd(b_);
    return;
  }
  if (spec_.covariates == CovariateMode::residualize) {
    resid_ = residualize(b_, *cov_);
    base_ = kind == EstimatorKind::ridge ? uniform_weights(b_.n_controls())
                                         : solve_scm(resid_->blocks, spec_.scm);
  } else {
    base_ = kind == EstimatorKind::ridge ? uniform_weights(b_.n_controls())
                                         : joint_solve(b_, *cov_, spec_.scm);
  }
}

AugEstimate FitPath::estimate(double lambda_ridge) const {
  const bool with_cov = spec_.covariates != CovariateMode::none && cov_ && cov_->k() > 0;
  const auto kind = spec_.kind;
  if (spec_.uses_lambda() && !(lambda_ridge >= 0.0))
    throw Error(ErrorCode::invalid_argument, "lambda must be >= 0");

  if (!with_cov) {
    switch (kind) {
      case EstimatorKind::scm: return weighting_estimate(*base_, b_);
      case EstimatorKind::ridge: return weighting_estimate(ridge_weights(b_, *svd_, lambda_ridge), b_);
      case EstimatorKind::ascm_ridge:
        return weighting_estimate(augment_weights(*base_, b_, *svd_, lambda_ridge), b_);
      case EstimatorKind::fixed_effects: {
        UnitMeanOutcomeModel fe;
        fe.fit(b_);
        return augment_with_model(uniform_weights(b_.n_controls()), fe, b_);
      }
      case EstimatorKind::demeaned_scm: {
        UnitMeanOutcomeModel fe;
        fe.fit(b_);
        return augment_with_model(*base_, fe, b_);
      }
    }
  }

  // Pure SCM with covariates keeps the base weights; the infinite penalty
  // switches the ridge step off and, on the residualized path, keeps only
  // the exact covariate correction.
  const double lam = kind == EstimatorKind::scm ? std::numeric_limits<double>::infinity()
                                                : lambda_ridge;
  if (spec_.covariates == CovariateMode::residualize) {
    return weighting_estimate(two_step_weights(*base_, *resid_, *cov_, lam), b_);
  }
  if (kind == EstimatorKind::scm) return weighting_estimate(*base_, b_);
  const PanelBlocks st = ridge_stacked_blocks(b_, *cov_, lam);
  return weighting_estimate(augment_weights(*base_, st, lam), b_);
}

PanelBlocks recentered(const Eigen::VectorXd& x1, const Eigen::MatrixXd& x0,
                       const Eigen::VectorXd& y1_post, const Eigen::MatrixXd& y0_post) {
  return make_blocks(x1, x0, y1_post, y0_post, true);
}

PreparedPanel prepare(const PanelData& p, const EstimatorSpec& spec) {
  PreparedPanel out;
  out.blocks = split_and_center(p, true);
  if (spec.covariates != CovariateMode::none) {
    if (p.covariates.cols() == 0)
      throw Error(ErrorCode::invalid_argument, "covariate mode set but the panel has no covariates");
    out.cov = make_covariate_panel(p, out.blocks,
                                   spec.covariates == CovariateMode::joint &&
                                       spec.standardize_covariates);
  }
  return out;
}

}  // namespace panelctrl

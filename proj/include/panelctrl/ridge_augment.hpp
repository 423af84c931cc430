#pragma once

// Ridge outcome model and ridge-augmented SCM.
//
// Two penalty scales appear here. The public functions take lambda_ridge,
// the penalty on the raw control design x0. The SVD diagnostics work with
// lambda = lambda_ridge / N0 against the singular values of x0 / sqrt(N0).
// All functions require centered blocks.

#include <memory>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "panelctrl/panel.hpp"
#include "panelctrl/scm.hpp"

namespace panelctrl {

struct RidgeFit {
  double intercept = 0.0;
  Eigen::VectorXd coefs;
  double lambda = 0.0;  // lambda_ridge

  double predict(const Eigen::VectorXd& x) const { return intercept + x.dot(coefs); }
};

// Thin SVD of x0 / sqrt(N0), truncated at d_j < 1e-10 * d_1.
struct ControlSVD {
  Eigen::MatrixXd u;  // N0 x m
  Eigen::VectorXd d;  // m, descending
  Eigen::MatrixXd v;  // T0 x m
  Eigen::Index rank = 0;
  Eigen::Index n0 = 0;
  Eigen::Index t0 = 0;

  double d_min() const { return rank < t0 || rank == 0 ? 0.0 : d[rank - 1]; }

  // (x0'x0 + lambda_ridge I)^{-1} r.
  Eigen::VectorXd solve_regularized(const Eigen::VectorXd& r, double lambda_ridge) const;
};

ControlSVD control_svd(const Eigen::MatrixXd& x0);
inline ControlSVD control_svd(const PanelBlocks& b) { return control_svd(b.x0); }

// Ridge regression of control outcomes in post period `post_period` on the
// centered pre-period outcomes. lambda_ridge = 0 needs full column rank.
RidgeFit fit_ridge(const PanelBlocks& b, double lambda_ridge, Eigen::Index post_period);
RidgeFit fit_ridge(const PanelBlocks& b, const ControlSVD& svd, double lambda_ridge,
                   Eigen::Index post_period);
// Same regression against an arbitrary control response vector.
RidgeFit fit_ridge_response(const PanelBlocks& b, const ControlSVD& svd, double lambda_ridge,
                            const Eigen::VectorXd& y0);

// Ridge ASCM weights: g_scm + x0 (x0'x0 + lambda I)^{-1} (x1 - x0' g_scm).
DonorWeights augment_weights(const DonorWeights& scm_w, const PanelBlocks& b,
                             double lambda_ridge);
DonorWeights augment_weights(const DonorWeights& scm_w, const PanelBlocks& b,
                             const ControlSVD& svd, double lambda_ridge);

// Weights implied by ridge regression alone, anchored at uniform weights.
DonorWeights ridge_weights(const PanelBlocks& b, double lambda_ridge);
DonorWeights ridge_weights(const PanelBlocks& b, const ControlSVD& svd, double lambda_ridge);

struct PenalizedFormReport {
  double residual = 0.0;
  bool pass = false;
};

inline constexpr double kPenalizedFormTol = 1e-8;

// Stationarity residual of w for the sum-constrained problem
//   (1 / 2 lambda) |x1 - x0' g|^2 + 1/2 |g - anchor|^2.
PenalizedFormReport verify_penalized_form(const DonorWeights& w, const Eigen::VectorXd& anchor,
                                          const PanelBlocks& b, double lambda_ridge);

Eigen::VectorXd uniform_anchor(Eigen::Index n0);

struct SvdImbalance {
  double direct = 0.0;
  double via_svd = 0.0;
  double upper_bound = 0.0;
  double lambda_ridge = 0.0;
  double lambda = 0.0;  // lambda_ridge / N0
};

SvdImbalance svd_imbalance(const DonorWeights& scm_w, const PanelBlocks& b, double lambda_ridge);

struct WeightNormBound {
  double norm = 0.0;
  double bound = 0.0;
};

WeightNormBound weight_norm_bound(const DonorWeights& scm_w, const PanelBlocks& b,
                                  double lambda_ridge);

struct AugEstimate {
  Eigen::VectorXd observed;        // treated post outcomes
  Eigen::VectorXd counterfactual;  // per post period
  Eigen::VectorXd att;
  Eigen::VectorXd gap_pre;
  DonorWeights weights;
};

// Outcome model m(x) fitted on control units only, one fit per post period.
class OutcomeModel {
 public:
  virtual ~OutcomeModel() = default;
  virtual std::string_view name() const = 0;
  virtual void fit(const PanelBlocks& b) = 0;
  virtual bool fitted() const = 0;
  virtual double predict(const Eigen::VectorXd& x, Eigen::Index post_period) const = 0;
  // Pre-period residual of the augmented fit with base weights g.
  virtual Eigen::VectorXd pre_gap(const PanelBlocks& b, const Eigen::VectorXd& g) const;
};

// m = constant: plain SCM.
class ConstantOutcomeModel final : public OutcomeModel {
 public:
  std::string_view name() const override { return "constant"; }
  void fit(const PanelBlocks& b) override;
  bool fitted() const override { return fitted_; }
  double predict(const Eigen::VectorXd& x, Eigen::Index post_period) const override;

 private:
  Eigen::VectorXd means_;
  bool fitted_ = false;
};

// m(x) = mean(x): de-meaned SCM, a weighted difference in differences.
class UnitMeanOutcomeModel final : public OutcomeModel {
 public:
  std::string_view name() const override { return "unit-mean"; }
  void fit(const PanelBlocks& b) override;
  bool fitted() const override { return fitted_; }
  double predict(const Eigen::VectorXd& x, Eigen::Index post_period) const override;
  Eigen::VectorXd pre_gap(const PanelBlocks& b, const Eigen::VectorXd& g) const override;

 private:
  bool fitted_ = false;
};

class RidgeOutcomeModel final : public OutcomeModel {
 public:
  explicit RidgeOutcomeModel(double lambda_ridge) : lambda_(lambda_ridge) {}
  std::string_view name() const override { return "ridge"; }
  void fit(const PanelBlocks& b) override;
  bool fitted() const override { return fitted_; }
  double predict(const Eigen::VectorXd& x, Eigen::Index post_period) const override;
  Eigen::VectorXd pre_gap(const PanelBlocks& b, const Eigen::VectorXd& g) const override;
  const std::vector<RidgeFit>& fits() const { return fits_; }

 private:
  double lambda_;
  std::vector<RidgeFit> fits_;
  bool fitted_ = false;
};

// m(X1) + sum_i g_i (Y_i - m(X_i)) for every post period.
AugEstimate augment_with_model(const DonorWeights& scm_w, const OutcomeModel& model,
                               const PanelBlocks& b);

// Estimate from a pure weighting estimator: sum_i g_i Y_i.
AugEstimate weighting_estimate(const DonorWeights& w, const PanelBlocks& b);

// The two algebraic forms of the de-meaned SCM effect in one post period.
struct DemeanedForms {
  double unit_mean_form = 0.0;
  double period_average_form = 0.0;
};
DemeanedForms demeaned_effect_forms(const DonorWeights& w, const PanelBlocks& b,
                                    Eigen::Index post_period);

enum class BoundModel { factor, linear };

struct BoundSketchOptions {
  double j_factors = 3.0;
  double m_bound = 1.0;
  BoundModel model = BoundModel::factor;
  double beta_norm = 1.0;  // linear model only
};

struct BoundRow {
  double lambda_ridge = 0.0;
  double lambda = 0.0;
  double sigma = 0.0;
  double imbalance = 0.0;
  double excess = 0.0;
  double scm_approx = 0.0;
  double total = 0.0;
  double total_pct = 0.0;
};

struct BoundSketch {
  std::vector<double> lambda_grid;  // lambda_ridge
  std::vector<double> sigma_grid;
  std::vector<BoundRow> rows;       // sigma-major, lambda in grid order
  double j_factors = 0.0;
  double m_bound = 0.0;
  Eigen::Index t0 = 0;
  Eigen::Index n0 = 0;

  const BoundRow& at(std::size_t sigma_idx, std::size_t lambda_idx) const {
    return rows[sigma_idx * lambda_grid.size() + lambda_idx];
  }
};

// Error-bound terms for the factor model with delta = 0, normalized per
// sigma so the largest-lambda entry reads 100%.
BoundSketch bound_sketch(const DonorWeights& scm_w, const PanelBlocks& b,
                         const std::vector<double>& lambda_grid,
                         const std::vector<double>& sigma_grid,
                         const BoundSketchOptions& opts = {});

void write_bound_sketch_csv(std::ostream& os, const BoundSketch& s);

}  // namespace panelctrl

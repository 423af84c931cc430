#include "panelctrl/ridge_augment.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "panelctrl/error.hpp"
#include "panelctrl/io.hpp"

namespace panelctrl {

namespace {

void require_centered(const PanelBlocks& b, const char* who) {
  if (!b.centered)
    throw Error(ErrorCode::invalid_argument,
                std::string(who) + ": blocks must be centered on control means");
}

void require_lambda(double lambda_ridge) {
  if (!(lambda_ridge >= 0.0) || std::isnan(lambda_ridge))
    throw Error(ErrorCode::invalid_argument, "lambda must be >= 0");
}

}  // namespace

ControlSVD control_svd(const Eigen::MatrixXd& x0) {
  ControlSVD s;
  s.n0 = x0.rows();
  s.t0 = x0.cols();
  const Eigen::MatrixXd scaled = x0 / std::sqrt(static_cast<double>(s.n0));
  Eigen::BDCSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& d = svd.singularValues();
  Eigen::Index m = 0;
  if (d.size() > 0 && d[0] > 0.0)
    while (m < d.size() && d[m] >= 1e-10 * d[0]) ++m;
  s.rank = m;
  s.d = d.head(m);
  s.u = svd.matrixU().leftCols(m);
  s.v = svd.matrixV().leftCols(m);
  return s;
}

Eigen::VectorXd ControlSVD::solve_regularized(const Eigen::VectorXd& r,
                                              double lambda_ridge) const {
  const double n = static_cast<double>(n0);
  const Eigen::VectorXd proj = v.transpose() * r;
  const Eigen::VectorXd scaled =
      proj.array() / (n * d.array().square() + lambda_ridge);
  Eigen::VectorXd out = v * scaled;
  if (rank < t0) {
    if (lambda_ridge <= 0.0)
      throw Error(ErrorCode::singular,
                  "x0'x0 is singular (rank " + std::to_string(rank) + " < T0 " +
                      std::to_string(t0) + "); use lambda > 0");
    out += (r - v * proj) / lambda_ridge;
  }
  return out;
}

RidgeFit fit_ridge_response(const PanelBlocks& b, const ControlSVD& svd, double lambda_ridge,
                            const Eigen::VectorXd& y0) {
  require_centered(b, "fit_ridge");
  require_lambda(lambda_ridge);
  if (lambda_ridge == 0.0 && svd.rank < svd.t0)
    throw Error(ErrorCode::singular, "fit_ridge: x0'x0 is singular at lambda = 0 (rank " +
                                         std::to_string(svd.rank) + " < T0 " +
                                         std::to_string(svd.t0) + ")");
  const double n = static_cast<double>(svd.n0);
  RidgeFit f;
  f.lambda = lambda_ridge;
  f.intercept = y0.mean();
  // (x0'x0 + l I)^{-1} x0' y = V diag(sqrt(n) d / (n d^2 + l)) U' y
  const Eigen::VectorXd uy = svd.u.transpose() * y0;
  const Eigen::VectorXd scale =
      (std::sqrt(n) * svd.d.array()) / (n * svd.d.array().square() + lambda_ridge);
  f.coefs = svd.v * (scale.array() * uy.array()).matrix();
  return f;
}

RidgeFit fit_ridge(const PanelBlocks& b, const ControlSVD& svd, double lambda_ridge,
                   Eigen::Index post_period) {
  if (post_period < 0 || post_period >= b.n_post())
    throw Error(ErrorCode::invalid_argument, "post period index out of range");
  return fit_ridge_response(b, svd, lambda_ridge, b.y0_post.col(post_period));
}

RidgeFit fit_ridge(const PanelBlocks& b, double lambda_ridge, Eigen::Index post_period) {
  return fit_ridge(b, control_svd(b), lambda_ridge, post_period);
}

DonorWeights augment_weights(const DonorWeights& scm_w, const PanelBlocks& b,
                             const ControlSVD& svd, double lambda_ridge) {
  require_centered(b, "augment_weights");
  require_lambda(lambda_ridge);
  if (!scm_w.sum_constrained)
    throw Error(ErrorCode::invalid_argument, "augment_weights: base weights must sum to one");
  const Eigen::VectorXd r = pre_gap(b, scm_w.values);
  DonorWeights w;
  w.values = scm_w.values + b.x0 * svd.solve_regularized(r, lambda_ridge);
  w.provenance = Provenance::augmented;
  w.sum_constrained = true;
  w.simplex = false;
  return w;
}

DonorWeights augment_weights(const DonorWeights& scm_w, const PanelBlocks& b,
                             double lambda_ridge) {
  return augment_weights(scm_w, b, control_svd(b), lambda_ridge);
}

DonorWeights ridge_weights(const PanelBlocks& b, const ControlSVD& svd, double lambda_ridge) {
  require_centered(b, "ridge_weights");
  require_lambda(lambda_ridge);
  const auto n0 = b.n_controls();
  const Eigen::VectorXd xbar = b.x0.colwise().mean().transpose();
  DonorWeights w;
  w.values = Eigen::VectorXd::Constant(n0, 1.0 / static_cast<double>(n0)) +
             b.x0 * svd.solve_regularized(b.x1 - xbar, lambda_ridge);
  w.provenance = Provenance::ridge;
  w.sum_constrained = true;
  w.simplex = false;
  return w;
}

DonorWeights ridge_weights(const PanelBlocks& b, double lambda_ridge) {
  return ridge_weights(b, control_svd(b), lambda_ridge);
}

Eigen::VectorXd uniform_anchor(Eigen::Index n0) {
  return Eigen::VectorXd::Constant(n0, 1.0 / static_cast<double>(n0));
}

PenalizedFormReport verify_penalized_form(const DonorWeights& w, const Eigen::VectorXd& anchor,
                                          const PanelBlocks& b, double lambda_ridge) {
  if (!(lambda_ridge > 0.0))
    throw Error(ErrorCode::invalid_argument, "verify_penalized_form: lambda must be > 0");
  if (anchor.size() != w.size())
    throw Error(ErrorCode::invalid_argument, "anchor length != number of donors");
  const Eigen::VectorXd gap = pre_gap(b, w.values);
  Eigen::VectorXd grad = -(b.x0 * gap) / lambda_ridge + (w.values - anchor);
  // Project onto the tangent space of sum(g) = 1.
  grad.array() -= grad.mean();
  PenalizedFormReport rep;
  rep.residual = grad.cwiseAbs().maxCoeff();
  rep.pass = rep.residual <= kPenalizedFormTol;
  return rep;
}

SvdImbalance svd_imbalance(const DonorWeights& scm_w, const PanelBlocks& b, double lambda_ridge) {
  require_centered(b, "svd_imbalance");
  const ControlSVD svd = control_svd(b);
  const DonorWeights aug = augment_weights(scm_w, b, svd, lambda_ridge);
  const double lam = lambda_ridge / static_cast<double>(b.n_controls());

  SvdImbalance out;
  out.lambda_ridge = lambda_ridge;
  out.lambda = lam;
  out.direct = pre_gap(b, aug.values).norm();

  const Eigen::VectorXd r = pre_gap(b, scm_w.values);
  const Eigen::VectorXd rt = svd.v.transpose() * r;
  const Eigen::VectorXd shrunk = lam * (rt.array() / (svd.d.array().square() + lam)).matrix();
  const double orth = (r - svd.v * rt).squaredNorm();
  out.via_svd = std::sqrt(shrunk.squaredNorm() + orth);
  const double dm = svd.d_min();
  out.upper_bound = lam / (dm * dm + lam) * r.norm();
  return out;
}

WeightNormBound weight_norm_bound(const DonorWeights& scm_w, const PanelBlocks& b,
                                  double lambda_ridge) {
  require_centered(b, "weight_norm_bound");
  const ControlSVD svd = control_svd(b);
  const DonorWeights aug = augment_weights(scm_w, b, svd, lambda_ridge);
  const double n0 = static_cast<double>(b.n_controls());
  const double lam = lambda_ridge / n0;
  const Eigen::VectorXd rt = svd.v.transpose() * pre_gap(b, scm_w.values);
  const Eigen::VectorXd adj = (svd.d.array() / (svd.d.array().square() + lam) * rt.array()).matrix();
  WeightNormBound out;
  out.norm = aug.values.norm();
  out.bound = scm_w.values.norm() + adj.norm() / std::sqrt(n0);
  return out;
}

Eigen::VectorXd OutcomeModel::pre_gap(const PanelBlocks& b, const Eigen::VectorXd& g) const {
  return panelctrl::pre_gap(b, g);
}

void ConstantOutcomeModel::fit(const PanelBlocks& b) {
  means_ = b.y0_post.colwise().mean().transpose();
  fitted_ = true;
}

double ConstantOutcomeModel::predict(const Eigen::VectorXd&, Eigen::Index post_period) const {
  return means_[post_period];
}

void UnitMeanOutcomeModel::fit(const PanelBlocks&) { fitted_ = true; }

double UnitMeanOutcomeModel::predict(const Eigen::VectorXd& x, Eigen::Index) const {
  return x.mean();
}

Eigen::VectorXd UnitMeanOutcomeModel::pre_gap(const PanelBlocks& b,
                                              const Eigen::VectorXd& g) const {
  const Eigen::VectorXd unit_means = b.x0.rowwise().mean();
  const double shift = b.x1.mean() - g.dot(unit_means);
  return panelctrl::pre_gap(b, g).array() - shift;
}

void RidgeOutcomeModel::fit(const PanelBlocks& b) {
  const ControlSVD svd = control_svd(b);
  fits_.clear();
  for (Eigen::Index k = 0; k < b.n_post(); ++k) fits_.push_back(fit_ridge(b, svd, lambda_, k));
  fitted_ = true;
}

double RidgeOutcomeModel::predict(const Eigen::VectorXd& x, Eigen::Index post_period) const {
  return fits_.at(static_cast<std::size_t>(post_period)).predict(x);
}

Eigen::VectorXd RidgeOutcomeModel::pre_gap(const PanelBlocks& b, const Eigen::VectorXd& g) const {
  DonorWeights base;
  base.values = g;
  return panelctrl::pre_gap(b, augment_weights(base, b, lambda_).values);
}

AugEstimate augment_with_model(const DonorWeights& scm_w, const OutcomeModel& model,
                               const PanelBlocks& b) {
  if (!model.fitted())
    throw Error(ErrorCode::model_not_fitted,
                "outcome model '" + std::string(model.name()) + "' has not been fitted");
  const auto post = b.n_post();
  AugEstimate est;
  est.observed = b.y1_post;
  est.counterfactual.resize(post);
  for (Eigen::Index k = 0; k < post; ++k) {
    double resid = 0.0;
    for (Eigen::Index i = 0; i < b.n_controls(); ++i)
      resid += scm_w.values[i] * (b.y0_post(i, k) - model.predict(b.x0.row(i).transpose(), k));
    est.counterfactual[k] = model.predict(b.x1, k) + resid;
  }
  est.att = est.observed - est.counterfactual;
  est.gap_pre = model.pre_gap(b, scm_w.values);
  est.weights = scm_w;
  return est;
}

AugEstimate weighting_estimate(const DonorWeights& w, const PanelBlocks& b) {
  AugEstimate est;
  est.observed = b.y1_post;
  est.counterfactual = b.y0_post.transpose() * w.values;
  est.att = est.observed - est.counterfactual;
  est.gap_pre = pre_gap(b, w.values);
  est.weights = w;
  return est;
}

DemeanedForms demeaned_effect_forms(const DonorWeights& w, const PanelBlocks& b,
                                    Eigen::Index post_period) {
  if (post_period < 0 || post_period >= b.n_post())
    throw Error(ErrorCode::invalid_argument, "post period index out of range");
  const auto t0 = b.n_pre();
  const double y1 = b.y1_post[post_period];
  const Eigen::VectorXd y0 = b.y0_post.col(post_period);
  const Eigen::VectorXd unit_means = b.x0.rowwise().mean();

  DemeanedForms f;
  f.unit_mean_form = (y1 - b.x1.mean()) - w.values.dot(y0 - unit_means);
  double acc = 0.0;
  for (Eigen::Index t = 0; t < t0; ++t)
    acc += (y1 - b.x1[t]) - w.values.dot(y0 - b.x0.col(t));
  f.period_average_form = acc / static_cast<double>(t0);
  return f;
}

BoundSketch bound_sketch(const DonorWeights& scm_w, const PanelBlocks& b,
                         const std::vector<double>& lambda_grid,
                         const std::vector<double>& sigma_grid,
                         const BoundSketchOptions& opts) {
  require_centered(b, "bound_sketch");
  if (lambda_grid.empty() || sigma_grid.empty())
    throw Error(ErrorCode::invalid_argument, "bound_sketch: empty grid");
  for (double l : lambda_grid)
    if (!(l > 0.0)) throw Error(ErrorCode::invalid_argument, "bound_sketch: lambda must be > 0");
  for (double s : sigma_grid)
    if (!(s >= 0.0)) throw Error(ErrorCode::invalid_argument, "bound_sketch: sigma must be >= 0");

  const ControlSVD svd = control_svd(b);
  const double n0 = static_cast<double>(b.n_controls());
  const Eigen::ArrayXd rt = (svd.v.transpose() * pre_gap(b, scm_w.values)).array();
  const Eigen::ArrayXd d = svd.d.array();
  const Eigen::ArrayXd d2 = d.square();
  const double scale = opts.j_factors * opts.m_bound * opts.m_bound /
                       std::sqrt(static_cast<double>(b.n_pre()));

  BoundSketch s;
  s.lambda_grid = lambda_grid;
  s.sigma_grid = sigma_grid;
  s.j_factors = opts.j_factors;
  s.m_bound = opts.m_bound;
  s.t0 = b.n_pre();
  s.n0 = b.n_controls();
  const auto anchor = static_cast<std::size_t>(
      std::max_element(lambda_grid.begin(), lambda_grid.end()) - lambda_grid.begin());

  for (double sigma : sigma_grid) {
    const std::size_t first = s.rows.size();
    for (double lr : lambda_grid) {
      const double lam = lr / n0;
      const double imb = (lam / (d2 + lam) * rt).matrix().norm();
      BoundRow row;
      row.lambda_ridge = lr;
      row.lambda = lam;
      row.sigma = sigma;
      if (opts.model == BoundModel::factor) {
        row.imbalance = scale * imb;
        row.excess = scale * 4.0 * (d * sigma / (d2 + lam) * rt).matrix().norm();
        row.scm_approx = scale * 2.0 * std::sqrt(std::log(2.0 * n0));
      } else {
        row.imbalance = opts.beta_norm * imb;
      }
      row.total = row.imbalance + row.excess + row.scm_approx;
      s.rows.push_back(row);
    }
    const double ref = s.rows[first + anchor].total;
    for (std::size_t k = first; k < s.rows.size(); ++k)
      s.rows[k].total_pct = ref > 0.0 ? 100.0 * s.rows[k].total / ref : 0.0;
  }
  return s;
}

void write_bound_sketch_csv(std::ostream& os, const BoundSketch& s) {
  os << "lambda,sigma,imbalance,excess,scm_approx,total_pct\n";
  for (const auto& r : s.rows)
    os << io::format_double(r.lambda_ridge) << ',' << io::format_double(r.sigma) << ','
       << io::format_double(r.imbalance) << ',' << io::format_double(r.excess) << ','
       << io::format_double(r.scm_approx) << ',' << io::format_double(r.total_pct) << '\n';
}

}  // namespace panelctrl

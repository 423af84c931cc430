#include "panelctrl/covariates.hpp"

#include <cmath>
#include <ostream>

#include "panelctrl/error.hpp"
#include "panelctrl/io.hpp"

namespace panelctrl {

namespace {

Eigen::VectorXd column_sd(const Eigen::MatrixXd& m) {
  const auto n = m.rows();
  Eigen::VectorXd sd(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const Eigen::ArrayXd c = m.col(j).array() - m.col(j).mean();
    sd[j] = n > 1 ? std::sqrt(c.square().sum() / static_cast<double>(n - 1)) : 0.0;
  }
  return sd;
}

void check_shapes(const PanelBlocks& b, const CovariatePanel& cov) {
  if (cov.z0.rows() != b.n_controls() || cov.z1.size() != cov.z0.cols())
    throw Error(ErrorCode::invalid_argument, "covariate dimensions do not match the panel");
  if (!(cov.theta_x >= 0.0) || !(cov.theta_z >= 0.0))
    throw Error(ErrorCode::invalid_argument, "theta_x and theta_z must be >= 0");
  if (cov.lambda_z && !(*cov.lambda_z > 0.0))
    throw Error(ErrorCode::invalid_argument, "lambda_z must be > 0");
}

}  // namespace

CovariatePanel make_covariate_panel(const Eigen::VectorXd& z1_raw, const Eigen::MatrixXd& z0_raw,
                                    std::vector<std::string> names, const PanelBlocks& b,
                                    bool standardize) {
  if (z0_raw.rows() != b.n_controls() || z1_raw.size() != z0_raw.cols())
    throw Error(ErrorCode::invalid_argument, "covariate dimensions do not match the panel");
  const auto k = z0_raw.cols();
  if (names.empty())
    for (Eigen::Index j = 0; j < k; ++j) names.push_back("z" + std::to_string(j + 1));

  CovariatePanel cov;
  cov.names = std::move(names);
  cov.centering = z0_raw.colwise().mean().transpose();
  cov.z0 = z0_raw.rowwise() - cov.centering.transpose();
  cov.z1 = z1_raw - cov.centering;
  cov.scale = Eigen::VectorXd::Ones(k);
  if (standardize && k > 0) {
    const double pooled = std::sqrt(column_sd(b.x0).array().square().mean());
    const Eigen::VectorXd zsd = column_sd(cov.z0);
    for (Eigen::Index j = 0; j < k; ++j)
      if (zsd[j] > 0.0 && pooled > 0.0) cov.scale[j] = pooled / zsd[j];
    cov.z0 = cov.z0 * cov.scale.asDiagonal();
    cov.z1 = cov.z1.cwiseProduct(cov.scale);
  }
  return cov;
}

CovariatePanel make_covariate_panel(const PanelData& p, const PanelBlocks& b, bool standardize) {
  const auto k = p.covariates.cols();
  Eigen::MatrixXd z0(p.n_controls(), k);
  const auto ctrl = p.control_indices();
  for (std::size_t i = 0; i < ctrl.size(); ++i) z0.row(Eigen::Index(i)) = p.covariates.row(ctrl[i]);
  const Eigen::VectorXd z1 =
      k > 0 ? Eigen::VectorXd(p.covariates.row(p.treated_index).transpose()) : Eigen::VectorXd();
  return make_covariate_panel(z1, z0, p.covariate_names, b, standardize);
}

PanelBlocks stacked_blocks(const PanelBlocks& b, const CovariatePanel& cov, double z_scale) {
  check_shapes(b, cov);
  const auto t0 = b.n_pre(), k = cov.k();
  PanelBlocks s = b;
  s.x1.resize(t0 + k);
  s.x1 << b.x1, z_scale * cov.z1;
  s.x0.resize(b.n_controls(), t0 + k);
  s.x0 << b.x0, z_scale * cov.z0;
  s.centering.resize(t0 + k);
  s.centering << b.centering, Eigen::VectorXd::Zero(k);
  return s;
}

DonorWeights joint_solve(const PanelBlocks& b, const CovariatePanel& cov, const ScmConfig& cfg) {
  check_shapes(b, cov);
  const auto t0 = b.n_pre(), k = cov.k();
  ScmConfig c = cfg;
  const Eigen::VectorXd vx =
      cfg.importance.size() == 0 ? Eigen::VectorXd::Ones(t0) : cfg.importance;
  if (vx.size() != t0) throw Error(ErrorCode::invalid_argument, "importance length != T0");
  c.importance.resize(t0 + k);
  c.importance << cov.theta_x * vx, Eigen::VectorXd::Constant(k, cov.theta_z);
  DonorWeights w = solve_scm(stacked_blocks(b, cov), c);
  return w;
}

PanelBlocks ridge_stacked_blocks(const PanelBlocks& b, const CovariatePanel& cov,
                                 double lambda_ridge) {
  const double lz = cov.lambda_z.value_or(lambda_ridge);
  const double s = lz > 0.0 && lambda_ridge > 0.0 ? std::sqrt(lambda_ridge / lz) : 1.0;
  return stacked_blocks(b, cov, s);
}

AugEstimate joint_augment(const DonorWeights& scm_w, const PanelBlocks& b,
                          const CovariatePanel& cov, double lambda_ridge) {
  const PanelBlocks s = ridge_stacked_blocks(b, cov, lambda_ridge);
  const DonorWeights aug = augment_weights(scm_w, s, lambda_ridge);
  AugEstimate est = weighting_estimate(aug, b);
  return est;
}

ResidualizedPanel residualize(const PanelBlocks& b, const CovariatePanel& cov) {
  check_shapes(b, cov);
  const auto k = cov.k();
  const auto n0 = b.n_controls();
  ResidualizedPanel r;
  if (k == 0) {
    r.x1_check = b.x1;
    r.x0_check = b.x0;
    r.projection = Eigen::MatrixXd::Zero(0, b.n_pre());
    r.y_projection = Eigen::MatrixXd::Zero(0, b.n_post());
    r.blocks = b;
    return r;
  }
  if (k >= n0)
    throw Error(ErrorCode::invalid_argument,
                "two-step covariate adjustment needs fewer covariates (" + std::to_string(k) +
                    ") than donors (" + std::to_string(n0) + ")");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(cov.z0);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) {
    std::string cols;
    for (Eigen::Index j = qr.rank(); j < k; ++j) {
      const auto idx = qr.colsPermutation().indices()[j];
      if (!cols.empty()) cols += ", ";
      cols += idx < Eigen::Index(cov.names.size()) ? cov.names[std::size_t(idx)]
                                                   : "z" + std::to_string(idx + 1);
    }
    throw Error(ErrorCode::singular,
                "covariate matrix is rank deficient; collinear columns: " + cols);
  }

  r.projection = qr.solve(b.x0);
  r.y_projection = qr.solve(b.y0_post);
  r.x0_check = b.x0 - cov.z0 * r.projection;
  r.x1_check = b.x1 - r.projection.transpose() * cov.z1;
  r.blocks = b;
  r.blocks.x0 = r.x0_check;
  r.blocks.x1 = r.x1_check;
  r.blocks.y0_post = b.y0_post - cov.z0 * r.y_projection;
  r.blocks.y1_post = b.y1_post - r.y_projection.transpose() * cov.z1;
  return r;
}

DonorWeights two_step_weights(const DonorWeights& scm_w, const ResidualizedPanel& r,
                              const CovariatePanel& cov, double lambda_ridge) {
  DonorWeights w = augment_weights(scm_w, r.blocks, lambda_ridge);
  if (cov.k() > 0) {
    const Eigen::VectorXd zgap = cov.z1 - cov.z0.transpose() * scm_w.values;
    const Eigen::MatrixXd gram = cov.z0.transpose() * cov.z0;
    w.values += cov.z0 * gram.ldlt().solve(zgap);
  }
  w.provenance = Provenance::covariate_adjusted;
  return w;
}

DonorWeights two_step_weights(const DonorWeights& scm_w, const PanelBlocks& b,
                              const CovariatePanel& cov, double lambda_ridge) {
  return two_step_weights(scm_w, residualize(b, cov), cov, lambda_ridge);
}

TwoStepResult two_step_estimate(const PanelBlocks& b, const CovariatePanel& cov,
                                double lambda_ridge, const ScmConfig& cfg) {
  TwoStepResult out;
  out.residualized = residualize(b, cov);
  out.scm_weights = solve_scm(out.residualized.blocks, cfg);
  const DonorWeights w = two_step_weights(out.scm_weights, out.residualized, cov, lambda_ridge);
  out.estimate = weighting_estimate(w, b);
  return out;
}

TwoStepBound two_step_bound(const DonorWeights& scm_w, const DonorWeights& cov_w,
                            const ResidualizedPanel& r, double lambda_ridge) {
  const ControlSVD svd = control_svd(r.x0_check);
  TwoStepBound out;
  out.d_min = svd.d_min();
  out.imbalance = (r.x1_check - r.x0_check.transpose() * cov_w.values).norm();
  const double n0 = static_cast<double>(r.x0_check.rows());
  const double before = (r.x1_check - r.x0_check.transpose() * scm_w.values).norm();
  out.bound = lambda_ridge / (lambda_ridge + n0 * out.d_min * out.d_min) * before;
  return out;
}

std::vector<BalanceRow> balance_table(const PanelData& p, const DonorWeights& w) {
  const auto k = p.covariates.cols();
  const auto ctrl = p.control_indices();
  if (w.size() != Eigen::Index(ctrl.size()))
    throw Error(ErrorCode::invalid_argument, "weights do not match the donor pool");
  Eigen::MatrixXd z0(Eigen::Index(ctrl.size()), k);
  for (std::size_t i = 0; i < ctrl.size(); ++i) z0.row(Eigen::Index(i)) = p.covariates.row(ctrl[i]);
  const Eigen::VectorXd sd = column_sd(z0);
  std::vector<BalanceRow> rows;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double s = sd[j] > 0.0 ? sd[j] : 1.0;
    const double z1 = p.covariates(p.treated_index, j);
    BalanceRow row;
    row.covariate = j < Eigen::Index(p.covariate_names.size())
                        ? p.covariate_names[std::size_t(j)]
                        : "z" + std::to_string(j + 1);
    row.raw_gap = std::abs(z1 - z0.col(j).mean()) / s;
    row.weighted_gap = std::abs(z1 - z0.col(j).dot(w.values)) / s;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_balance_csv(std::ostream& os, const std::vector<BalanceRow>& rows) {
  os << "covariate,raw_gap,weighted_gap\n";
  for (const auto& r : rows)
    os << io::csv_field(r.covariate) << ',' << io::format_double(r.raw_gap) << ','
       << io::format_double(r.weighted_gap) << '\n';
}

}  // namespace panelctrl

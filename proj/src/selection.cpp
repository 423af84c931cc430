#include "panelctrl/selection.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include "panelctrl/error.hpp"
#include "panelctrl/io.hpp"
#include "panelctrl/log.hpp"
#include "panelctrl/parallel.hpp"

namespace panelctrl {

std::vector<double> default_lambda_grid(const PanelBlocks& b, int n) {
  if (n < 1) throw Error(ErrorCode::invalid_argument, "grid size must be >= 1");
  const ControlSVD svd = control_svd(b.x0);
  const double d1 = svd.rank > 0 ? svd.d[0] : 1.0;
  const double s = d1 * d1 * static_cast<double>(b.n_controls());
  std::vector<double> grid;
  for (int k = 0; k < n; ++k) {
    const double e = n == 1 ? 0.0 : 3.0 - 6.0 * k / (n - 1);
    grid.push_back(s * std::pow(10.0, e));
  }
  return grid;
}

CvResult loo_cv(const PanelBlocks& b, const std::optional<CovariatePanel>& cov,
                const EstimatorSpec& spec, std::vector<double> grid, CvMode mode, int threads) {
  const auto t0 = b.n_pre();
  if (t0 < 3) throw Error(ErrorCode::too_few_periods, "cross-validation needs T0 >= 3");
  if (grid.empty()) throw Error(ErrorCode::invalid_argument, "lambda grid is empty");
  for (double l : grid)
    if (!(l > 0.0) || !std::isfinite(l))
      throw Error(ErrorCode::invalid_argument, "lambda grid values must be positive and finite");
  std::sort(grid.begin(), grid.end(), std::greater<>());

  CvResult cv;
  cv.lambda_grid = grid;
  cv.mode = mode;
  const PanelBlocks raw = uncenter(b);
  for (Eigen::Index t = 0; t < t0; ++t) {
    const Eigen::Index kept = mode == CvMode::leave_one ? t0 - 1 : t;
    if (kept < 2) {
      cv.skipped_periods.push_back(t);
      log::warn("cv: skipping held-out period " + std::to_string(t + 1) + ", only " +
                std::to_string(kept) + " pre-periods remain");
    } else {
      cv.used_periods.push_back(t);
    }
  }

  const auto n_used = cv.used_periods.size();
  cv.residuals.resize(static_cast<Eigen::Index>(n_used), static_cast<Eigen::Index>(grid.size()));
  parallel_for(n_used, threads, [&](std::size_t u) {
    const Eigen::Index t = cv.used_periods[u];
    std::vector<Eigen::Index> cols;
    for (Eigen::Index s = 0; s < (mode == CvMode::leave_one ? t0 : t); ++s)
      if (s != t) cols.push_back(s);
    const auto m = static_cast<Eigen::Index>(cols.size());
    Eigen::VectorXd x1(m);
    Eigen::MatrixXd x0(raw.n_controls(), m);
    for (Eigen::Index j = 0; j < m; ++j) {
      x1[j] = raw.x1[cols[std::size_t(j)]];
      x0.col(j) = raw.x0.col(cols[std::size_t(j)]);
    }
    const PanelBlocks rb = recentered(x1, x0, Eigen::VectorXd::Constant(1, raw.x1[t]), raw.x0.col(t));
    const FitPath path(rb, cov, spec);
    for (std::size_t l = 0; l < grid.size(); ++l)
      cv.residuals(Eigen::Index(u), Eigen::Index(l)) = path.estimate(grid[l]).att[0];
  });

  const double n = static_cast<double>(n_used);
  for (std::size_t l = 0; l < grid.size(); ++l) {
    const Eigen::ArrayXd sq = cv.residuals.col(Eigen::Index(l)).array().square();
    const double mean = n > 0 ? sq.mean() : std::numeric_limits<double>::quiet_NaN();
    double se = 0.0;
    if (n > 1) se = std::sqrt((sq - mean).square().sum() / (n - 1.0)) / std::sqrt(n);
    cv.cv_mse.push_back(mean);
    cv.cv_se.push_back(se);
  }
  if (n_used == 0) throw Error(ErrorCode::too_few_periods, "no usable held-out periods");

  choose_lambdas(cv);
  return cv;
}

void choose_lambdas(CvResult& cv) {
  const auto& grid = cv.lambda_grid;
  if (grid.empty() || cv.cv_mse.size() != grid.size() || cv.cv_se.size() != grid.size())
    throw Error(ErrorCode::invalid_argument, "CV result has mismatched lengths");
  // Grid is descending, so the first minimum is the largest minimizing lambda.
  std::size_t best = 0;
  for (std::size_t l = 1; l < grid.size(); ++l)
    if (cv.cv_mse[l] < cv.cv_mse[best]) best = l;
  cv.lambda_min = grid[best];
  const double cutoff = cv.cv_mse[best] + cv.cv_se[best];
  cv.lambda_1se = grid[best];
  for (std::size_t l = 0; l < best; ++l)
    if (cv.cv_mse[l] <= cutoff) {
      cv.lambda_1se = grid[l];
      break;
    }
}

double select_lambda(const CvResult& cv, LambdaRule rule) {
  return rule == LambdaRule::min ? cv.lambda_min : cv.lambda_1se;
}

void write_cv_csv(std::ostream& os, const CvResult& cv) {
  os << "lambda,cv_mse,cv_se\n";
  for (std::size_t l = 0; l < cv.lambda_grid.size(); ++l)
    os << io::format_double(cv.lambda_grid[l]) << ',' << io::format_double(cv.cv_mse[l]) << ','
       << io::format_double(cv.cv_se[l]) << '\n';
}

std::pair<std::optional<double>, std::optional<CvResult>> resolve_lambda(
    const PanelBlocks& b, const std::optional<CovariatePanel>& cov, const EstimatorSpec& spec,
    int threads) {
  if (!spec.uses_lambda()) return {std::nullopt, std::nullopt};
  if (spec.lambda) {
    if (!(*spec.lambda >= 0.0)) throw Error(ErrorCode::invalid_argument, "lambda must be >= 0");
    return {*spec.lambda, std::nullopt};
  }
  std::vector<double> grid = spec.lambda_grid.empty() ? default_lambda_grid(b) : spec.lambda_grid;
  CvResult cv = loo_cv(b, cov, spec, std::move(grid), spec.cv_mode, threads);
  const double l = select_lambda(cv, spec.rule);
  return {l, std::move(cv)};
}

EstimateResult estimate_panel(const PanelData& p, const EstimatorSpec& spec, int threads) {
  EstimateResult r;
  r.prepared = prepare(p, spec);
  auto [lambda, cv] = resolve_lambda(r.prepared.blocks, r.prepared.cov, spec, threads);
  r.lambda = lambda;
  r.cv = std::move(cv);
  const FitPath path(r.prepared.blocks, r.prepared.cov, spec);
  r.estimate = path.estimate(lambda.value_or(0.0));
  return r;
}

PlaceboResult in_time_placebo(const PanelData& p, const std::string& placebo_time,
                              const EstimatorSpec& spec, int threads) {
  const bool numeric = times_numeric(p.time_ids);
  Eigen::Index t0 = 0;
  for (Eigen::Index t = 0; t < p.t0; ++t)
    if (time_less(p.time_ids[std::size_t(t)], placebo_time, numeric)) ++t0;
  if (t0 >= p.t0)
    throw Error(ErrorCode::treatment_time,
                "placebo time '" + placebo_time + "' must precede the treatment time");
  if (t0 < 3)
    throw Error(ErrorCode::too_few_periods,
                "placebo time '" + placebo_time + "' leaves fewer than 3 pre-periods");
  PlaceboResult out;
  out.placebo_time = placebo_time;
  out.placebo_t0 = t0;
  out.panel = truncate_panel(p, p.t0, t0);
  out.result = estimate_panel(out.panel, spec, threads);
  return out;
}

}  // namespace panelctrl

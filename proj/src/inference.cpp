#include "panelctrl/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "panelctrl/error.hpp"
#include "panelctrl/parallel.hpp"

namespace panelctrl {

std::string_view interval_method_name(IntervalMethod m) noexcept {
  return m == IntervalMethod::full_conformal ? "conformal" : "jackknife+";
}

PredictionInterval convert_target(const PredictionInterval& pi, IntervalTarget target) {
  if (pi.target == target) return pi;
  PredictionInterval out = pi;
  out.target = target;
  out.lower = pi.observed - pi.upper;
  out.upper = pi.observed - pi.lower;
  return out;
}

namespace {

double fixed_lambda(const EstimatorSpec& spec) {
  if (!spec.uses_lambda()) return 0.0;
  if (!spec.lambda)
    throw Error(ErrorCode::invalid_argument,
                "inference needs a fixed lambda; resolve it before calling");
  return *spec.lambda;
}

void check_period(const PanelBlocks& b, Eigen::Index k) {
  if (k < 0 || k >= b.n_post())
    throw Error(ErrorCode::invalid_argument, "post period index out of range");
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw Error(ErrorCode::invalid_argument, "alpha must lie in (0, 1)");
}

}  // namespace

double conformal_p(const PanelBlocks& b, const std::optional<CovariatePanel>& cov,
                   const EstimatorSpec& spec, double tau0, Eigen::Index post_period) {
  check_period(b, post_period);
  const double lambda = fixed_lambda(spec);
  const PanelBlocks raw = uncenter(b);
  const auto t0 = raw.n_pre();

  Eigen::VectorXd x1(t0 + 1);
  x1 << raw.x1, raw.y1_post[post_period] - tau0;
  Eigen::MatrixXd x0(raw.n_controls(), t0 + 1);
  x0 << raw.x0, raw.y0_post.col(post_period);
  const PanelBlocks ab =
      recentered(x1, x0, Eigen::VectorXd::Constant(1, x1[t0]), raw.y0_post.col(post_period));
  const Eigen::VectorXd u = FitPath(ab, cov, spec).estimate(lambda).gap_pre;

  const double post = std::abs(u[t0]);
  int count = 0;
  for (Eigen::Index t = 0; t < t0; ++t)
    if (post <= std::abs(u[t])) ++count;
  return static_cast<double>(count + 1) / static_cast<double>(t0 + 1);
}

ConformalScan conformal_scan(const PanelBlocks& b, const std::optional<CovariatePanel>& cov,
                             const EstimatorSpec& spec, const std::vector<double>& grid,
                             Eigen::Index post_period, int threads) {
  ConformalScan s;
  s.grid = grid;
  s.pvalues.assign(grid.size(), 0.0);
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    s.pvalues[i] = conformal_p(b, cov, spec, grid[i], post_period);
  });
  return s;
}

PredictionInterval conformal_interval(const PanelBlocks& b,
                                      const std::optional<CovariatePanel>& cov,
                                      const EstimatorSpec& spec, double alpha,
                                      Eigen::Index post_period, std::vector<double> grid,
                                      int threads) {
  check_alpha(alpha);
  check_period(b, post_period);
  const double lambda = fixed_lambda(spec);

  PredictionInterval pi;
  pi.level = 1.0 - alpha;
  pi.method = IntervalMethod::full_conformal;
  pi.target = IntervalTarget::effect;
  pi.post_period = post_period;
  pi.observed = b.y1_post[post_period];

  const bool adaptive = grid.empty();
  constexpr int kPoints = 101;
  constexpr int kMaxWidenings = 10;
  double center = 0.0, half = 0.0;
  if (adaptive) {
    const AugEstimate est = FitPath(b, cov, spec).estimate(lambda);
    center = est.att[post_period];
    const double rms = std::sqrt(est.gap_pre.squaredNorm() / double(est.gap_pre.size()));
    half = 5.0 * rms;
    if (!(half > 0.0)) half = 1e-6 * std::max(1.0, std::abs(center));
  } else {
    std::sort(grid.begin(), grid.end());
  }

  ConformalScan scan;
  for (;;) {
    if (adaptive) {
      grid.resize(kPoints);
      for (int i = 0; i < kPoints; ++i) grid[i] = center - half + 2.0 * half * i / (kPoints - 1);
    }
    scan = conformal_scan(b, cov, spec, grid, post_period, threads);
    const bool edge = !scan.pvalues.empty() &&
                      (scan.pvalues.front() >= alpha || scan.pvalues.back() >= alpha);
    if (!adaptive || !edge || pi.widenings >= kMaxWidenings) break;
    half *= 2.0;
    ++pi.widenings;
  }

  std::size_t first = grid.size(), last = 0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (scan.pvalues[i] >= alpha) {
      first = std::min(first, i);
      last = i;
    }
  if (first == grid.size())
    throw Error(ErrorCode::empty_accept_set,
                "no grid value was accepted at this alpha; use a wider or finer tau grid");
  for (std::size_t i = first; i <= last; ++i)
    if (scan.pvalues[i] < alpha) pi.disconnected = true;
  pi.lower = grid[first];
  pi.upper = grid[last];
  // Still accepted after every widening: the region has no finite end there.
  if (adaptive && first == 0) pi.lower = -std::numeric_limits<double>::infinity();
  if (adaptive && last + 1 == grid.size()) pi.upper = std::numeric_limits<double>::infinity();
  pi.grid_points = grid.size();
  pi.grid_step = grid.size() > 1 ? (grid.back() - grid.front()) / double(grid.size() - 1) : 0.0;
  return pi;
}

double order_statistic(std::vector<double> v, std::size_t k) {
  if (k < 1 || k > v.size()) throw Error(ErrorCode::invalid_argument, "order statistic out of range");
  auto it = v.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(v.begin(), it, v.end());
  return *it;
}

std::pair<double, double> jackknife_bounds(const std::vector<double>& prediction,
                                           const std::vector<double>& residual, double alpha,
                                           std::size_t* k_lower, std::size_t* k_upper) {
  check_alpha(alpha);
  const std::size_t n = prediction.size();
  if (n == 0 || residual.size() != n)
    throw Error(ErrorCode::invalid_argument, "jackknife+ needs matching non-empty inputs");
  // Ranks over T = n + 1 periods, clamped to the n available values.
  const double big_t = static_cast<double>(n + 1);
  const auto clamp = [n](double k) {
    return static_cast<std::size_t>(std::clamp(k, 1.0, static_cast<double>(n)));
  };
  const std::size_t kl = clamp(std::floor(0.5 * alpha * big_t));
  const std::size_t ku = clamp(std::ceil((1.0 - 0.5 * alpha) * big_t));
  std::vector<double> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = prediction[i] - std::abs(residual[i]);
    hi[i] = prediction[i] + std::abs(residual[i]);
  }
  if (k_lower) *k_lower = kl;
  if (k_upper) *k_upper = ku;
  return {order_statistic(lo, kl), order_statistic(hi, ku)};
}

PredictionInterval jackknife_plus(const PanelBlocks& b, const std::optional<CovariatePanel>& cov,
                                  const EstimatorSpec& spec, double alpha,
                                  Eigen::Index post_period, int threads,
                                  JackknifeDetail* detail) {
  check_alpha(alpha);
  check_period(b, post_period);
  const double lambda = fixed_lambda(spec);
  const auto t0 = b.n_pre();
  if (t0 < 3) throw Error(ErrorCode::too_few_periods, "jackknife+ needs T0 >= 3");
  const PanelBlocks raw = uncenter(b);

  std::vector<double> pred(static_cast<std::size_t>(t0)), resid(static_cast<std::size_t>(t0));
  parallel_for(static_cast<std::size_t>(t0), threads, [&](std::size_t ti) {
    const auto t = static_cast<Eigen::Index>(ti);
    Eigen::VectorXd x1(t0 - 1);
    Eigen::MatrixXd x0(raw.n_controls(), t0 - 1);
    for (Eigen::Index s = 0, j = 0; s < t0; ++s) {
      if (s == t) continue;
      x1[j] = raw.x1[s];
      x0.col(j++) = raw.x0.col(s);
    }
    Eigen::VectorXd y1(2);
    y1 << raw.x1[t], raw.y1_post[post_period];
    Eigen::MatrixXd y0(raw.n_controls(), 2);
    y0 << raw.x0.col(t), raw.y0_post.col(post_period);
    const AugEstimate e = FitPath(recentered(x1, x0, y1, y0), cov, spec).estimate(lambda);
    resid[ti] = std::abs(raw.x1[t] - e.counterfactual[0]);
    pred[ti] = e.counterfactual[1];
  });

  PredictionInterval pi;
  pi.level = 1.0 - alpha;
  pi.method = IntervalMethod::jackknife_plus;
  pi.target = IntervalTarget::counterfactual;
  pi.post_period = post_period;
  pi.observed = b.y1_post[post_period];
  std::size_t kl = 0, ku = 0;
  std::tie(pi.lower, pi.upper) = jackknife_bounds(pred, resid, alpha, &kl, &ku);
  if (detail) {
    detail->loo_prediction = pred;
    detail->loo_residual = resid;
    detail->k_lower = kl;
    detail->k_upper = ku;
  }
  return pi;
}

}  // namespace panelctrl

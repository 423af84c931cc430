#pragma once

// Calibrated data-generating processes and a Monte Carlo harness that
// measures estimator error and interval coverage under a zero effect.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "panelctrl/estimator.hpp"
#include "panelctrl/panel.hpp"

namespace panelctrl {

enum class DgpKind { factor, fixed_effects, ar3 };

std::string_view dgp_name(DgpKind k) noexcept;
DgpKind parse_dgp(std::string_view s);

// Time effects nu (T) and latent factors mu (T x J).
struct FactorFixture {
  Eigen::VectorXd nu;
  Eigen::MatrixXd mu;

  Eigen::Index periods() const { return nu.size(); }
  Eigen::Index factors() const { return mu.cols(); }
};

// CSV with header t,nu,mu1,...,muJ.
FactorFixture load_factor_fixture(std::istream& in);
FactorFixture load_factor_fixture(const std::string& path);

// Linear interpolation of the trajectories onto n evenly spaced points.
FactorFixture resample(const FactorFixture& f, Eigen::Index n);

struct DgpParams {
  DgpKind kind = DgpKind::factor;
  FactorFixture fixture;

  double alpha_mean = 0.0;
  double alpha_sd = 1.0;
  Eigen::MatrixXd phi_cov;  // J x J
  double sigma_eps = 0.1;
  double noise_multiplier = 1.0;
  double theta = 0.5;

  double ar_intercept = 0.0;
  Eigen::Vector3d ar_coefs = Eigen::Vector3d::Zero();
  int burn_in = 200;

  Eigen::Index n = 20;
  Eigen::Index t = 30;
  Eigen::Index t0 = 25;

  // Throws on an invalid covariance, negative noise, a non-stationary AR
  // polynomial or inconsistent dimensions.
  void validate() const;

  // Post-period index of the estimand: last period, or T0 + 1 for AR.
  Eigen::Index estimand_period() const { return kind == DgpKind::ar3 ? 0 : t - t0 - 1; }
};

// Desk-scale defaults per family. Selection strength is 1/2 for factor,
// 3/2 for fixed effects and 5/2 for AR.
DgpParams default_dgp(DgpKind kind, FactorFixture fixture);

// Independent stream per replication.
std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep);

struct DrawnPanel {
  PanelData panel;
  Eigen::VectorXd selection_prob;
};

DrawnPanel draw_panel(const DgpParams& params, std::mt19937_64& rng);
DrawnPanel draw_panel(const DgpParams& params, std::uint64_t seed, std::uint64_t rep = 0);

struct BankEntry {
  std::string label;
  EstimatorSpec spec;
};

// scm, ridge, ascm_ridge (CV, min rule), fixed_effects, demeaned_scm.
std::vector<BankEntry> default_bank();

struct McOptions {
  int reps = 200;
  std::uint64_t seed = 1;
  int threads = 1;
  std::ostream* raw_log = nullptr;  // per-replication estimates as CSV
};

struct McRow {
  std::string label;
  int reps = 0;
  double bias = 0.0;
  double bias_se = 0.0;
  double abs_bias_pct = 0.0;  // |bias| / |SCM bias| * 100
  double rmse = 0.0;
  double rmse_se = 0.0;
  double rmse_pct = 0.0;
  std::array<double, 4> quartile_bias{};  // by SCM pre-fit quartile, best fit first
};

struct McReport {
  DgpKind dgp = DgpKind::factor;
  int reps_requested = 0;
  int reps_used = 0;
  int dropped = 0;
  std::uint64_t seed = 0;
  std::vector<McRow> rows;
  std::array<int, 4> quartile_counts{};
  Eigen::MatrixXd estimates;  // used replication x estimator
  Eigen::VectorXd scm_fit;    // RMS of the SCM pre-period gap per replication
  std::vector<int> quartile;  // 0..3 per replication

  const McRow& row(std::string_view label) const;
};

// The bank must contain an entry labelled "scm".
McReport run_monte_carlo(const DgpParams& params, const std::vector<BankEntry>& bank,
                         const McOptions& opts);

void write_mc_csv(std::ostream& os, const McReport& r);
nlohmann::json mc_json(const McReport& r);

struct CoverageReport {
  int reps_requested = 0;
  int reps_used = 0;
  int dropped = 0;
  int conformal_covered = 0;
  int jackknife_covered = 0;
  int conformal_unbounded = 0;   // intervals with an infinite endpoint
  double conformal_width = 0.0;  // mean over bounded intervals
  double jackknife_width = 0.0;
  double alpha = 0.05;

  double conformal_coverage() const { return reps_used ? double(conformal_covered) / reps_used : 0.0; }
  double jackknife_coverage() const { return reps_used ? double(jackknife_covered) / reps_used : 0.0; }
};

// Coverage of Y_1(T0+1)(0) by both conformal intervals. Lambda is chosen
// by cross-validation in each replication when the spec leaves it unset.
CoverageReport run_coverage(const DgpParams& params, const EstimatorSpec& spec, int reps,
                            double alpha, std::uint64_t seed, int threads = 1);

}  // namespace panelctrl

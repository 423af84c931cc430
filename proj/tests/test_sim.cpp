#include <doctest.h>

#include <set>
#include <sstream>

#include "panelctrl/error.hpp"
#include "panelctrl/sim.hpp"

using namespace panelctrl;

namespace {

FactorFixture fixture() {
  return load_factor_fixture(std::string(PANELCTRL_DATA_DIR) + "/fixtures/factors.csv");
}

std::string panel_text(const PanelData& p) {
  std::ostringstream os;
  write_long_csv(os, p);
  return os.str();
}

}  // namespace

TEST_CASE("fixture loading and resampling") {
  const FactorFixture f = fixture();
  CHECK(f.periods() == 105);
  CHECK(f.factors() == 3);
  const FactorFixture r = resample(f, 30);
  CHECK(r.periods() == 30);
  CHECK(r.nu[0] == f.nu[0]);
  CHECK(r.nu[29] == doctest::Approx(f.nu[104]).epsilon(1e-12));
  CHECK((r.mu.row(29) - f.mu.row(104)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(resample(f, 105).mu == f.mu);

  std::istringstream bad_header("x,nu\n1,2\n");
  CHECK_THROWS_AS(load_factor_fixture(bad_header), Error);
  std::istringstream bad_num("t,nu,mu1\n1,0.1,abc\n2,0.2,0.3\n");
  CHECK_THROWS_AS(load_factor_fixture(bad_num), Error);
  CHECK_THROWS_AS(load_factor_fixture(std::string("/nonexistent/f.csv")), Error);
}

TEST_CASE("parameter validation") {
  DgpParams p = default_dgp(DgpKind::factor, fixture());
  p.validate();
  DgpParams bad = p;
  bad.phi_cov(0, 1) = 0.3;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = p;
  bad.phi_cov(0, 0) = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = p;
  bad.sigma_eps = -0.1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = p;
  bad.t0 = bad.t;
  CHECK_THROWS_AS(bad.validate(), Error);

  DgpParams ar = default_dgp(DgpKind::ar3, fixture());
  ar.validate();
  ar.ar_coefs = Eigen::Vector3d(0.7, 0.2, 0.15);
  CHECK_THROWS_AS(ar.validate(), Error);
  CHECK_THROWS_AS(parse_dgp("garch"), Error);
  CHECK(parse_dgp("ar3") == DgpKind::ar3);
}

TEST_CASE("degenerate dgp gives identical units and exact estimates") {
  FactorFixture f = fixture();
  f.mu.resize(f.periods(), 0);
  DgpParams p;
  p.kind = DgpKind::fixed_effects;
  p.fixture = f;
  p.alpha_sd = 0.0;
  p.sigma_eps = 0.0;
  const DrawnPanel d = draw_panel(p, 3);
  for (Eigen::Index i = 1; i < d.panel.n_units(); ++i)
    CHECK((d.panel.outcomes.row(i) - d.panel.outcomes.row(0)).cwiseAbs().maxCoeff() == 0.0);

  McOptions o;
  o.reps = 5;
  o.seed = 4;
  const McReport r = run_monte_carlo(p, default_bank(), o);
  CHECK(r.dropped == 0);
  CHECK(r.estimates.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("uniform selection at theta = 0") {
  DgpParams p = default_dgp(DgpKind::factor, fixture());
  p.theta = 0.0;
  p.n = 10;
  const int draws = 5000;
  std::vector<int> counts(10, 0);
  auto rng = replication_rng(99, 0);
  for (int k = 0; k < draws; ++k) {
    const DrawnPanel d = draw_panel(p, rng);
    CHECK(d.selection_prob.isApproxToConstant(0.1, 1e-12));
    ++counts[std::size_t(d.panel.treated_index)];
  }
  const double se = std::sqrt(0.1 * 0.9 / draws);
  for (int c : counts) CHECK(std::abs(double(c) / draws - 0.1) <= 3.0 * se);
}

TEST_CASE("selection favours high scores") {
  DgpParams p = default_dgp(DgpKind::fixed_effects, fixture());
  p.theta = 3.0;
  const DrawnPanel d = draw_panel(p, 5);
  // Probabilities increase with the unit effect, read off the first period.
  const Eigen::VectorXd first = d.panel.outcomes.col(0);
  Eigen::Index hi = 0, lo = 0;
  first.maxCoeff(&hi);
  first.minCoeff(&lo);
  CHECK(d.selection_prob[hi] > d.selection_prob[lo]);
  CHECK(d.selection_prob.sum() == doctest::Approx(1.0));
}

TEST_CASE("draws are deterministic") {
  for (auto kind : {DgpKind::factor, DgpKind::fixed_effects, DgpKind::ar3}) {
    const DgpParams p = default_dgp(kind, fixture());
    CHECK(panel_text(draw_panel(p, 17, 3).panel) == panel_text(draw_panel(p, 17, 3).panel));
    CHECK(panel_text(draw_panel(p, 17, 3).panel) != panel_text(draw_panel(p, 17, 4).panel));
    const DrawnPanel d = draw_panel(p, 1);
    CHECK(d.panel.n_units() == 20);
    CHECK(d.panel.n_periods() == 30);
    CHECK(d.panel.t0 == 25);
  }
}

TEST_CASE("Monte Carlo report invariants") {
  const DgpParams p = default_dgp(DgpKind::factor, fixture());
  McOptions o;
  o.reps = 24;
  o.seed = 5;
  std::ostringstream raw;
  o.raw_log = &raw;
  const McReport a = run_monte_carlo(p, default_bank(), o);
  o.threads = 3;
  o.raw_log = nullptr;
  const McReport b = run_monte_carlo(p, default_bank(), o);

  std::ostringstream ca, cb;
  write_mc_csv(ca, a);
  write_mc_csv(cb, b);
  CHECK(ca.str() == cb.str());
  CHECK(a.row("scm").abs_bias_pct == 100.0);
  CHECK(a.row("scm").rmse_pct == 100.0);
  CHECK(a.reps_used + a.dropped == 24);

  // Sharp null: bias is the mean estimate.
  for (Eigen::Index e = 0; e < a.estimates.cols(); ++e)
    CHECK(a.rows[std::size_t(e)].bias == doctest::Approx(a.estimates.col(e).mean()).epsilon(1e-12));

  // Quartiles partition the replications and respect the SCM fit order.
  CHECK(a.quartile_counts[0] + a.quartile_counts[1] + a.quartile_counts[2] + a.quartile_counts[3] ==
        a.reps_used);
  for (int q : a.quartile_counts) CHECK(q == 6);
  for (Eigen::Index i = 0; i < a.reps_used; ++i)
    for (Eigen::Index j = 0; j < a.reps_used; ++j)
      if (a.quartile[std::size_t(i)] < a.quartile[std::size_t(j)])
        CHECK(a.scm_fit[i] <= a.scm_fit[j]);

  std::istringstream lines(raw.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) ++n;
  CHECK(n == a.reps_used + 1);

  const auto j = mc_json(a);
  CHECK(j["estimators"].size() == 5);
  CHECK(j["dgp"] == "factor");
}

TEST_CASE("bank must contain scm and failures are counted") {
  const DgpParams p = default_dgp(DgpKind::factor, fixture());
  McOptions o;
  o.reps = 3;
  std::vector<BankEntry> bank = default_bank();
  bank.erase(bank.begin());
  CHECK_THROWS_AS(run_monte_carlo(p, bank, o), Error);

  bank = default_bank();
  bank[2].spec.lambda = -1.0;  // fails in every replication
  try {
    run_monte_carlo(p, bank, o);
    FAIL("expected every replication to fail");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("every replication") != std::string::npos);
  }
}

TEST_CASE("coverage study runs and is deterministic") {
  const DgpParams p = default_dgp(DgpKind::factor, fixture());
  EstimatorSpec spec;
  spec.lambda = 1.0;
  const CoverageReport a = run_coverage(p, spec, 6, 0.1, 3, 1);
  const CoverageReport b = run_coverage(p, spec, 6, 0.1, 3, 2);
  CHECK(a.reps_used == 6);
  CHECK(a.conformal_covered == b.conformal_covered);
  CHECK(a.jackknife_covered == b.jackknife_covered);
  CHECK(a.conformal_width == b.conformal_width);
  CHECK(a.jackknife_width > 0.0);
}

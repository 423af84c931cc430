// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance <panelctrl-binary> <data-dir> <scratch-dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "panelctrl/covariates.hpp"
#include "panelctrl/io.hpp"
#include "panelctrl/ridge_augment.hpp"
#include "panelctrl/scm.hpp"
#include "panelctrl/selection.hpp"
#include "panelctrl/sim.hpp"
#include "support.hpp"

using namespace panelctrl;
using testsupport::log_uniform;
using testsupport::random_blocks;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

int failures = 0;

void report(int id, const std::string& name, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << "exception: " << e.what() << "; ";
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s criterion %d (%s): %s[%.2fs]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
              o.detail.str().c_str(), secs);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string g(double v) { return io::format_double(v); }

struct Instance {
  PanelBlocks b;
  double lambda;
};

// Shared random instances for the ridge identities: N0 <= 20, T0 <= 10,
// lambda log-uniform on [1e-2, 1e4].
std::vector<Instance> ridge_instances() {
  std::mt19937_64 rng(20210401);
  std::uniform_int_distribution<int> n0(2, 20), t0(1, 10), post(1, 3);
  std::vector<Instance> out;
  for (int i = 0; i < 100; ++i) {
    const int n = n0(rng), t = t0(rng), p = post(rng);
    PanelBlocks b = random_blocks(n, t, p, rng);
    out.push_back({std::move(b), log_uniform(1e-2, 1e4, rng)});
  }
  return out;
}

double sample_sd(const Eigen::VectorXd& v) {
  return std::sqrt((v.array() - v.mean()).square().sum() / double(v.size() - 1));
}

FactorFixture fixture(const std::string& data) {
  return load_factor_fixture(data + "/fixtures/factors.csv");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 4) {
    std::cerr << "usage: acceptance <panelctrl> <data-dir> <scratch-dir>\n";
    return 2;
  }
  const std::string cli = argv[1];
  const std::string data = argv[2];
  const fs::path scratch = argv[3];

  const std::vector<Instance> inst = ridge_instances();
  std::vector<DonorWeights> scm;
  for (const auto& in : inst) scm.push_back(solve_scm(in.b, ScmConfig{}));

  report(1, "penalized form of ridge ASCM", [&](Outcome& o) {
    const auto start = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::size_t i = 0; i < inst.size(); ++i) {
      const DonorWeights aug = augment_weights(scm[i], inst[i].b, inst[i].lambda);
      const PenalizedFormReport r = verify_penalized_form(aug, scm[i].values, inst[i].b, inst[i].lambda);
      worst = std::max(worst, r.residual);
      o.require(r.residual <= 1e-8, "instance " + std::to_string(i) + " residual " + g(r.residual));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(secs < 10.0, "runtime " + g(secs) + " s");
    o.detail << "max stationarity residual " << g(worst) << " <= 1e-8 over 100 instances; ";
  });

  report(2, "ridge weighting identity", [&](Outcome& o) {
    double worst = 0.0, worst_inf = 0.0;
    for (std::size_t i = 0; i < inst.size(); ++i) {
      const PanelBlocks& b = inst[i].b;
      const ControlSVD svd = control_svd(b);
      const DonorWeights w = ridge_weights(b, svd, inst[i].lambda);
      for (Eigen::Index k = 0; k < b.n_post(); ++k) {
        const double weighting = w.values.dot(b.y0_post.col(k));
        const double reg = fit_ridge(b, svd, inst[i].lambda, k).predict(b.x1);
        worst = std::max(worst, std::abs(weighting - reg));
      }
      const DonorWeights inf = ridge_weights(b, svd, 1e12);
      const double u = 1.0 / double(b.n_controls());
      worst_inf = std::max(worst_inf, (inf.values.array() - u).abs().maxCoeff());
    }
    o.require(worst <= 1e-10, "identity gap " + g(worst));
    o.require(worst_inf <= 1e-6, "large-lambda gap " + g(worst_inf));
    o.detail << "max |weighting - eta0 - x1'eta| " << g(worst) << " <= 1e-10, max |w - 1/N0| at 1e12 "
             << g(worst_inf) << " <= 1e-6; ";
  });

  report(3, "SVD imbalance identity, bound and monotonicity", [&](Outcome& o) {
    double worst_id = 0.0, worst_bound = -1e300, worst_mono = -1e300;
    for (std::size_t i = 0; i < inst.size(); ++i) {
      const PanelBlocks& b = inst[i].b;
      const SvdImbalance s = svd_imbalance(scm[i], b, inst[i].lambda);
      const double scm_imb = imbalance(b, scm[i]);
      const DonorWeights aug = augment_weights(scm[i], b, inst[i].lambda);
      const double aug_imb = imbalance(b, aug);
      worst_id = std::max(worst_id, std::abs(s.direct - s.via_svd));
      worst_bound = std::max(worst_bound, s.direct - s.upper_bound);
      worst_mono = std::max(worst_mono, aug_imb - scm_imb);
      o.require(std::abs(s.direct - s.via_svd) <= 1e-8, "identity at " + std::to_string(i));
      o.require(s.direct <= s.upper_bound + 1e-12, "bound at " + std::to_string(i));
      o.require(aug_imb <= scm_imb + 1e-12, "monotonicity at " + std::to_string(i));
    }
    o.detail << "max |direct - svd| " << g(worst_id) << " <= 1e-8, max(direct - bound) "
             << g(worst_bound) << ", max(aug - scm imbalance) " << g(worst_mono) << "; ";
  });

  report(4, "augmented weight norm bound", [&](Outcome& o) {
    double worst = -1e300;
    for (std::size_t i = 0; i < inst.size(); ++i) {
      const WeightNormBound w = weight_norm_bound(scm[i], inst[i].b, inst[i].lambda);
      worst = std::max(worst, w.norm - w.bound);
      o.require(w.norm <= w.bound * (1.0 + 1e-12), "instance " + std::to_string(i));
    }
    o.detail << "max(norm - bound) " << g(worst) << " <= 0; ";
  });

  report(5, "two-step covariate balance and bound", [&](Outcome& o) {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> n0(5, 20), t0(1, 10);
    double worst_z = 0.0, worst_b = -1e300;
    ScmConfig cfg;
    for (int i = 0; i < 100; ++i) {
      const Eigen::Index k = 1 + i % 3;
      const PanelBlocks b = random_blocks(n0(rng), t0(rng), 1, rng);
      const CovariatePanel cov = make_covariate_panel(
          testsupport::normal_vector(k, rng, 2.0), testsupport::normal_matrix(b.n_controls(), k, rng),
          {}, b, false);
      const double lambda = log_uniform(1e-2, 1e4, rng);
      const TwoStepResult ts = two_step_estimate(b, cov, lambda, cfg);
      const DonorWeights& w = ts.estimate.weights;
      const double zgap = (cov.z1 - cov.z0.transpose() * w.values).cwiseAbs().maxCoeff();
      const TwoStepBound tb = two_step_bound(ts.scm_weights, w, ts.residualized, lambda);
      worst_z = std::max(worst_z, zgap);
      worst_b = std::max(worst_b, tb.imbalance - tb.bound);
      o.require(zgap <= 1e-8, "Z balance at " + std::to_string(i) + ": " + g(zgap));
      o.require(tb.imbalance <= tb.bound + 1e-12, "bound at " + std::to_string(i));
    }
    o.detail << "max Z gap " << g(worst_z) << " <= 1e-8, max(imbalance - bound) " << g(worst_b)
             << " over 100 instances with K in {1,2,3}; ";
  });

  report(6, "de-meaned SCM forms agree", [&](Outcome& o) {
    std::mt19937_64 rng(6);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const PanelBlocks b = random_blocks(2 + i % 19, 1 + i % 10, 2, rng, i % 2 == 0);
      const DonorWeights w = solve_scm(b, ScmConfig{});
      for (Eigen::Index k = 0; k < b.n_post(); ++k) {
        const DemeanedForms f = demeaned_effect_forms(w, b, k);
        worst = std::max(worst, std::abs(f.unit_mean_form - f.period_average_form));
      }
    }
    o.require(worst <= 1e-12, "gap " + g(worst));
    o.detail << "max form gap " << g(worst) << " <= 1e-12; ";
  });

  report(7, "SCM solver against grid oracle and KKT", [&](Outcome& o) {
    std::mt19937_64 rng(77);
    double worst_grid = 0.0, worst_below = 0.0;
    constexpr int kSteps = 1000;  // resolution 1e-3
    for (int i = 0; i < 30; ++i) {
      const Eigen::Index n0 = 2 + i % 2;
      const PanelBlocks b = make_blocks(testsupport::normal_vector(1 + i % 4, rng),
                                        testsupport::normal_matrix(n0, 1 + i % 4, rng),
                                        Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(n0, 1), false);
      ScmConfig cfg;
      cfg.zeta = 0.0;
      const DonorWeights w = solve_scm(b, cfg);
      const double solver = testsupport::plain_objective(b, w.values, 0.0);
      double best = std::numeric_limits<double>::infinity();
      Eigen::VectorXd x(n0);
      for (int a = 0; a <= kSteps; ++a) {
        if (n0 == 2) {
          x << a / double(kSteps), 1.0 - a / double(kSteps);
          best = std::min(best, testsupport::plain_objective(b, x, 0.0));
          continue;
        }
        for (int c = 0; a + c <= kSteps; ++c) {
          x << a / double(kSteps), c / double(kSteps), (kSteps - a - c) / double(kSteps);
          best = std::min(best, testsupport::plain_objective(b, x, 0.0));
        }
      }
      worst_grid = std::max(worst_grid, solver - best);
      worst_below = std::max(worst_below, best - solver);
      o.require(std::abs(solver - best) <= 1e-5 || solver < best, "grid gap at " + std::to_string(i));
    }
    double worst_kkt = 0.0;
    for (int i = 0; i < 50; ++i) {
      const PanelBlocks b = random_blocks(4 + i % 30, 2 + i % 20, 1, rng);
      const ScmSolution s = solve_scm_detailed(b, ScmConfig{});
      worst_kkt = std::max(worst_kkt, s.kkt_residual);
      o.require(s.kkt_residual <= 1e-8, "KKT at " + std::to_string(i));
    }
    o.detail << "max(solver - grid) " << g(worst_grid) << " <= 1e-5 (solver beats grid by up to "
             << g(worst_below) << "), max KKT residual " << g(worst_kkt) << " <= 1e-8; ";
  });

  report(8, "conformal coverage, factor DGP", [&](Outcome& o) {
    const auto start = std::chrono::steady_clock::now();
    const DgpParams p = default_dgp(DgpKind::factor, fixture(data));
    EstimatorSpec spec;
    spec.kind = EstimatorKind::ascm_ridge;
    const CoverageReport c = run_coverage(p, spec, 500, 0.05, 7, 1);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double jk = c.jackknife_coverage(), cf = c.conformal_coverage();
    o.require(jk >= 0.92 && jk <= 0.99, "jackknife+ coverage " + g(jk));
    o.require(cf >= 0.90 && cf <= 0.98, "conformal coverage " + g(cf));
    o.require(secs < 600.0, "runtime " + g(secs) + " s");
    o.detail << "R=" << c.reps_used << " (dropped " << c.dropped << "), jackknife+ " << g(jk)
             << " in [0.92, 0.99], full conformal " << g(cf) << " in [0.90, 0.98]; ";
  });

  report(9, "simulation bias reduction", [&](Outcome& o) {
    McOptions opts;
    opts.reps = 200;
    opts.seed = 7;
    const McReport f = run_monte_carlo(default_dgp(DgpKind::factor, fixture(data)), default_bank(), opts);
    const double ratio = std::abs(f.row("ascm_ridge").bias) / std::abs(f.row("scm").bias);
    o.require(ratio <= 0.5, "ridge ASCM |bias| ratio " + g(ratio));

    const McReport fe =
        run_monte_carlo(default_dgp(DgpKind::fixed_effects, fixture(data)), default_bank(), opts);
    const McRow& dm = fe.row("demeaned_scm");
    const McRow& fx = fe.row("fixed_effects");
    const double diff = std::abs(dm.bias - fx.bias);
    const double se = std::sqrt(dm.bias_se * dm.bias_se + fx.bias_se * fx.bias_se);
    o.require(diff <= 2.0 * se, "de-meaned vs FE gap " + g(diff) + " > 2 SE " + g(2.0 * se));
    o.detail << "factor: SCM bias " << g(f.row("scm").bias) << ", ridge ASCM bias "
             << g(f.row("ascm_ridge").bias) << ", ratio " << g(ratio) << " <= 0.5; fixed effects: |"
             << g(dm.bias) << " - " << g(fx.bias) << "| = " << g(diff) << " <= 2 SE " << g(2.0 * se)
             << "; ";
  });

  report(10, "error bound sketch shape", [&](Outcome& o) {
    DgpParams p = default_dgp(DgpKind::factor, fixture(data));
    p.n = 50;
    p.t = 105;
    p.t0 = 89;
    PanelData pd = draw_panel(p, 2012, 0).panel;
    const double sd = sample_sd(pd.outcomes.row(pd.treated_index).head(pd.t0).transpose());
    pd.outcomes /= sd;
    const PanelBlocks b = split_and_center(pd, true);
    const DonorWeights w = solve_scm(b, ScmConfig{});
    std::vector<double> grid;
    for (int k = 0; k <= 40; ++k) grid.push_back(std::pow(10.0, 4.0 - 0.2 * k));
    const double noise = p.sigma_eps / sd;
    const std::vector<double> sigma = {0.5 * noise, noise, 2.0 * noise, 4.0 * noise};
    const BoundSketch s = bound_sketch(w, b, grid, sigma);
    double prev = 0.0;
    for (std::size_t si = 0; si < sigma.size(); ++si) {
      std::size_t best = 0;
      for (std::size_t l = 1; l < grid.size(); ++l)
        if (s.at(si, l).total_pct < s.at(si, best).total_pct) best = l;
      const bool interior = best > 0 && best + 1 < grid.size() && s.at(si, best).total_pct < 100.0;
      o.require(interior, "no interior minimum at sigma " + g(sigma[si]));
      if (si > 0) o.require(grid[best] > prev, "argmin not increasing at sigma " + g(sigma[si]));
      prev = grid[best];
      o.detail << "sigma " << g(sigma[si]) << ": min " << g(s.at(si, best).total_pct) << "% at lambda "
               << g(grid[best]) << "; ";
    }
    const CvResult cv = loo_cv(b, std::nullopt, EstimatorSpec{}, default_lambda_grid(b));
    o.detail << "CV lambda_min " << g(cv.lambda_min) << ", lambda_1se " << g(cv.lambda_1se) << "; ";
  });

  report(11, "CLI determinism", [&](Outcome& o) {
    const std::string panel = data + "/fixtures/example_panel.csv";
    const std::string base = "--input " + panel + " --treated u01 --treatment-time 16 --seed 7";
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"estimate", "estimate " + base + " --inference conformal --alpha 0.1"},
        {"estimate_jk", "estimate " + base + " --inference jackknife+ --covariates size,region"},
        {"cv", "cv " + base + " --select one-se"},
        {"placebo", "placebo " + base + " --placebo-times 11,13 --inference jackknife+"},
        {"diagnose", "diagnose " + base + " --covariates size,region"},
        {"simulate", "simulate --dgp factor --reps 200 --seed 7"},
        {"simulate_cov", "simulate --dgp ar3 --reps 20 --seed 7 --coverage --threads 2"},
    };
    int files = 0;
    for (const auto& [name, args] : commands) {
      std::vector<fs::path> dirs;
      for (int run = 0; run < 2; ++run) {
        const fs::path dir = scratch / (name + "_" + std::to_string(run));
        fs::remove_all(dir);
        const std::string cmd = "\"" + cli + "\" " + args + " --out \"" + dir.string() + "\" > /dev/null 2>&1";
        const int rc = std::system(cmd.c_str());
        o.require(rc == 0, name + " exited with " + std::to_string(rc));
        dirs.push_back(dir);
      }
      for (const auto& entry : fs::directory_iterator(dirs[0])) {
        const fs::path other = dirs[1] / entry.path().filename();
        const bool same = fs::exists(other) &&
                          io::read_text_file(entry.path()) == io::read_text_file(other);
        o.require(same, name + "/" + entry.path().filename().string() + " differs");
        ++files;
      }
    }
    o.detail << commands.size() << " commands, " << files << " files byte-identical across two runs; ";
  });

  std::printf("%s: %d of 11 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}

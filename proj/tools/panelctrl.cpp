#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "panelctrl/cli.hpp"
#include "panelctrl/error.hpp"

using namespace panelctrl;

int main(int argc, char** argv) {
  CLI::App app{"Augmented synthetic control estimation, inference and simulation"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  RunConfig cfg;
  std::string estimator = "ascm_ridge", select = "min", cv_mode = "leave-one";
  std::string cov_mode = "joint", inference = "none", dgp = "factor";
  std::optional<double> lambda;

  auto common = [&](CLI::App* s) {
    s->add_option("--threads", cfg.threads, "Worker thread cap")->check(CLI::PositiveNumber);
    s->add_option("--seed", cfg.seed, "Random seed");
    s->add_option("--out", cfg.out, "Output directory");
    s->add_option("--select", select, "Lambda rule")->check(CLI::IsMember({"min", "one-se"}));
    s->add_option("--alpha", cfg.alpha, "Miscoverage level");
  };
  auto panel = [&](CLI::App* s) {
    s->add_option("--input", cfg.input, "Long-format CSV: unit,time,outcome[,covariates]")->required();
    s->add_option("--treated", cfg.treated, "Treated unit label")->required();
    s->add_option("--treatment-time", cfg.treatment_time, "First treated period")->required();
    s->add_option("--estimator", estimator, "scm, ridge, ascm_ridge, fixed_effects, demeaned_scm");
    s->add_option("--lambda", lambda, "Fixed ridge penalty; omit to cross-validate");
    s->add_option("--cv-mode", cv_mode, "Held-out scheme")
        ->check(CLI::IsMember({"leave-one", "leave-future"}));
    s->add_option("--covariates", cfg.covariates, "Covariate columns")->delimiter(',');
    s->add_option("--covariate-mode", cov_mode, "Covariate handling")
        ->check(CLI::IsMember({"joint", "residualize"}));
    s->add_option("--inference", inference, "Interval method")
        ->check(CLI::IsMember({"conformal", "jackknife+", "none"}));
  };

  auto* est = app.add_subcommand("estimate", "Fit weights and write the effect path");
  panel(est);
  common(est);
  auto* cv = app.add_subcommand("cv", "Cross-validate the ridge penalty");
  panel(cv);
  common(cv);
  auto* plc = app.add_subcommand("placebo", "In-time placebo runs");
  panel(plc);
  common(plc);
  plc->add_option("--placebo-times", cfg.placebo_times, "Placebo treatment times")
      ->delimiter(',')
      ->required();
  auto* sim = app.add_subcommand("simulate", "Monte Carlo study under a sharp null");
  common(sim);
  sim->add_option("--dgp", dgp, "Data-generating process")
      ->check(CLI::IsMember({"factor", "fixed_effects", "ar3"}));
  sim->add_option("--reps", cfg.reps, "Replications")->check(CLI::PositiveNumber);
  sim->add_option("--fixture", cfg.fixture, "Factor fixture CSV");
  sim->add_flag("--full-scale", cfg.full_scale, "N = 50, T = 105, T0 = 89");
  sim->add_option("--noise-multiplier", cfg.noise_multiplier, "Scale on the noise sd");
  sim->add_flag("--coverage", cfg.coverage, "Also run the interval coverage study");
  auto* diag = app.add_subcommand("diagnose", "Closed-form checks and the error-bound sketch");
  panel(diag);
  common(diag);
  diag->add_option("--sigma", cfg.sigma, "Noise levels for the bound sketch")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorCode::invalid_argument);
  }

  try {
    const CLI::App* sub = app.get_subcommands().front();
    cfg.command = parse_command(sub->get_name());
    cfg.estimator = parse_estimator(estimator);
    cfg.rule = parse_lambda_rule(select);
    cfg.cv_mode = cv_mode == "leave-future" ? CvMode::leave_future : CvMode::leave_one;
    cfg.covariate_mode = parse_covariate_mode(cov_mode);
    cfg.inference = parse_inference(inference);
    cfg.dgp = parse_dgp(dgp);
    cfg.lambda = lambda;
  } catch (const Error& e) {
    std::cerr << "panelctrl: " << e.what() << '\n';
    return static_cast<int>(e.code());
  }

  const RunResult r = run(cfg);
  (r.exit_code == 0 ? std::cout : std::cerr) << "panelctrl " << r.message << '\n';
  return r.exit_code;
}

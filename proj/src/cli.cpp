#include "panelctrl/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "panelctrl/covariates.hpp"
#include "panelctrl/error.hpp"
#include "panelctrl/inference.hpp"
#include "panelctrl/io.hpp"
#include "panelctrl/log.hpp"
#include "panelctrl/selection.hpp"

namespace fs = std::filesystem;

namespace panelctrl {

std::string_view command_name(Command c) noexcept {
  switch (c) {
    case Command::estimate: return "estimate";
    case Command::cv: return "cv";
    case Command::placebo: return "placebo";
    case Command::simulate: return "simulate";
    case Command::diagnose: return "diagnose";
  }
  return "unknown";
}

Command parse_command(std::string_view s) {
  for (auto c : {Command::estimate, Command::cv, Command::placebo, Command::simulate,
                 Command::diagnose})
    if (command_name(c) == s) return c;
  throw Error(ErrorCode::invalid_argument, "unknown command '" + std::string(s) + "'");
}

std::string_view inference_name(InferenceChoice m) noexcept {
  switch (m) {
    case InferenceChoice::none: return "none";
    case InferenceChoice::conformal: return "conformal";
    case InferenceChoice::jackknife_plus: return "jackknife+";
  }
  return "unknown";
}

InferenceChoice parse_inference(std::string_view s) {
  for (auto m : {InferenceChoice::none, InferenceChoice::conformal, InferenceChoice::jackknife_plus})
    if (inference_name(m) == s) return m;
  throw Error(ErrorCode::invalid_argument, "unknown inference method '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::invalid_argument, m); };
  const bool needs_panel = command != Command::simulate;
  if (needs_panel) {
    if (input.empty()) bad("--input is required");
    if (treated.empty()) bad("--treated is required");
    if (treatment_time.empty()) bad("--treatment-time is required");
  }
  if (lambda && !(*lambda >= 0.0 && std::isfinite(*lambda))) bad("--lambda must be finite and >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) bad("--alpha must lie in (0, 1)");
  if (threads < 1) bad("--threads must be >= 1");
  if (reps < 1) bad("--reps must be >= 1");
  if (!(noise_multiplier >= 0.0)) bad("--noise-multiplier must be >= 0");
  if (command == Command::placebo && placebo_times.empty()) bad("--placebo-times is required");
  if (command == Command::cv && estimator != EstimatorKind::ridge &&
      estimator != EstimatorKind::ascm_ridge)
    bad("cv needs an estimator with a ridge penalty");
  for (double s : sigma)
    if (!(s >= 0.0)) bad("--sigma values must be >= 0");
  if (out.empty()) bad("--out must not be empty");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["command"] = std::string(command_name(command));
  if (command != Command::simulate) {
    j["input"] = input;
    j["treated"] = treated;
    j["treatment_time"] = treatment_time;
    j["estimator"] = std::string(estimator_name(estimator));
    j["lambda"] = lambda ? nlohmann::json(*lambda) : nlohmann::json(nullptr);
    j["select"] = std::string(lambda_rule_name(rule));
    j["cv_mode"] = cv_mode == CvMode::leave_one ? "leave-one" : "leave-future";
    j["covariates"] = covariates;
    j["covariate_mode"] = std::string(covariate_mode_name(covariate_mode));
    j["inference"] = std::string(inference_name(inference));
    j["alpha"] = alpha;
  }
  if (command == Command::placebo) j["placebo_times"] = placebo_times;
  if (command == Command::simulate) {
    j["dgp"] = std::string(dgp_name(dgp));
    j["reps"] = reps;
    j["fixture"] = fixture;
    j["full_scale"] = full_scale;
    j["noise_multiplier"] = noise_multiplier;
    j["coverage"] = coverage;
    j["alpha"] = alpha;
    j["select"] = std::string(lambda_rule_name(rule));
  }
  if (command == Command::diagnose) j["sigma"] = sigma;
  j["seed"] = seed;
  j["threads"] = threads;
  return j;
}

namespace {

using io::format_double;

#ifdef PANELCTRL_DEFAULT_FIXTURE
constexpr std::string_view kDefaultFixture = PANELCTRL_DEFAULT_FIXTURE;
#else
constexpr std::string_view kDefaultFixture = "data/fixtures/factors.csv";
#endif


class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_))
      throw Error(ErrorCode::io, "cannot create output directory '" + dir_.string() + "'");
  }
  void write(const std::string& name, const std::string& text) {
    io::write_text_file(dir_ / name, text);
    files_.push_back(name);
  }
  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

PanelData load(const RunConfig& cfg) {
  std::ifstream in(cfg.input);
  if (!in) throw Error(ErrorCode::io, "cannot open input '" + cfg.input + "'");
  return load_panel(in, cfg.treated, cfg.treatment_time, cfg.covariates);
}

EstimatorSpec make_spec(const RunConfig& cfg) {
  EstimatorSpec s;
  s.kind = cfg.estimator;
  s.lambda = cfg.lambda;
  s.rule = cfg.rule;
  s.cv_mode = cfg.cv_mode;
  s.covariates = cfg.covariates.empty() ? CovariateMode::none : cfg.covariate_mode;
  return s;
}

std::string weights_csv(const PanelData& p, const DonorWeights& w) {
  std::ostringstream os;
  os << "unit,weight\n";
  const auto ids = p.control_ids();
  for (std::size_t i = 0; i < ids.size(); ++i)
    os << io::csv_field(ids[i]) << ',' << format_double(w.values[Eigen::Index(i)]) << '\n';
  return os.str();
}

struct Band {
  double lower = 0.0, upper = 0.0;
  std::string method;
  nlohmann::json diag;
};

// Per-post-period intervals on the effect scale.
std::vector<Band> intervals(const RunConfig& cfg, const PreparedPanel& pp,
                            const EstimatorSpec& spec, std::optional<double> lambda) {
  std::vector<Band> out;
  if (cfg.inference == InferenceChoice::none) return out;
  EstimatorSpec fixed = spec;
  fixed.lambda = lambda;
  for (Eigen::Index k = 0; k < pp.blocks.n_post(); ++k) {
    Band b;
    if (cfg.inference == InferenceChoice::conformal) {
      const PredictionInterval pi =
          conformal_interval(pp.blocks, pp.cov, fixed, cfg.alpha, k, {}, cfg.threads);
      b.lower = pi.lower;
      b.upper = pi.upper;
      b.diag = {{"grid_step", pi.grid_step},
                {"grid_points", pi.grid_points},
                {"widenings", pi.widenings},
                {"disconnected", pi.disconnected}};
      if (!std::isfinite(pi.lower) || !std::isfinite(pi.upper))
        log::warn("conformal interval is unbounded in post period " + std::to_string(k + 1) +
                  "; alpha is below the smallest attainable p-value or the fit is poor");
      if (pi.disconnected)
        log::warn("conformal acceptance region is disconnected in post period " +
                  std::to_string(k + 1) + "; reporting its hull");
    } else {
      const PredictionInterval pi = convert_target(
          jackknife_plus(pp.blocks, pp.cov, fixed, cfg.alpha, k, cfg.threads), IntervalTarget::effect);
      b.lower = pi.lower;
      b.upper = pi.upper;
    }
    b.method = std::string(interval_method_name(cfg.inference == InferenceChoice::conformal
                                                    ? IntervalMethod::full_conformal
                                                    : IntervalMethod::jackknife_plus));
    out.push_back(std::move(b));
  }
  return out;
}

std::string gap_csv(const PanelData& p, const AugEstimate& est, const std::vector<Band>& bands,
                    const std::string* placebo_time = nullptr) {
  std::ostringstream os;
  if (placebo_time) os << "placebo_time,";
  os << "time,observed,counterfactual,gap";
  if (!bands.empty()) os << ",ci_lower,ci_upper,method";
  os << '\n';
  const auto t0 = p.t0;
  for (Eigen::Index t = 0; t < p.n_periods(); ++t) {
    const double obs = p.outcomes(p.treated_index, t);
    const bool post = t >= t0;
    const double gap = post ? est.att[t - t0] : est.gap_pre[t];
    const double cf = post ? est.counterfactual[t - t0] : obs - gap;
    if (placebo_time) os << io::csv_field(*placebo_time) << ',';
    os << io::csv_field(p.time_ids[std::size_t(t)]) << ',' << format_double(obs) << ','
       << format_double(cf) << ',' << format_double(gap);
    if (!bands.empty()) {
      if (post) {
        const Band& b = bands[std::size_t(t - t0)];
        os << ',' << format_double(b.lower) << ',' << format_double(b.upper) << ',' << io::csv_field(b.method);
      } else {
        os << ",,,";
      }
    }
    os << '\n';
  }
  return os.str();
}

// Balance of the lagged outcomes and any auxiliary covariates.
std::string balance_csv(const PanelData& p, const DonorWeights& w) {
  PanelData q = p;
  const auto k = p.covariates.cols();
  q.covariates.resize(p.n_units(), p.t0 + k);
  q.covariates.leftCols(p.t0) = p.outcomes.leftCols(p.t0);
  if (k > 0) q.covariates.rightCols(k) = p.covariates;
  q.covariate_names.clear();
  for (Eigen::Index t = 0; t < p.t0; ++t) q.covariate_names.push_back("outcome@" + p.time_ids[std::size_t(t)]);
  for (const auto& n : p.covariate_names) q.covariate_names.push_back(n);
  std::ostringstream os;
  write_balance_csv(os, balance_table(q, w));
  return os.str();
}

nlohmann::json manifest_base(const RunConfig& cfg) {
  nlohmann::json m;
  m["tool"] = "panelctrl";
  m["version"] = std::string(kVersion);
  m["seed"] = cfg.seed;
  m["config"] = cfg.to_json();
  return m;
}

nlohmann::json cv_summary(const CvResult& cv) {
  return {{"lambda_min", cv.lambda_min},
          {"lambda_1se", cv.lambda_1se},
          {"mode", cv.mode == CvMode::leave_one ? "leave-one" : "leave-future"},
          {"grid_size", cv.lambda_grid.size()},
          {"skipped_periods", cv.skipped_periods.size()}};
}

void finish(Outputs& out, nlohmann::json manifest) {
  auto files = out.files();
  files.push_back("manifest.json");
  manifest["files"] = files;
  out.write("manifest.json", manifest.dump(2) + "\n");
}

void cmd_estimate(const RunConfig& cfg, Outputs& out) {
  const PanelData p = load(cfg);
  const EstimatorSpec spec = make_spec(cfg);
  const EstimateResult r = estimate_panel(p, spec, cfg.threads);
  const auto bands = intervals(cfg, r.prepared, spec, r.lambda);

  out.write("weights.csv", weights_csv(p, r.estimate.weights));
  out.write("gap.csv", gap_csv(p, r.estimate, bands));
  out.write("balance.csv", balance_csv(p, r.estimate.weights));

  nlohmann::json m = manifest_base(cfg);
  m["panel"] = panel_manifest(p);
  m["lambda"] = r.lambda ? nlohmann::json(*r.lambda) : nlohmann::json(nullptr);
  if (r.cv) m["cv"] = cv_summary(*r.cv);
  m["weights_provenance"] = std::string(provenance_name(r.estimate.weights.provenance));
  if (!bands.empty()) {
    auto& d = m["intervals"] = nlohmann::json::array();
    for (const auto& b : bands) d.push_back(b.diag.is_null() ? nlohmann::json::object() : b.diag);
  }
  finish(out, m);
}

void cmd_cv(const RunConfig& cfg, Outputs& out) {
  const PanelData p = load(cfg);
  const EstimatorSpec spec = make_spec(cfg);
  const PreparedPanel pp = prepare(p, spec);
  const std::vector<double> grid = default_lambda_grid(pp.blocks);
  const CvResult cv = loo_cv(pp.blocks, pp.cov, spec, grid, cfg.cv_mode, cfg.threads);
  std::ostringstream os;
  write_cv_csv(os, cv);
  out.write("cv.csv", os.str());
  nlohmann::json m = manifest_base(cfg);
  m["panel"] = panel_manifest(p);
  m["cv"] = cv_summary(cv);
  m["lambda"] = select_lambda(cv, cfg.rule);
  finish(out, m);
}

std::string file_safe(const std::string& s) {
  std::string r;
  for (char c : s)
    r += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return r;
}

void cmd_placebo(const RunConfig& cfg, Outputs& out) {
  const PanelData p = load(cfg);
  const EstimatorSpec spec = make_spec(cfg);
  nlohmann::json m = manifest_base(cfg);
  m["panel"] = panel_manifest(p);
  auto& runs = m["placebos"] = nlohmann::json::array();
  for (const auto& when : cfg.placebo_times) {
    const PlaceboResult r = in_time_placebo(p, when, spec, cfg.threads);
    const auto bands = intervals(cfg, r.result.prepared, spec, r.result.lambda);
    const std::string name = "placebo_" + file_safe(when) + ".csv";
    out.write(name, gap_csv(r.panel, r.result.estimate, bands, &when));
    runs.push_back({{"placebo_time", when},
                    {"file", name},
                    {"pre_periods", r.placebo_t0},
                    {"lambda", r.result.lambda ? nlohmann::json(*r.result.lambda)
                                               : nlohmann::json(nullptr)}});
  }
  finish(out, m);
}

void cmd_simulate(const RunConfig& cfg, Outputs& out) {
  const std::string path = cfg.fixture.empty() ? std::string(kDefaultFixture) : cfg.fixture;
  const FactorFixture fx = load_factor_fixture(path);
  DgpParams params = default_dgp(cfg.dgp, fx);
  params.noise_multiplier = cfg.noise_multiplier;
  if (cfg.full_scale) {
    params.n = 50;
    params.t = 105;
    params.t0 = 89;
  }
  std::vector<BankEntry> bank = default_bank();
  for (auto& e : bank) e.spec.rule = cfg.rule;

  McOptions o;
  o.reps = cfg.reps;
  o.seed = cfg.seed;
  o.threads = cfg.threads;
  std::ostringstream raw;
  o.raw_log = &raw;
  const McReport r = run_monte_carlo(params, bank, o);
  std::ostringstream csv;
  write_mc_csv(csv, r);
  out.write("mc_report.csv", csv.str());
  out.write("mc_report.json", mc_json(r).dump(2) + "\n");
  out.write("mc_replications.csv", raw.str());

  nlohmann::json m = manifest_base(cfg);
  m["fixture"] = path;
  m["dgp"] = {{"kind", std::string(dgp_name(params.kind))},
              {"n", params.n},
              {"t", params.t},
              {"t0", params.t0},
              {"theta", params.theta},
              {"sigma_eps", params.sigma_eps * params.noise_multiplier},
              {"estimand_post_period", params.estimand_period() + 1}};
  m["reps_used"] = r.reps_used;
  m["dropped"] = r.dropped;

  if (cfg.coverage) {
    EstimatorSpec spec;
    spec.kind = EstimatorKind::ascm_ridge;
    spec.rule = cfg.rule;
    const CoverageReport c = run_coverage(params, spec, cfg.reps, cfg.alpha, cfg.seed, cfg.threads);
    std::ostringstream cs;
    cs << "method,reps,covered,coverage,mean_width,unbounded\n";
    cs << "conformal," << c.reps_used << ',' << c.conformal_covered << ','
       << format_double(c.conformal_coverage()) << ',' << format_double(c.conformal_width) << ','
       << c.conformal_unbounded << '\n';
    cs << "jackknife+," << c.reps_used << ',' << c.jackknife_covered << ','
       << format_double(c.jackknife_coverage()) << ',' << format_double(c.jackknife_width) << ",0\n";
    out.write("coverage.csv", cs.str());
    m["coverage_dropped"] = c.dropped;
    m["conformal_unbounded"] = c.conformal_unbounded;
  }
  finish(out, m);
}

struct Check {
  std::string name;
  double value;
  double tolerance;
  bool pass;
};

// Noise scale from first differences of the donors' pre-period outcomes.
double diff_noise_scale(const PanelBlocks& b) {
  if (b.n_pre() < 2) return 0.0;
  const Eigen::MatrixXd d = b.x0.rightCols(b.n_pre() - 1) - b.x0.leftCols(b.n_pre() - 1);
  return std::sqrt(d.squaredNorm() / double(d.size()) / 2.0);
}

bool cmd_diagnose(const RunConfig& cfg, Outputs& out) {
  const PanelData raw = load(cfg);
  EstimatorSpec spec = make_spec(cfg);
  spec.kind = EstimatorKind::ascm_ridge;

  // Treated pre-period sd normalized to one.
  PanelData p = raw;
  const Eigen::VectorXd pre = raw.outcomes.row(raw.treated_index).head(raw.t0);
  const double sd = std::sqrt((pre.array() - pre.mean()).square().sum() / double(pre.size() - 1));
  const double scale = sd > 0.0 ? sd : 1.0;
  p.outcomes /= scale;

  const PreparedPanel pp = prepare(p, spec);
  const PanelBlocks& b = pp.blocks;
  const auto [lambda_opt, cv] = resolve_lambda(b, pp.cov, spec, cfg.threads);
  const double lambda = *lambda_opt;

  const DonorWeights scm = solve_scm(b, spec.scm);
  const ControlSVD svd = control_svd(b);
  const DonorWeights aug = augment_weights(scm, b, svd, lambda);
  std::vector<Check> checks;
  auto add = [&](std::string name, double value, double tol) {
    checks.push_back({std::move(name), value, tol, value <= tol});
  };

  add("penalized_form_stationarity", verify_penalized_form(aug, scm.values, b, lambda).residual,
      kPenalizedFormTol);

  const DonorWeights rw = ridge_weights(b, svd, lambda);
  double ridge_gap = 0.0, ridge_scale = 1.0;
  for (Eigen::Index k = 0; k < b.n_post(); ++k) {
    const double pred = fit_ridge(b, svd, lambda, k).predict(b.x1);
    ridge_gap = std::max(ridge_gap, std::abs(rw.values.dot(b.y0_post.col(k)) - pred));
    ridge_scale = std::max(ridge_scale, std::abs(pred));
  }
  add("ridge_weighting_identity", ridge_gap / ridge_scale, 1e-10);

  const SvdImbalance si = svd_imbalance(scm, b, lambda);
  const double r_norm = imbalance(b, scm);
  add("svd_imbalance_identity", std::abs(si.direct - si.via_svd) / std::max(1.0, r_norm), 1e-8);
  add("svd_imbalance_bound", std::max(0.0, si.direct - si.upper_bound), 1e-10 * std::max(1.0, r_norm));
  add("augmented_fit_no_worse", std::max(0.0, si.direct - r_norm), 1e-10 * std::max(1.0, r_norm));

  const WeightNormBound wb = weight_norm_bound(scm, b, lambda);
  add("weight_norm_bound", std::max(0.0, wb.norm - wb.bound), 1e-10 * std::max(1.0, wb.bound));

  double dm_gap = 0.0, dm_scale = 1.0;
  for (Eigen::Index k = 0; k < b.n_post(); ++k) {
    const DemeanedForms f = demeaned_effect_forms(scm, b, k);
    dm_gap = std::max(dm_gap, std::abs(f.unit_mean_form - f.period_average_form));
    dm_scale = std::max(dm_scale, std::abs(f.unit_mean_form));
  }
  add("demeaned_forms_agree", dm_gap / dm_scale, 1e-12);

  if (pp.cov) {
    const ResidualizedPanel rp = residualize(b, *pp.cov);
    const DonorWeights base = solve_scm(rp.blocks, spec.scm);
    const DonorWeights cw = two_step_weights(base, rp, *pp.cov, lambda);
    const double zgap = (pp.cov->z1 - pp.cov->z0.transpose() * cw.values).norm();
    add("two_step_covariate_balance", zgap, 1e-8);
    const TwoStepBound tb = two_step_bound(base, cw, rp, lambda);
    add("two_step_imbalance_bound", std::max(0.0, tb.imbalance - tb.bound),
        1e-10 * std::max(1.0, tb.bound));
  }

  std::ostringstream lc;
  lc << "check,value,tolerance,status\n";
  bool all = true;
  for (const auto& c : checks) {
    lc << c.name << ',' << format_double(c.value) << ',' << format_double(c.tolerance) << ','
       << (c.pass ? "PASS" : "FAIL") << '\n';
    all = all && c.pass;
  }
  out.write("identity_checks.csv", lc.str());

  std::vector<double> sigma = cfg.sigma;
  const double noise = diff_noise_scale(b);
  if (sigma.empty())
    for (double f : {0.5, 1.0, 2.0, 4.0}) sigma.push_back(f * noise);
  const std::vector<double> grid = default_lambda_grid(b);
  std::ostringstream bs;
  write_bound_sketch_csv(bs, bound_sketch(scm, b, grid, sigma));
  out.write("bound_sketch.csv", bs.str());

  nlohmann::json m = manifest_base(cfg);
  m["panel"] = panel_manifest(raw);
  m["outcome_scale"] = scale;
  m["lambda"] = lambda;
  if (cv) m["cv"] = cv_summary(*cv);
  m["noise_scale"] = noise;
  m["sigma_grid"] = sigma;
  m["checks_passed"] = all;
  finish(out, m);
  return all;
}

}  // namespace

RunResult run(const RunConfig& cfg) {
  RunResult res;
  try {
    cfg.validate();
    Outputs out{fs::path(cfg.out)};
    try {
      switch (cfg.command) {
        case Command::estimate: cmd_estimate(cfg, out); break;
        case Command::cv: cmd_cv(cfg, out); break;
        case Command::placebo: cmd_placebo(cfg, out); break;
        case Command::simulate: cmd_simulate(cfg, out); break;
        case Command::diagnose:
          if (!cmd_diagnose(cfg, out)) {
            res.exit_code = 1;
            res.message = "diagnose: one or more checks failed, see identity_checks.csv";
          }
          break;
      }
    } catch (...) {
      res.files = out.files();
      throw;
    }
    res.files = out.files();
    if (res.exit_code == 0)
      res.message = std::string(command_name(cfg.command)) + ": wrote " +
                  std::to_string(res.files.size()) + " files to " + cfg.out;
  } catch (const Error& e) {
    res.exit_code = static_cast<int>(e.code());
    res.message = std::string(error_name(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    res.exit_code = 1;
    res.message = std::string("internal error: ") + e.what();
  }
  return res;
}

}  // namespace panelctrl

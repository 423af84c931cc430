#include "panelctrl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include <Eigen/Eigenvalues>

#include "panelctrl/error.hpp"
#include "panelctrl/inference.hpp"
#include "panelctrl/io.hpp"
#include "panelctrl/log.hpp"
#include "panelctrl/parallel.hpp"
#include "panelctrl/selection.hpp"

namespace panelctrl {

std::string_view dgp_name(DgpKind k) noexcept {
  switch (k) {
    case DgpKind::factor: return "factor";
    case DgpKind::fixed_effects: return "fixed_effects";
    case DgpKind::ar3: return "ar3";
  }
  return "unknown";
}

DgpKind parse_dgp(std::string_view s) {
  for (auto k : {DgpKind::factor, DgpKind::fixed_effects, DgpKind::ar3})
    if (dgp_name(k) == s) return k;
  throw Error(ErrorCode::invalid_argument, "unknown dgp '" + std::string(s) + "'");
}

FactorFixture load_factor_fixture(std::istream& in) {
  std::string line;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = io::split_csv_line(line);
    if (header) {
      if (fields.size() < 2 || fields[0] != "t" || fields[1] != "nu")
        throw Error(ErrorCode::parse, "factor fixture header must start with t,nu");
      width = fields.size();
      header = false;
      continue;
    }
    if (fields.size() != width)
      throw Error(ErrorCode::parse, "factor fixture line " + std::to_string(line_no) +
                                        ": expected " + std::to_string(width) + " fields");
    std::vector<double> v(width);
    for (std::size_t j = 0; j < width; ++j)
      if (!io::parse_double(fields[j], v[j]))
        throw Error(ErrorCode::parse, "factor fixture line " + std::to_string(line_no) +
                                          ": bad number '" + fields[j] + "'");
    rows.push_back(std::move(v));
  }
  if (rows.size() < 2) throw Error(ErrorCode::parse, "factor fixture needs at least 2 periods");
  FactorFixture f;
  const auto t = static_cast<Eigen::Index>(rows.size());
  f.nu.resize(t);
  f.mu.resize(t, static_cast<Eigen::Index>(width - 2));
  for (Eigen::Index i = 0; i < t; ++i) {
    const auto& r = rows[std::size_t(i)];
    f.nu[i] = r[1];
    for (std::size_t j = 2; j < width; ++j) f.mu(i, Eigen::Index(j - 2)) = r[j];
  }
  return f;
}

FactorFixture load_factor_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open factor fixture '" + path + "'");
  return load_factor_fixture(in);
}

FactorFixture resample(const FactorFixture& f, Eigen::Index n) {
  if (n == f.periods()) return f;
  if (n < 2 || f.periods() < 2)
    throw Error(ErrorCode::invalid_argument, "resampling needs at least 2 periods");
  FactorFixture out;
  out.nu.resize(n);
  out.mu.resize(n, f.factors());
  const double span = double(f.periods() - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = span * double(i) / double(n - 1);
    const auto lo = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(x)), f.periods() - 2);
    const double w = x - double(lo);
    out.nu[i] = (1 - w) * f.nu[lo] + w * f.nu[lo + 1];
    out.mu.row(i) = (1 - w) * f.mu.row(lo) + w * f.mu.row(lo + 1);
  }
  return out;
}

void DgpParams::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::invalid_argument, m); };
  if (n < 3) bad("dgp needs at least 3 units");
  if (t0 < 3 || t0 >= t) bad("dgp needs 3 <= T0 < T");
  if (!(sigma_eps >= 0.0) || !(noise_multiplier >= 0.0)) bad("noise sd must be >= 0");
  if (!(alpha_sd >= 0.0)) bad("alpha_sd must be >= 0");
  if (!std::isfinite(theta)) bad("theta must be finite");
  if (kind == DgpKind::ar3) {
    if (burn_in < 0) bad("burn-in must be >= 0");
    Eigen::Matrix3d companion = Eigen::Matrix3d::Zero();
    companion.row(0) = ar_coefs.transpose();
    companion(1, 0) = 1.0;
    companion(2, 1) = 1.0;
    if (companion.eigenvalues().cwiseAbs().maxCoeff() >= 1.0)
      bad("AR(3) coefficients are not stationary");
    return;
  }
  if (fixture.periods() < 2) bad("factor fixture needs at least 2 periods");
  if (kind == DgpKind::factor) {
    const auto j = fixture.factors();
    if (j < 1) bad("factor dgp needs J >= 1 factors");
    if (phi_cov.rows() != j || phi_cov.cols() != j) bad("phi_cov must be J x J");
  }
  if (phi_cov.size() > 0) {
    if ((phi_cov - phi_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + phi_cov.cwiseAbs().maxCoeff()))
      bad("phi_cov must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(phi_cov);
    if (es.eigenvalues().minCoeff() < -1e-12 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()))
      bad("phi_cov must be positive semidefinite");
  }
}

DgpParams default_dgp(DgpKind kind, FactorFixture fixture) {
  DgpParams p;
  p.kind = kind;
  p.fixture = std::move(fixture);
  switch (kind) {
    case DgpKind::factor:
      p.theta = 0.5;
      p.alpha_mean = 0.0;
      p.alpha_sd = 1.0;
      p.phi_cov = Eigen::MatrixXd::Identity(p.fixture.factors(), p.fixture.factors()) * 0.5;
      p.sigma_eps = 0.1;
      break;
    case DgpKind::fixed_effects:
      p.theta = 1.5;
      p.alpha_mean = 0.0;
      p.alpha_sd = 1.0;
      p.sigma_eps = 0.1;
      break;
    case DgpKind::ar3:
      p.theta = 2.5;
      p.ar_intercept = 0.05;
      p.ar_coefs = Eigen::Vector3d(0.8, 0.1, 0.05);
      p.sigma_eps = 0.1;
      break;
  }
  return p;
}

std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(rep),
                    std::uint32_t(rep >> 32)};
  return std::mt19937_64(seq);
}

namespace {

// Sample z-scores; a constant column contributes nothing.
Eigen::VectorXd standardized(const Eigen::VectorXd& v) {
  const double m = v.mean();
  const double sd = std::sqrt((v.array() - m).square().sum() / double(v.size() - 1));
  if (!(sd > 0.0)) return Eigen::VectorXd::Zero(v.size());
  return (v.array() - m) / sd;
}

Eigen::Index sample_index(const Eigen::VectorXd& prob, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    acc += prob[i];
    if (x < acc) return i;
  }
  return prob.size() - 1;
}

// Neumaier compensated sum.
struct Accumulator {
  double sum = 0.0, c = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      c += (sum - t) + x;
    else
      c += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + c; }
};

}  // namespace

DrawnPanel draw_panel(const DgpParams& params, std::mt19937_64& rng) {
  params.validate();
  const auto n = params.n, t = params.t;
  std::normal_distribution<double> z(0.0, 1.0);
  const double sd = params.sigma_eps * params.noise_multiplier;
  Eigen::MatrixXd y(n, t);
  Eigen::VectorXd score = Eigen::VectorXd::Zero(n);

  if (params.kind == DgpKind::ar3) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double l1 = 0.0, l2 = 0.0, l3 = 0.0;
      for (int s = 0; s < params.burn_in + int(t); ++s) {
        const double v = params.ar_intercept + params.ar_coefs[0] * l1 + params.ar_coefs[1] * l2 +
                         params.ar_coefs[2] * l3 + sd * z(rng);
        l3 = l2;
        l2 = l1;
        l1 = v;
        if (s >= params.burn_in) y(i, s - params.burn_in) = v;
      }
    }
    const Eigen::VectorXd last = y.middleCols(params.t0 - 3, 3).rowwise().sum();
    score = standardized(last);
  } else {
    const FactorFixture f = resample(params.fixture, t);
    Eigen::VectorXd alpha(n);
    for (Eigen::Index i = 0; i < n; ++i) alpha[i] = params.alpha_mean + params.alpha_sd * z(rng);
    y = alpha.replicate(1, t);
    y.rowwise() += f.nu.transpose();
    score = standardized(alpha);
    if (params.kind == DgpKind::factor) {
      const auto j = f.factors();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(params.phi_cov);
      const Eigen::MatrixXd root =
          es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
      Eigen::MatrixXd phi(n, j);
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd e(j);
        for (Eigen::Index k = 0; k < j; ++k) e[k] = z(rng);
        phi.row(i) = (root * e).transpose();
      }
      y += phi * f.mu.transpose();
      for (Eigen::Index k = 0; k < j; ++k) score += standardized(phi.col(k));
    }
    for (Eigen::Index s = 0; s < t; ++s)
      for (Eigen::Index i = 0; i < n; ++i) y(i, s) += sd * z(rng);
  }

  DrawnPanel out;
  out.selection_prob = (1.0 / (1.0 + (-params.theta * score.array()).exp())).matrix();
  out.selection_prob /= out.selection_prob.sum();
  const Eigen::Index treated = sample_index(out.selection_prob, rng);

  std::vector<std::string> units, times;
  for (Eigen::Index i = 0; i < n; ++i) units.push_back("u" + std::to_string(i + 1));
  for (Eigen::Index s = 0; s < t; ++s) times.push_back(std::to_string(s + 1));
  out.panel = make_panel(std::move(y), std::move(units), std::move(times), treated, params.t0);
  return out;
}

DrawnPanel draw_panel(const DgpParams& params, std::uint64_t seed, std::uint64_t rep) {
  auto rng = replication_rng(seed, rep);
  return draw_panel(params, rng);
}

std::vector<BankEntry> default_bank() {
  std::vector<BankEntry> bank;
  auto add = [&](EstimatorKind k) {
    EstimatorSpec s;
    s.kind = k;
    bank.push_back({std::string(estimator_name(k)), s});
  };
  add(EstimatorKind::scm);
  add(EstimatorKind::ridge);
  add(EstimatorKind::ascm_ridge);
  add(EstimatorKind::fixed_effects);
  add(EstimatorKind::demeaned_scm);
  return bank;
}

const McRow& McReport::row(std::string_view label) const {
  for (const auto& r : rows)
    if (r.label == label) return r;
  throw Error(ErrorCode::invalid_argument, "no estimator labelled '" + std::string(label) + "'");
}

McReport run_monte_carlo(const DgpParams& params, const std::vector<BankEntry>& bank,
                         const McOptions& opts) {
  params.validate();
  if (opts.reps < 1) throw Error(ErrorCode::invalid_argument, "reps must be >= 1");
  const auto scm_it = std::find_if(bank.begin(), bank.end(),
                                   [](const BankEntry& e) { return e.label == "scm"; });
  if (scm_it == bank.end() || scm_it->spec.kind != EstimatorKind::scm)
    throw Error(ErrorCode::invalid_argument, "estimator bank must include scm");
  const auto scm_col = static_cast<std::size_t>(scm_it - bank.begin());
  const Eigen::Index k = params.estimand_period();
  const auto n_est = bank.size();
  const auto reps = static_cast<std::size_t>(opts.reps);

  struct Rep {
    bool ok = false;
    Eigen::Index treated = 0;
    double fit = 0.0;
    std::vector<double> tau;
    std::string error;
  };
  std::vector<Rep> out(reps);
  parallel_for(reps, opts.threads, [&](std::size_t r) {
    Rep& rep = out[r];
    try {
      const DrawnPanel d = draw_panel(params, opts.seed, r);
      rep.treated = d.panel.treated_index;
      rep.tau.resize(n_est);
      for (std::size_t e = 0; e < n_est; ++e) {
        const EstimateResult res = estimate_panel(d.panel, bank[e].spec, 1);
        rep.tau[e] = res.estimate.att[k];
        if (e == scm_col) {
          const auto& g = res.estimate.gap_pre;
          rep.fit = std::sqrt(g.squaredNorm() / double(g.size()));
        }
      }
      rep.ok = true;
    } catch (const Error& e) {
      rep.error = e.what();
    }
  });

  McReport report;
  report.dgp = params.kind;
  report.seed = opts.seed;
  report.reps_requested = opts.reps;
  std::vector<std::size_t> used;
  for (std::size_t r = 0; r < reps; ++r) {
    if (out[r].ok) {
      used.push_back(r);
    } else {
      ++report.dropped;
      log::warn("replication " + std::to_string(r) + " dropped: " + out[r].error);
    }
  }
  report.reps_used = static_cast<int>(used.size());
  if (used.empty()) throw Error(ErrorCode::invalid_argument, "every replication failed");

  const auto m = static_cast<Eigen::Index>(used.size());
  report.estimates.resize(m, static_cast<Eigen::Index>(n_est));
  report.scm_fit.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Rep& rep = out[used[std::size_t(i)]];
    for (std::size_t e = 0; e < n_est; ++e) report.estimates(i, Eigen::Index(e)) = rep.tau[e];
    report.scm_fit[i] = rep.fit;
  }

  // Quartiles of the SCM pre-fit by rank, ties broken by replication order.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return report.scm_fit[a] < report.scm_fit[b]; });
  report.quartile.assign(static_cast<std::size_t>(m), 0);
  for (Eigen::Index rank = 0; rank < m; ++rank) {
    const int q = static_cast<int>(std::min<Eigen::Index>(3, rank * 4 / m));
    report.quartile[std::size_t(order[std::size_t(rank)])] = q;
    ++report.quartile_counts[std::size_t(q)];
  }

  const double dm = double(m);
  for (std::size_t e = 0; e < n_est; ++e) {
    McRow row;
    row.label = bank[e].label;
    row.reps = report.reps_used;
    Accumulator s1, s2, s4;
    std::array<Accumulator, 4> qs;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double v = report.estimates(i, Eigen::Index(e));
      s1.add(v);
      s2.add(v * v);
      qs[std::size_t(report.quartile[std::size_t(i)])].add(v);
    }
    row.bias = s1.value() / dm;
    const double mse = s2.value() / dm;
    row.rmse = std::sqrt(mse);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double v = report.estimates(i, Eigen::Index(e));
      s4.add((v * v - mse) * (v * v - mse));
    }
    if (m > 1) {
      const double var = std::max(0.0, s2.value() - dm * row.bias * row.bias) / (dm - 1.0);
      row.bias_se = std::sqrt(var / dm);
      const double mse_se = std::sqrt(s4.value() / (dm - 1.0) / dm);
      row.rmse_se = row.rmse > 0.0 ? mse_se / (2.0 * row.rmse) : 0.0;
    }
    for (std::size_t q = 0; q < 4; ++q)
      row.quartile_bias[q] = report.quartile_counts[q] > 0
                                 ? qs[q].value() / double(report.quartile_counts[q])
                                 : std::numeric_limits<double>::quiet_NaN();
    report.rows.push_back(row);
  }
  const McRow scm = report.rows[scm_col];
  for (auto& row : report.rows) {
    row.abs_bias_pct = 100.0 * std::abs(row.bias) / std::abs(scm.bias);
    row.rmse_pct = 100.0 * row.rmse / scm.rmse;
  }

  if (opts.raw_log) {
    auto& os = *opts.raw_log;
    os << "rep,treated,scm_fit,quartile";
    for (const auto& b : bank) os << ',' << io::csv_field(b.label);
    os << '\n';
    for (Eigen::Index i = 0; i < m; ++i) {
      const Rep& rep = out[used[std::size_t(i)]];
      os << used[std::size_t(i)] << ',' << rep.treated + 1 << ',' << io::format_double(rep.fit)
         << ',' << report.quartile[std::size_t(i)] + 1;
      for (std::size_t e = 0; e < n_est; ++e) os << ',' << io::format_double(rep.tau[e]);
      os << '\n';
    }
  }
  return report;
}

void write_mc_csv(std::ostream& os, const McReport& r) {
  os << "estimator,reps,bias,bias_se,abs_bias_pct,rmse,rmse_se,rmse_pct,"
        "bias_q1,bias_q2,bias_q3,bias_q4\n";
  for (const auto& row : r.rows) {
    os << io::csv_field(row.label) << ',' << row.reps << ',' << io::format_double(row.bias) << ','
       << io::format_double(row.bias_se) << ',' << io::format_double(row.abs_bias_pct) << ','
       << io::format_double(row.rmse) << ',' << io::format_double(row.rmse_se) << ','
       << io::format_double(row.rmse_pct);
    for (double q : row.quartile_bias) os << ',' << io::format_double(q);
    os << '\n';
  }
}

nlohmann::json mc_json(const McReport& r) {
  nlohmann::json j;
  j["dgp"] = std::string(dgp_name(r.dgp));
  j["seed"] = r.seed;
  j["reps_requested"] = r.reps_requested;
  j["reps_used"] = r.reps_used;
  j["dropped"] = r.dropped;
  j["quartile_counts"] = r.quartile_counts;
  auto& rows = j["estimators"] = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"estimator", row.label},
                    {"reps", row.reps},
                    {"bias", row.bias},
                    {"bias_se", row.bias_se},
                    {"abs_bias_pct", row.abs_bias_pct},
                    {"rmse", row.rmse},
                    {"rmse_se", row.rmse_se},
                    {"rmse_pct", row.rmse_pct},
                    {"quartile_bias", row.quartile_bias}});
  }
  return j;
}

CoverageReport run_coverage(const DgpParams& params, const EstimatorSpec& spec, int reps,
                            double alpha, std::uint64_t seed, int threads) {
  params.validate();
  if (reps < 1) throw Error(ErrorCode::invalid_argument, "reps must be >= 1");
  struct Rep {
    bool ok = false;
    bool conf = false, jack = false;
    double conf_width = 0.0, jack_width = 0.0;
  };
  std::vector<Rep> out(static_cast<std::size_t>(reps));
  parallel_for(out.size(), threads, [&](std::size_t r) {
    Rep& rep = out[r];
    try {
      const DrawnPanel d = draw_panel(params, seed, r);
      const PanelData p = truncate_panel(d.panel, params.t0 + 1, params.t0);
      const PreparedPanel pp = prepare(p, spec);
      EstimatorSpec fixed = spec;
      fixed.lambda = resolve_lambda(pp.blocks, pp.cov, spec, 1).first;
      try {
        const PredictionInterval c = conformal_interval(pp.blocks, pp.cov, fixed, alpha, 0);
        rep.conf = c.lower <= 0.0 && 0.0 <= c.upper;
        rep.conf_width = c.upper - c.lower;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::empty_accept_set) throw;
      }
      const PredictionInterval j = jackknife_plus(pp.blocks, pp.cov, fixed, alpha, 0, 1);
      rep.jack = j.lower <= j.observed && j.observed <= j.upper;
      rep.jack_width = j.upper - j.lower;
      rep.ok = true;
    } catch (const Error& e) {
      log::warn("coverage replication " + std::to_string(r) + " dropped: " + e.what());
    }
  });

  CoverageReport cr;
  cr.reps_requested = reps;
  cr.alpha = alpha;
  Accumulator cw, jw;
  int bounded = 0;
  for (const Rep& rep : out) {
    if (!rep.ok) {
      ++cr.dropped;
      continue;
    }
    ++cr.reps_used;
    cr.conformal_covered += rep.conf;
    cr.jackknife_covered += rep.jack;
    if (std::isfinite(rep.conf_width)) {
      cw.add(rep.conf_width);
      ++bounded;
    } else {
      ++cr.conformal_unbounded;
    }
    jw.add(rep.jack_width);
  }
  if (bounded > 0) cr.conformal_width = cw.value() / bounded;
  if (cr.reps_used > 0) {
    cr.jackknife_width = jw.value() / cr.reps_used;
  }
  return cr;
}

}  // namespace panelctrl

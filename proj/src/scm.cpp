#include "panelctrl/scm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "panelctrl/error.hpp"
#include "panelctrl/io.hpp"

namespace panelctrl {

std::string_view provenance_name(Provenance p) noexcept {
  switch (p) {
    case Provenance::scm: return "scm";
    case Provenance::ridge: return "ridge";
    case Provenance::augmented: return "augmented";
    case Provenance::covariate_adjusted: return "covariate-adjusted";
  }
  return "unknown";
}

void ScmConfig::validate(Eigen::Index t0) const {
  if (importance.size() != 0) {
    if (importance.size() != t0)
      throw Error(ErrorCode::invalid_argument, "importance length " +
                                                   std::to_string(importance.size()) +
                                                   " != T0 " + std::to_string(t0));
    if ((importance.array() < 0.0).any() || !importance.allFinite())
      throw Error(ErrorCode::invalid_argument, "importance entries must be finite and >= 0");
  }
  if (zeta && (!(*zeta >= 0.0) || !std::isfinite(*zeta)))
    throw Error(ErrorCode::invalid_argument, "zeta must be >= 0");
  if (!(tol > 0.0)) throw Error(ErrorCode::invalid_argument, "tol must be > 0");
  if (max_iter <= 0) throw Error(ErrorCode::invalid_argument, "max_iter must be positive");
}

void DonorWeights::validate() const {
  if (!values.allFinite()) throw Error(ErrorCode::invalid_argument, "weights not finite");
  if (sum_constrained && std::abs(values.sum() - 1.0) > 1e-10)
    throw Error(ErrorCode::invalid_argument, "weights do not sum to one");
  if (simplex && values.size() > 0 && values.minCoeff() < -1e-12)
    throw Error(ErrorCode::invalid_argument, "simplex weights have a negative entry");
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const auto n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    cum += u[static_cast<std::size_t>(k)];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (u[static_cast<std::size_t>(k)] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0).matrix();
}

namespace {

Eigen::VectorXd effective_importance(const Eigen::VectorXd& importance, Eigen::Index t0) {
  return importance.size() == 0 ? Eigen::VectorXd::Ones(t0) : importance;
}

// Quadratic pieces of the balance term: H = x0 V x0', c = x0 V x1.
struct Quadratic {
  Eigen::MatrixXd h;
  Eigen::VectorXd c;
  Eigen::MatrixXd a;   // V^{1/2} x0'
  Eigen::VectorXd y;   // V^{1/2} x1
};

Quadratic make_quadratic(const PanelBlocks& b, const Eigen::VectorXd& v) {
  Quadratic q;
  const Eigen::MatrixXd x0v = b.x0 * v.asDiagonal();
  q.h = x0v * b.x0.transpose();
  q.c = x0v * b.x1;
  const Eigen::VectorXd root = v.cwiseSqrt();
  q.a = root.asDiagonal() * b.x0.transpose();
  q.y = root.asDiagonal() * b.x1;
  return q;
}

double penalty_value(const Eigen::VectorXd& g, Penalty p) {
  if (p == Penalty::squared_l2) return g.squaredNorm();
  double s = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (g[i] > 0.0) s += g[i] * std::log(g[i]);
  return s;
}

double objective(const Quadratic& q, const Eigen::VectorXd& g, double zeta, Penalty p) {
  // Residual form avoids the cancellation of the expanded quadratic.
  const double balance = (q.y - q.a * g).squaredNorm();
  return balance + (zeta > 0.0 ? zeta * penalty_value(g, p) : 0.0);
}

Eigen::VectorXd gradient(const Quadratic& q, const Eigen::VectorXd& g, double zeta, Penalty p) {
  Eigen::VectorXd grad = 2.0 * (q.h * g - q.c);
  if (zeta > 0.0) {
    if (p == Penalty::squared_l2) {
      grad += 2.0 * zeta * g;
    } else {
      for (Eigen::Index i = 0; i < g.size(); ++i)
        grad[i] += zeta * (std::log(std::max(g[i], 1e-300)) + 1.0);
    }
  }
  return grad;
}

double lipschitz(const Quadratic& q, double zeta, Penalty p) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.h, Eigen::EigenvaluesOnly);
  double l = 2.0 * std::max(es.eigenvalues().maxCoeff(), 0.0);
  if (p == Penalty::squared_l2) l += 2.0 * zeta;
  return std::max(l, 1e-300);
}

// Objective changes below this are round-off.
bool no_worse(double f_new, double f_old) {
  return f_new <= f_old + 1e-14 * std::max(1.0, std::abs(f_old));
}

double residual(const Quadratic& q, const Eigen::VectorXd& g, double zeta, Penalty p, double l) {
  const Eigen::VectorXd step = project_to_simplex(g - gradient(q, g, zeta, p) / l);
  return (g - step).cwiseAbs().maxCoeff();
}

// Primal active-set refinement of the squared-L2 problem, started from a
// feasible point. Minimizes g'(H + zeta I)g - 2c'g on the simplex exactly.
bool active_set_polish(const Quadratic& q, double zeta, Eigen::VectorXd& g) {
  const auto n = g.size();
  const Eigen::MatrixXd h = q.h + zeta * Eigen::MatrixXd::Identity(n, n);
  std::vector<bool> fixed(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) fixed[static_cast<std::size_t>(i)] = g[i] <= 0.0;
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  const int max_iter = 20 * static_cast<int>(n) + 100;

  for (int it = 0; it < max_iter; ++it) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!fixed[static_cast<std::size_t>(i)]) free.push_back(i);
    const auto nf = static_cast<Eigen::Index>(free.size());
    if (nf == 0) return false;

    // [H_FF 1; 1' 0] [g_F; m] = [c_F; 1]
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + 1, nf + 1);
    Eigen::VectorXd rhs(nf + 1);
    for (Eigen::Index a = 0; a < nf; ++a) {
      for (Eigen::Index c = 0; c < nf; ++c)
        kkt(a, c) = h(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(c)]);
      kkt(a, nf) = 1.0;
      kkt(nf, a) = 1.0;
      rhs[a] = q.c[free[static_cast<std::size_t>(a)]];
    }
    rhs[nf] = 1.0;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(kkt);
    const Eigen::VectorXd sol = cod.solve(rhs);
    if (!sol.allFinite()) return false;
    if ((kkt * sol - rhs).cwiseAbs().maxCoeff() > 1e-8 * scale) return false;

    Eigen::VectorXd target = Eigen::VectorXd::Zero(n);
    for (Eigen::Index a = 0; a < nf; ++a) target[free[static_cast<std::size_t>(a)]] = sol[a];

    double min_free = 0.0;
    for (auto i : free) min_free = std::min(min_free, target[i]);
    if (min_free >= 0.0) {
      g = target;
      const double m = sol[nf];
      const Eigen::VectorXd grad = h * g - q.c;
      Eigen::Index enter = -1;
      double worst = -1e-13 * scale;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!fixed[static_cast<std::size_t>(i)]) continue;
        const double nu = grad[i] + m;
        if (nu < worst) {
          worst = nu;
          enter = i;
        }
      }
      if (enter < 0) return true;
      fixed[static_cast<std::size_t>(enter)] = false;
      continue;
    }

    // Step toward target until the first free weight hits zero.
    double alpha = 1.0;
    Eigen::Index block = -1;
    for (auto i : free) {
      if (target[i] < 0.0) {
        const double denom = g[i] - target[i];
        const double a = denom > 0.0 ? g[i] / denom : 0.0;
        if (a < alpha) {
          alpha = a;
          block = i;
        }
      }
    }
    g += alpha * (target - g);
    if (block >= 0) {
      g[block] = 0.0;
      fixed[static_cast<std::size_t>(block)] = true;
    }
    for (Eigen::Index i = 0; i < n; ++i)
      if (fixed[static_cast<std::size_t>(i)]) g[i] = 0.0;
  }
  return false;
}

Eigen::VectorXd clean_simplex(Eigen::VectorXd g) {
  g = g.cwiseMax(0.0);
  const double s = g.sum();
  if (s > 0.0) g /= s;
  return g;
}

}  // namespace

double default_zeta(const PanelBlocks& b, const Eigen::VectorXd& importance) {
  const Eigen::VectorXd v = effective_importance(importance, b.n_pre());
  const double tr = (b.x0.array().square().rowwise() * v.transpose().array()).sum();
  return 1e-8 * tr / static_cast<double>(b.n_controls());
}

double scm_objective(const PanelBlocks& b, const Eigen::VectorXd& g,
                     const Eigen::VectorXd& importance, double zeta, Penalty penalty) {
  const Eigen::VectorXd v = effective_importance(importance, b.n_pre());
  const Eigen::VectorXd gap = pre_gap(b, g);
  return gap.dot(v.asDiagonal() * gap) + (zeta > 0.0 ? zeta * penalty_value(g, penalty) : 0.0);
}

double scm_kkt_residual(const PanelBlocks& b, const Eigen::VectorXd& g,
                        const Eigen::VectorXd& importance, double zeta, Penalty penalty) {
  const Quadratic q = make_quadratic(b, effective_importance(importance, b.n_pre()));
  return residual(q, g, zeta, penalty, lipschitz(q, zeta, penalty));
}

ScmSolution solve_scm_detailed(const PanelBlocks& b, const ScmConfig& cfg,
                               const Eigen::VectorXd* start, bool record_trace) {
  cfg.validate(b.n_pre());
  const auto n0 = b.n_controls();
  if (n0 < 2) throw Error(ErrorCode::invalid_argument, "SCM needs at least 2 donors");
  const Eigen::VectorXd v = effective_importance(cfg.importance, b.n_pre());
  const double zeta = cfg.zeta ? *cfg.zeta : default_zeta(b, cfg.importance);
  const Penalty pen = zeta > 0.0 ? cfg.penalty : Penalty::squared_l2;
  const Quadratic q = make_quadratic(b, v);
  const double l = lipschitz(q, zeta, pen);

  Eigen::VectorXd x = Eigen::VectorXd::Constant(n0, 1.0 / static_cast<double>(n0));
  if (start) {
    if (start->size() != n0)
      throw Error(ErrorCode::invalid_argument, "start vector has wrong length");
    x = project_to_simplex(*start);
    if (pen == Penalty::entropy) x = clean_simplex(x.cwiseMax(1e-12));
  }

  ScmSolution sol;
  sol.zeta = zeta;
  double fx = objective(q, x, zeta, pen);
  if (record_trace) sol.trace.push_back(fx);
  double res = residual(q, x, zeta, pen, l);
  int it = 0;

  if (pen == Penalty::squared_l2) {
    Eigen::VectorXd y = x;
    double t = 1.0;
    int since_polish = 0;
    while (res > cfg.tol && it < cfg.max_iter) {
      ++it;
      const Eigen::VectorXd z = project_to_simplex(y - gradient(q, y, zeta, pen) / l);
      const double fz = objective(q, z, zeta, pen);
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      Eigen::VectorXd x_next = x;
      double f_next = fx;
      if (no_worse(fz, fx)) {
        x_next = z;
        f_next = fz;
        y = x_next + ((t - 1.0) / t_next) * (x_next - x);
        t = t_next;
      } else {
        // Momentum overshoot: restart from the last accepted point.
        y = x;
        t = 1.0;
      }
      x = std::move(x_next);
      fx = f_next;
      if (record_trace) sol.trace.push_back(fx);

      if (++since_polish >= 25) {
        since_polish = 0;
        Eigen::VectorXd cand = x;
        if (active_set_polish(q, zeta, cand)) {
          cand = clean_simplex(cand);
          const double fc = objective(q, cand, zeta, pen);
          if (no_worse(fc, fx) || residual(q, cand, zeta, pen, l) < res) {
            x = cand;
            fx = fc;
            y = x;
            t = 1.0;
            if (record_trace) sol.trace.push_back(fx);
          }
        }
      }
      res = residual(q, x, zeta, pen, l);
    }
  } else {
    // Damped Newton on the interior of the simplex; the entropy optimum has
    // full support. Falls back to an entropic mirror step when Newton stalls.
    double eta = 1.0 / l;
    const auto n = x.size();
    while (res > cfg.tol && it < cfg.max_iter) {
      ++it;
      const Eigen::VectorXd grad = gradient(q, x, zeta, pen);
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + 1, n + 1);
      kkt.topLeftCorner(n, n) = 2.0 * q.h;
      kkt.topLeftCorner(n, n).diagonal() += zeta * x.cwiseInverse();
      kkt.block(0, n, n, 1).setOnes();
      kkt.block(n, 0, 1, n).setOnes();
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
      rhs.head(n) = -grad;
      const Eigen::VectorXd dx = kkt.colPivHouseholderQr().solve(rhs).head(n);

      bool moved = false;
      if (dx.allFinite() && grad.dot(dx) < 0.0) {
        double alpha = 1.0;
        for (Eigen::Index i = 0; i < n; ++i)
          if (dx[i] < 0.0) alpha = std::min(alpha, -0.99 * x[i] / dx[i]);
        for (int bt = 0; bt < 60 && !moved; ++bt, alpha *= 0.5) {
          Eigen::VectorXd cand = x + alpha * dx;
          if (cand.minCoeff() <= 0.0) continue;
          cand /= cand.sum();
          const double fc = objective(q, cand, zeta, pen);
          if (no_worse(fc, fx)) {
            x = cand;
            fx = fc;
            moved = true;
          }
        }
      }
      if (!moved) {
        const Eigen::VectorXd gq = 2.0 * (q.h * x - q.c);
        for (int bt = 0; bt < 60; ++bt, eta *= 0.5) {
          Eigen::ArrayXd logits = (x.array().log() - eta * gq.array()) / (1.0 + eta * zeta);
          logits -= logits.maxCoeff();
          Eigen::VectorXd cand = logits.exp().matrix();
          cand /= cand.sum();
          cand = cand.cwiseMax(1e-300);
          const double fc = objective(q, cand, zeta, pen);
          if (no_worse(fc, fx)) {
            x = cand;
            fx = fc;
            moved = true;
            break;
          }
        }
      }
      if (!moved) break;
      if (record_trace) sol.trace.push_back(fx);
      res = residual(q, x, zeta, pen, l);
    }
  }

  x = clean_simplex(x);
  sol.weights.values = x;
  sol.weights.provenance = Provenance::scm;
  sol.weights.sum_constrained = true;
  sol.weights.simplex = true;
  sol.objective = objective(q, x, zeta, pen);
  sol.kkt_residual = residual(q, x, zeta, pen, l);
  sol.iterations = it;
  if (sol.kkt_residual > cfg.tol)
    throw ConvergenceError("SCM solver did not converge: KKT residual " +
                               io::format_double(sol.kkt_residual) + " after " +
                               std::to_string(it) + " iterations",
                           sol.kkt_residual, it);
  return sol;
}

DonorWeights solve_scm(const PanelBlocks& b, const ScmConfig& cfg) {
  return solve_scm_detailed(b, cfg).weights;
}

Eigen::VectorXd pre_gap(const PanelBlocks& b, const Eigen::VectorXd& g) {
  if (g.size() != b.n_controls())
    throw Error(ErrorCode::invalid_argument, "weight vector length != number of donors");
  return b.x1 - b.x0.transpose() * g;
}

double imbalance(const PanelBlocks& b, const DonorWeights& w, const Eigen::VectorXd& importance) {
  const Eigen::VectorXd v = effective_importance(importance, b.n_pre());
  if (v.size() != b.n_pre()) throw Error(ErrorCode::invalid_argument, "importance length != T0");
  const Eigen::VectorXd gap = pre_gap(b, w.values);
  return std::sqrt(std::max(0.0, gap.dot(v.asDiagonal() * gap)));
}

}  // namespace panelctrl

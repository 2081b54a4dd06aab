#include "ctgest/intensity.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numbers>

#include "ctgest/errors.hpp"
#include "ctgest/format.hpp"

namespace ctgest {

namespace {

constexpr int kGaussOrder = 16;
constexpr int kPanels = 4;

struct GaussRule {
  std::array<double, kGaussOrder> x{};  // nodes on [-1, 1]
  std::array<double, kGaussOrder> w{};
};

// Golub-Welsch would need an eigensolver; Newton on P_n is enough for one rule.
GaussRule make_gauss_rule() {
  GaussRule rule;
  constexpr int n = kGaussOrder;
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    rule.x[i] = z;
    rule.w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return rule;
}

const GaussRule& gauss_rule() {
  static const GaussRule rule = make_gauss_rule();
  return rule;
}

// u log u and u (1 + log u)^2 - 2 u log u, both with their limit 0 at u = 0.
double u_log_u(double u) { return u == 0.0 ? 0.0 : u * std::log(u); }
double u_log_sq(double u) {
  if (u == 0.0) return 0.0;
  const double l = std::log(u);
  return u * (1.0 + l) * (1.0 + l) - 2.0 * u * l;
}

void check_params(const WeibullPHParams& p) {
  if (!(p.xi > 0.0) || !(p.gamma > 0.0) || !std::isfinite(p.xi) || !std::isfinite(p.gamma) ||
      !std::isfinite(p.theta1) || !std::isfinite(p.theta2) || !std::isfinite(p.alpha))
    throw DomainError("Weibull parameters need xi > 0, gamma > 0 and finite entries (xi=" +
                      format_double(p.xi) + ", gamma=" + format_double(p.gamma) + ")");
}

}  // namespace

void validate(const WeibullPHParams& p) { check_params(p); }

double lambda_eval(const WeibullPHParams& p, double t, const Trajectory& traj,
                   std::optional<double> x_at_t) {
  check_params(p);
  if (!(t > 0.0)) throw DomainError("lambda_eval: t must be > 0");
  if (p.alpha != 0.0 && !x_at_t)
    throw InputError("lambda_eval: alpha != 0 requires X(t)");
  if (t >= risk_end(traj)) return 0.0;
  const bool pcp = traj.pcp_or_inf() < t;
  double lp = p.theta1 * (traj.azt ? 1.0 : 0.0) + p.theta2 * (pcp ? 1.0 : 0.0);
  if (p.alpha != 0.0) lp += p.alpha * *x_at_t;
  return p.xi * p.gamma * std::pow(t, p.gamma - 1.0) * std::exp(lp);
}

double segment_primitive(double gamma, double a, double b, PrimitiveKind kind) {
  if (!(gamma > 0.0)) throw DomainError("segment_primitive: gamma must be > 0");
  if (!(a >= 0.0) || !(b >= a)) throw DomainError("segment_primitive: need 0 <= a <= b");
  const double ua = std::pow(a, gamma);
  const double ub = std::pow(b, gamma);
  switch (kind) {
    case PrimitiveKind::plain: return ub - ua;
    case PrimitiveKind::logweight: return (u_log_u(ub) - u_log_u(ua)) / gamma;
    case PrimitiveKind::logweight_sq: return (u_log_sq(ub) - u_log_sq(ua)) / (gamma * gamma);
  }
  return 0.0;
}

ExtraWeights ExtraWeights::constant(double c) {
  ExtraWeights w;
  w.dim = 1;
  w.segment_constant = true;
  w.eval = [c](std::span<const double>, Eigen::Ref<Eigen::MatrixXd> out) { out.setConstant(c); };
  return w;
}

RiskIntegrals risk_integrals(const WeibullPHParams& p, const Trajectory& traj,
                             const ExtraWeights& extra, bool with_gram) {
  check_params(p);
  if (p.alpha != 0.0 && extra.dim == 0)
    throw InputError("risk_integrals: alpha != 0 needs an X weight");
  const auto k = static_cast<Eigen::Index>(extra.dim);
  const Eigen::Index m = 4 + k;

  RiskIntegrals r;
  r.event = traj.initiated();
  r.jump = Eigen::VectorXd::Zero(m);
  r.drift = Eigen::VectorXd::Zero(m);
  if (with_gram) r.gram = Eigen::MatrixXd::Zero(m, m);

  const double end = risk_end(traj);
  const auto grid = segment_grid(traj, 0.0, end);
  const std::size_t nseg = grid.size() - 1;
  const double azt = traj.azt ? 1.0 : 0.0;
  const double pcp_time = traj.pcp_or_inf();
  const double inv_xi = 1.0 / p.xi;

  // extra weights are evaluated in one batch: interior points first, then T
  std::vector<double> ts;
  std::vector<double> qw;  // quadrature weights in u = t^gamma (quadrature path)
  if (extra.segment_constant) {
    for (std::size_t s = 0; s < nseg; ++s) ts.push_back(0.5 * (grid[s] + grid[s + 1]));
  } else {
    const auto& rule = gauss_rule();
    for (std::size_t s = 0; s < nseg; ++s) {
      const double a = grid[s], b = grid[s + 1];
      const double ua = std::pow(a, p.gamma), ub = std::pow(b, p.gamma);
      for (int panel = 0; panel < kPanels; ++panel) {
        const double lo = static_cast<double>(panel) / kPanels;
        const double hi = static_cast<double>(panel + 1) / kPanels;
        for (int i = 0; i < kGaussOrder; ++i) {
          const double sv = lo + 0.5 * (hi - lo) * (rule.x[i] + 1.0);
          const double ws = 0.5 * (hi - lo) * rule.w[i];
          double u, du;
          if (a == 0.0) {
            // u = ub s^6 tames the log singularity of the gamma score at 0
            const double s5 = std::pow(sv, 5);
            u = ub * s5 * sv;
            du = 6.0 * ub * s5 * ws;
          } else {
            // geometric in u, since the log weight varies fastest near small u
            const double lr = std::log(ub / ua);
            u = ua * std::exp(lr * sv);
            du = u * lr * ws;
          }
          ts.push_back(std::pow(u, 1.0 / p.gamma));
          qw.push_back(du);
        }
      }
    }
  }
  const std::size_t n_interior = ts.size();
  if (r.event) {
    if (!(*traj.treat_start > 0.0))
      throw DomainError("patient '" + traj.id +
                        "': initiation at time 0 has zero Weibull intensity");
    ts.push_back(*traj.treat_start);
  }
  Eigen::MatrixXd ev(k, static_cast<Eigen::Index>(ts.size()));
  if (k > 0 && !ts.empty()) extra.eval(ts, ev);

  Eigen::VectorXd v0(m);
  if (extra.segment_constant) {
    for (std::size_t s = 0; s < nseg; ++s) {
      const double a = grid[s], b = grid[s + 1];
      const double pcp = pcp_time < ts[s] ? 1.0 : 0.0;
      const auto col = static_cast<Eigen::Index>(s);
      v0 << inv_xi, 0.0, azt, pcp, ev.col(col);
      double lp = p.theta1 * azt + p.theta2 * pcp;
      if (p.alpha != 0.0) lp += p.alpha * ev(0, col);
      const double c = p.xi * std::exp(lp);
      const double p0 = c * segment_primitive(p.gamma, a, b, PrimitiveKind::plain);
      const double p1 = c * segment_primitive(p.gamma, a, b, PrimitiveKind::logweight);
      r.cumhaz += p0;
      r.drift += v0 * p0;
      r.drift[1] += p1;
      if (with_gram) {
        const double p2 = c * segment_primitive(p.gamma, a, b, PrimitiveKind::logweight_sq);
        r.gram.noalias() += v0 * v0.transpose() * p0;
        r.gram.col(1) += v0 * p1;
        r.gram.row(1) += v0.transpose() * p1;
        r.gram(1, 1) += p2;
      }
    }
  } else {
    Eigen::VectorXd h(m);
    for (std::size_t i = 0; i < n_interior; ++i) {
      const double t = ts[i];
      const double pcp = pcp_time < t ? 1.0 : 0.0;
      const auto col = static_cast<Eigen::Index>(i);
      h << inv_xi, 1.0 / p.gamma + std::log(t), azt, pcp, ev.col(col);
      double lp = p.theta1 * azt + p.theta2 * pcp;
      if (p.alpha != 0.0) lp += p.alpha * ev(0, col);
      const double w = qw[i] * p.xi * std::exp(lp);
      r.cumhaz += w;
      r.drift += w * h;
      if (with_gram) r.gram.noalias() += w * h * h.transpose();
    }
  }

  if (r.event) {
    const double t = *traj.treat_start;
    r.jump << inv_xi, 1.0 / p.gamma + std::log(t), azt, (pcp_time < t ? 1.0 : 0.0),
        ev.col(static_cast<Eigen::Index>(n_interior));
  }
  return r;
}

double cumulative_weighted(const WeibullPHParams& p, const Trajectory& traj, Weight w, double c,
                           std::optional<double> x_on_risk) {
  if (p.alpha != 0.0 && !x_on_risk)
    throw InputError("cumulative_weighted: alpha != 0 requires X on the risk set");
  const auto extra = x_on_risk ? ExtraWeights::constant(*x_on_risk) : ExtraWeights::none();
  const auto r = risk_integrals(p, traj, extra, false);
  switch (w) {
    case Weight::one: return r.cumhaz;
    case Weight::inv_xi: return r.drift[0];
    case Weight::score_gamma: return r.drift[1];
    case Weight::azt: return r.drift[2];
    case Weight::pcp: return r.drift[3];
    case Weight::constant: return c * r.cumhaz;
  }
  return 0.0;
}

WeibullPHParams default_start(const Cohort& cohort) {
  double events = 0.0, exposure = 0.0;
  for (const auto& traj : cohort) {
    events += traj.initiated() ? 1.0 : 0.0;
    exposure += risk_end(traj);
  }
  WeibullPHParams p;
  p.xi = events > 0.0 && exposure > 0.0 ? events / exposure : 1.0;
  return p;
}

namespace {

struct ScoreSummary {
  Eigen::VectorXd mean_score;
  Eigen::MatrixXd info;  // sum of grams
  double mean_martingale = 0.0;
};

ScoreSummary summarize(const Cohort& cohort, const WeibullPHParams& p,
                       std::span<const ExtraWeights> x_weights, Eigen::Index m) {
  ScoreSummary s;
  s.mean_score = Eigen::VectorXd::Zero(m);
  s.info = Eigen::MatrixXd::Zero(m, m);
  double mart = 0.0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& extra = x_weights.empty() ? ExtraWeights{} : x_weights[i];
    const auto r = risk_integrals(p, cohort[i], extra, true);
    s.mean_score += r.score().head(m);
    s.info += r.gram.topLeftCorner(m, m);
    mart += (r.event ? 1.0 : 0.0) - r.cumhaz;
  }
  const double n = static_cast<double>(cohort.size());
  s.mean_score /= n;
  s.mean_martingale = mart / n;
  return s;
}

Eigen::VectorXd to_free(const WeibullPHParams& p, Eigen::Index m) {
  Eigen::VectorXd phi(m);
  phi.head<4>() << std::log(p.xi), std::log(p.gamma), p.theta1, p.theta2;
  if (m == 5) phi[4] = p.alpha;
  return phi;
}

WeibullPHParams from_free(const Eigen::VectorXd& phi) {
  WeibullPHParams p{std::exp(phi[0]), std::exp(phi[1]), phi[2], phi[3], 0.0};
  if (phi.size() == 5) p.alpha = phi[4];
  return p;
}

WeibullFit newton(const Cohort& cohort, std::span<const ExtraWeights> x_weights,
                  WeibullPHParams start, const MleOptions& opts, Eigen::Index m) {
  if (cohort.empty()) throw InputError("Weibull fit: empty cohort");
  const bool any_event =
      std::any_of(cohort.begin(), cohort.end(), [](const auto& t) { return t.initiated(); });
  if (!any_event)
    throw InputError("Weibull fit: no treatment initiations, the xi estimate is on the boundary 0");
  if (m == 4) start.alpha = 0.0;
  check_params(start);

  Eigen::VectorXd phi = to_free(start, m);
  auto current = summarize(cohort, from_free(phi), x_weights, m);
  double norm = current.mean_score.lpNorm<Eigen::Infinity>();
  int iter = 0;
  const double n = static_cast<double>(cohort.size());
  while (!(norm <= opts.tol)) {
    if (iter >= opts.max_iter)
      throw ConvergenceError("Weibull fit did not converge in " + std::to_string(iter) +
                                 " iterations (score max-norm " + format_double(norm) + ")",
                             norm, iter);
    ++iter;
    const auto p = from_free(phi);
    Eigen::MatrixXd jac = -current.info / n;
    // the weights 1/xi and 1/gamma + log t depend on the parameters themselves
    jac(0, 0) -= current.mean_martingale / (p.xi * p.xi);
    jac(1, 1) -= current.mean_martingale / (p.gamma * p.gamma);
    // chain rule to (log xi, log gamma)
    jac.col(0) *= p.xi;
    jac.col(1) *= p.gamma;
    const Eigen::VectorXd step = jac.fullPivLu().solve(-current.mean_score);
    if (!step.allFinite())
      throw ConvergenceError("Weibull fit: singular Jacobian", norm, iter);

    double scale = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= 30; ++halving, scale *= 0.5) {
      const Eigen::VectorXd trial = phi + scale * step;
      if (!trial.allFinite() || std::abs(trial[0]) > 700.0 || std::abs(trial[1]) > 700.0) continue;
      auto next = summarize(cohort, from_free(trial), x_weights, m);
      const double next_norm = next.mean_score.lpNorm<Eigen::Infinity>();
      if (std::isfinite(next_norm) && next_norm < norm) {
        phi = trial;
        current = std::move(next);
        norm = next_norm;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (norm <= std::max(opts.tol, 1e3 * std::numeric_limits<double>::epsilon())) break;
      throw ConvergenceError("Weibull fit: step halving failed to reduce the score (max-norm " +
                                 format_double(norm) + ")",
                             norm, iter);
    }
  }

  WeibullFit fit;
  fit.params = from_free(phi);
  fit.iterations = iter;
  fit.residual = norm;
  fit.info = current.info;
  fit.mean_score = current.mean_score;
  return fit;
}

}  // namespace

WeibullFit weibull_mle(const Cohort& cohort, const WeibullPHParams& init, const MleOptions& opts) {
  return newton(cohort, {}, init, opts, 4);
}

WeibullFit weibull_mle_augmented(const Cohort& cohort, std::span<const ExtraWeights> x_weights,
                                 const WeibullPHParams& init, const MleOptions& opts) {
  if (x_weights.size() != cohort.size())
    throw InputError("augmented Weibull fit: one X weight per patient required");
  for (const auto& w : x_weights)
    if (w.dim != 1) throw InputError("augmented Weibull fit: X weight must be scalar");
  return newton(cohort, x_weights, init, opts, 5);
}

}  // namespace ctgest

#include "ctgest/estimation.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <functional>

#include "ctgest/errors.hpp"
#include "ctgest/format.hpp"
#include "ctgest/special.hpp"

namespace ctgest {

namespace {

constexpr Eigen::Index kNuisance = 4;

void check_psi_dim(const ShiftModel& model) {
  if (model.dim() > 3)
    throw InputError("estimating equations are defined for dim(psi) <= 3, got " +
                     std::to_string(model.dim()));
}

// z_j(t) multipliers of X in the psi block: 1, I_PCP(t-), I_AZT.
double z_factor(std::size_t j, double t, double pcp_time, bool azt) {
  switch (j) {
    case 0: return 1.0;
    case 1: return pcp_time < t ? 1.0 : 0.0;
    default: return azt ? 1.0 : 0.0;
  }
}

// Extra weights base(t)[l] * z_j(t), flattened as j * nl + l.
ExtraWeights product_weights(std::size_t nz, std::size_t nl, bool segment_constant,
                             double pcp_time, bool azt,
                             std::function<void(std::span<const double>, Eigen::MatrixXd&)> base) {
  ExtraWeights w;
  w.dim = nz * nl;
  w.segment_constant = segment_constant;
  w.eval = [=](std::span<const double> ts, Eigen::Ref<Eigen::MatrixXd> out) {
    Eigen::MatrixXd b(static_cast<Eigen::Index>(nl), static_cast<Eigen::Index>(ts.size()));
    base(ts, b);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      for (std::size_t j = 0; j < nz; ++j) {
        const double z = z_factor(j, ts[i], pcp_time, azt);
        for (std::size_t l = 0; l < nl; ++l)
          out(static_cast<Eigen::Index>(j * nl + l), col) = z * b(static_cast<Eigen::Index>(l), col);
      }
    }
  };
  return w;
}

// X_psi(t) on the risk set and at T.
std::function<void(std::span<const double>, Eigen::MatrixXd&)> x_source(
    const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model) {
  if (model.constant_on_risk_set()) {
    const double x = x_value(traj, psi, model, 0.0);
    return [x](std::span<const double>, Eigen::MatrixXd& out) { out.setConstant(x); };
  }
  return [traj, psi, model](std::span<const double> ts, Eigen::MatrixXd& out) {
    const auto xs = x_ode_path(traj, psi, model, ts);
    for (std::size_t i = 0; i < xs.size(); ++i) out(0, static_cast<Eigen::Index>(i)) = xs[i];
  };
}

// dX/dpsi_l (t) z_j(t), only for models with X constant on the risk set.
ExtraWeights dpsi_weights(const Trajectory& traj, const ShiftParams& psi,
                          const ShiftModel& model) {
  const std::size_t k = model.dim();
  const Eigen::VectorXd grad = dx_dpsi(traj, psi, model, 0.0);
  return product_weights(k, k, true, traj.pcp_or_inf(), traj.azt,
                         [grad](std::span<const double>, Eigen::MatrixXd& out) {
                           out.colwise() = grad;
                         });
}

void require_nonempty(const Cohort& cohort, const char* who) {
  if (cohort.empty()) throw InputError(std::string(who) + ": empty cohort");
}

void require_alpha_zero(const WeibullPHParams& w) {
  if (w.alpha != 0.0) throw InputError("estimating equations require alpha = 0");
}

// A = d/dpsi of the psi block of P_n g (k x k).
Eigen::MatrixXd psi_block_derivative(const Cohort& cohort, const WeibullPHParams& weibull,
                                     const ShiftParams& psi, const ShiftModel& model) {
  const auto k = static_cast<Eigen::Index>(model.dim());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  if (model.constant_on_risk_set()) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(k * k);
    for (const auto& traj : cohort) {
      const auto r = risk_integrals(weibull, traj, dpsi_weights(traj, psi, model), false);
      sum += r.score().tail(k * k);
    }
    sum /= static_cast<double>(cohort.size());
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index l = 0; l < k; ++l) a(j, l) = sum[j * k + l];
    return a;
  }
  for (Eigen::Index l = 0; l < k; ++l) {
    const double h = 1e-6 * (1.0 + std::abs(psi[l]));
    ShiftParams up = psi, down = psi;
    up[l] += h;
    down[l] -= h;
    a.col(l) = (stacked(cohort, weibull, up, model, false).mean.tail(k) -
                stacked(cohort, weibull, down, model, false).mean.tail(k)) /
               (2.0 * h);
  }
  return a;
}

}  // namespace

ExtraWeights outcome_weights(const Trajectory& traj, const ShiftParams& psi,
                             const ShiftModel& model, std::size_t nz) {
  if (nz < 1 || nz > 3) throw InputError("outcome weights take 1 to 3 strata multipliers");
  return product_weights(nz, 1, model.constant_on_risk_set(), traj.pcp_or_inf(), traj.azt,
                         x_source(traj, psi, model));
}

ExtraWeights psi_weights(const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model) {
  check_psi_dim(model);
  return outcome_weights(traj, psi, model, model.dim());
}

GVector g_patient(const Trajectory& traj, const WeibullPHParams& weibull, const ShiftParams& psi,
                  const ShiftModel& model) {
  require_alpha_zero(weibull);
  const auto r = risk_integrals(weibull, traj, psi_weights(traj, psi, model), false);
  return {r.jump - r.drift, r.jump, r.drift};
}

Stacked stacked(const Cohort& cohort, const WeibullPHParams& weibull, const ShiftParams& psi,
                const ShiftModel& model, bool keep_per_patient) {
  require_nonempty(cohort, "stacked");
  Stacked out;
  out.mean = Eigen::VectorXd::Zero(kNuisance + static_cast<Eigen::Index>(model.dim()));
  if (keep_per_patient) out.per_patient.reserve(cohort.size());
  for (const auto& traj : cohort) {
    auto g = g_patient(traj, weibull, psi, model);
    out.mean += g.components;
    if (keep_per_patient) out.per_patient.push_back(std::move(g));
  }
  out.mean /= static_cast<double>(cohort.size());
  return out;
}

Eigen::MatrixXd stacked_jacobian(const Cohort& cohort, const WeibullPHParams& weibull,
                                 const ShiftParams& psi, const ShiftModel& model) {
  require_nonempty(cohort, "stacked_jacobian");
  require_alpha_zero(weibull);
  const auto k = static_cast<Eigen::Index>(model.dim());
  const Eigen::Index p = kNuisance + k;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  double martingale = 0.0;
  for (const auto& traj : cohort) {
    const auto r = risk_integrals(weibull, traj, psi_weights(traj, psi, model), true);
    gram += r.gram;
    martingale += (r.event ? 1.0 : 0.0) - r.cumhaz;
  }
  const double n = static_cast<double>(cohort.size());
  gram /= n;
  martingale /= n;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(p, p);
  jac.leftCols(kNuisance) = -gram.leftCols(kNuisance);
  jac(0, 0) -= martingale / (weibull.xi * weibull.xi);
  jac(1, 1) -= martingale / (weibull.gamma * weibull.gamma);
  jac.bottomRightCorner(k, k) = psi_block_derivative(cohort, weibull, psi, model);
  return jac;
}

SandwichParts sandwich(const Cohort& cohort, const WeibullPHParams& weibull,
                       const ShiftParams& psi, const ShiftModel& model) {
  require_nonempty(cohort, "sandwich");
  require_alpha_zero(weibull);
  const auto k = static_cast<Eigen::Index>(model.dim());
  const Eigen::Index p = kNuisance + k;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  for (const auto& traj : cohort)
    gram += risk_integrals(weibull, traj, psi_weights(traj, psi, model), true).gram;
  const double n = static_cast<double>(cohort.size());
  gram /= n;

  SandwichParts out;
  out.w0 = gram;
  out.v0 = Eigen::MatrixXd::Zero(p, p);
  out.v0.leftCols(kNuisance) = -gram.leftCols(kNuisance);
  const Eigen::MatrixXd a = psi_block_derivative(cohort, weibull, psi, model);
  out.v0.bottomRightCorner(k, k) = a;

  Eigen::FullPivLU<Eigen::MatrixXd> lu_a(a);
  if (!a.allFinite() || !lu_a.isInvertible())
    throw SingularError(
        "V0 is singular: the psi block P_n int dX/dpsi (dN - lambda dt) is not invertible "
        "(the nonsingularity hypothesis for asymptotic normality fails; are there treated patients?)");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(out.v0);
  if (!out.v0.allFinite() || !lu.isInvertible())
    throw SingularError("V0 is singular: the nuisance information matrix is not invertible");
  const Eigen::MatrixXd v0_inv = lu.inverse();
  Eigen::MatrixXd cov = v0_inv * out.w0 * v0_inv.transpose() / n;
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

std::vector<std::string> parameter_names(const ShiftModel& model) {
  std::vector<std::string> names{"xi", "gamma", "theta1", "theta2"};
  if (model.dim() == 1) {
    names.emplace_back("psi");
  } else {
    for (std::size_t j = 0; j < model.dim(); ++j) names.push_back("psi" + std::to_string(j + 1));
  }
  return names;
}

Eigen::MatrixX2d wald_intervals(const Eigen::VectorXd& est, const Eigen::MatrixXd& cov,
                                double level) {
  if (!(level > 0.0 && level < 1.0)) throw InputError("ci_level must lie in (0, 1)");
  const double z = normal_quantile(0.5 + 0.5 * level);
  Eigen::MatrixX2d ci(est.size(), 2);
  for (Eigen::Index i = 0; i < est.size(); ++i) {
    const double se = std::sqrt(std::max(cov(i, i), 0.0));
    ci(i, 0) = est[i] - z * se;
    ci(i, 1) = est[i] + z * se;
  }
  return ci;
}

namespace {

using VectorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct NewtonOutcome {
  Eigen::VectorXd x;
  double norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped Newton with a forward-difference Jacobian, step 1e-6 (1 + |x_j|).
// `admissible` rejects trial points outside the parameter space.
NewtonOutcome newton_fd(const VectorFn& f, Eigen::VectorXd x, double tol, int max_iter,
                        const std::function<bool(const Eigen::VectorXd&)>& admissible) {
  NewtonOutcome out;
  Eigen::VectorXd fx = f(x);
  out.norm = fx.lpNorm<Eigen::Infinity>();
  while (out.iterations < max_iter && !(out.norm <= tol)) {
    ++out.iterations;
    Eigen::MatrixXd jac(fx.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Eigen::VectorXd xh = x;
      const double h = 1e-6 * (1.0 + std::abs(x[j]));
      xh[j] += h;
      jac.col(j) = (f(xh) - fx) / h;
    }
    const Eigen::VectorXd step = jac.fullPivLu().solve(-fx);
    if (!step.allFinite()) break;
    bool accepted = false;
    double scale = 1.0;
    for (int halving = 0; halving <= 30; ++halving, scale *= 0.5) {
      const Eigen::VectorXd trial = x + scale * step;
      if (!admissible(trial)) continue;
      Eigen::VectorXd ft;
      try {
        ft = f(trial);
      } catch (const Error&) {
        continue;
      }
      const double nt = ft.lpNorm<Eigen::Infinity>();
      if (std::isfinite(nt) && nt < out.norm) {
        x = trial;
        fx = ft;
        out.norm = nt;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  out.x = x;
  out.converged = out.norm <= tol;
  return out;
}

// Illinois-modified regula falsi on a sign-changing bracket.
std::optional<double> bracket_root(const std::function<double(double)>& f, double a, double fa,
                                   double b, double fb, double tol, int max_iter,
                                   Diagnostics& diag) {
  if (std::abs(fa) <= tol) return a;
  if (std::abs(fb) <= tol) return b;
  int side = 0;
  for (int it = 0; it < max_iter; ++it) {
    ++diag.psi_iterations;
    double x = (a * fb - b * fa) / (fb - fa);
    if (!(x > std::min(a, b) && x < std::max(a, b))) x = 0.5 * (a + b);
    const double fx = f(x);
    diag.trace.emplace_back(x, fx);
    if (std::abs(fx) <= tol) return x;
    if ((fx > 0.0) == (fb > 0.0)) {
      b = x;
      fb = fx;
      if (side == -1) fa *= 0.5;
      side = -1;
    } else {
      a = x;
      fa = fx;
      if (side == 1) fb *= 0.5;
      side = 1;
    }
    if (std::abs(b - a) <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(x)))
      return x;
  }
  return std::nullopt;
}

}  // namespace

std::vector<std::pair<double, double>> psi_scan(const Cohort& cohort, const ShiftModel& model,
                                                const WeibullPHParams& weibull, double lo,
                                                double hi, int steps) {
  if (model.dim() != 1) throw InputError("psi scan needs a one-dimensional psi");
  if (steps < 1 || !(hi >= lo)) throw InputError("psi scan needs lo <= hi and steps >= 1");
  std::vector<std::pair<double, double>> out;
  for (int i = 0; i <= steps; ++i) {
    const double v = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps);
    const ShiftParams psi = ShiftParams::Constant(1, v);
    out.emplace_back(v, stacked(cohort, weibull, psi, model, false).mean[kNuisance]);
  }
  return out;
}

EstimationResult solve(const Cohort& cohort, const ShiftModel& model, const SolveOptions& opts) {
  require_nonempty(cohort, "solve");
  validate_cohort(cohort);
  check_psi_dim(model);
  if (!(opts.psi_lo < opts.psi_hi)) throw InputError("psi bracket must satisfy lo < hi");
  const auto k = static_cast<Eigen::Index>(model.dim());
  const Eigen::Index p = kNuisance + k;

  EstimationResult res;
  res.names = parameter_names(model);
  res.n = cohort.size();
  res.ci_level = opts.ci_level;
  auto& diag = res.diagnostics;

  const auto fit = weibull_mle(cohort, opts.init_weibull.value_or(default_start(cohort)),
                               opts.nuisance);
  diag.nuisance_iterations = fit.iterations;
  WeibullPHParams weibull = fit.params;
  ShiftParams psi = opts.init_psi.value_or(ShiftParams::Zero(k));
  if (psi.size() != k) throw InputError("initial psi has the wrong dimension");

  const auto psi_block = [&](const ShiftParams& v) {
    return stacked(cohort, weibull, v, model, false).mean.tail(k).eval();
  };

  bool done = false;
  if (k == 1) {
    const auto f = [&](double v) { return psi_block(ShiftParams::Constant(1, v))[0]; };
    const double flo = f(opts.psi_lo);
    const double fhi = f(opts.psi_hi);
    diag.trace.emplace_back(opts.psi_lo, flo);
    diag.trace.emplace_back(opts.psi_hi, fhi);
    if (std::isfinite(flo) && std::isfinite(fhi) && (flo <= 0.0) != (fhi <= 0.0)) {
      if (auto root = bracket_root(f, opts.psi_lo, flo, opts.psi_hi, fhi, opts.tol,
                                   std::max(opts.max_iter, 200), diag)) {
        psi = ShiftParams::Constant(1, *root);
        diag.method = "profile-bracket";
        done = true;
      }
    }
  } else {
    const auto out = newton_fd(psi_block, psi, opts.tol, opts.max_iter, [&](const Eigen::VectorXd& v) {
      return v.allFinite() && v.minCoeff() >= opts.psi_lo && v.maxCoeff() <= opts.psi_hi;
    });
    diag.psi_iterations = out.iterations;
    if (out.converged) {
      psi = out.x;
      diag.method = "profile-newton";
      done = true;
    }
  }

  if (!done) {
    // full Newton over (xi, gamma, theta, psi)
    Eigen::VectorXd x0(p);
    x0 << weibull.nuisance(), psi;
    const auto f = [&](const Eigen::VectorXd& x) {
      return stacked(cohort, WeibullPHParams::from_nuisance(x.head<4>()), x.tail(k), model, false)
          .mean;
    };
    const auto out = newton_fd(f, x0, opts.tol, opts.max_iter, [&](const Eigen::VectorXd& x) {
      return x.allFinite() && x[0] > 0.0 && x[1] > 0.0 &&
             x.tail(k).minCoeff() >= opts.psi_lo && x.tail(k).maxCoeff() <= opts.psi_hi;
    });
    diag.psi_iterations += out.iterations;
    if (!out.converged) {
      std::string trace;
      for (const auto& [v, r] : diag.trace)
        trace += " (" + format_double(v) + ", " + format_double(r) + ")";
      throw ConvergenceError("no almost-zero found: no sign change of the psi residual on [" +
                                 format_double(opts.psi_lo) + ", " + format_double(opts.psi_hi) +
                                 "] and Newton stalled at residual " + format_double(out.norm) +
                                 "; residual trace:" + trace,
                             out.norm, out.iterations);
    }
    weibull = WeibullPHParams::from_nuisance(out.x.head<4>());
    psi = out.x.tail(k);
    diag.method = "full-newton";
  }

  const Eigen::VectorXd residual = stacked(cohort, weibull, psi, model, false).mean;
  diag.residual_norm = residual.lpNorm<Eigen::Infinity>();
  if (!(diag.residual_norm <= opts.tol))
    throw ConvergenceError("estimating equations not solved to tolerance (residual " +
                               format_double(diag.residual_norm) + ")",
                           diag.residual_norm, diag.psi_iterations);
  diag.converged = true;

  res.weibull = weibull;
  res.psi = psi;
  res.params.resize(p);
  res.params << weibull.nuisance(), psi;
  const auto parts = sandwich(cohort, weibull, psi, model);
  res.v0 = parts.v0;
  res.w0 = parts.w0;
  res.cov = parts.cov;
  res.se = res.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  res.ci = wald_intervals(res.params, res.cov, opts.ci_level);
  return res;
}

AlphaDiagnostic alpha_diagnostic(const Cohort& cohort, const ShiftParams& psi,
                                 const ShiftModel& model, const MleOptions& opts) {
  require_nonempty(cohort, "alpha_diagnostic");
  std::vector<ExtraWeights> xw;
  xw.reserve(cohort.size());
  for (const auto& traj : cohort) xw.push_back(outcome_weights(traj, psi, model, 1));
  const auto start = weibull_mle(cohort, default_start(cohort), opts).params;
  const auto fit = weibull_mle_augmented(cohort, xw, start, opts);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(fit.info);
  if (!lu.isInvertible()) throw SingularError("alpha diagnostic: singular information matrix");
  const Eigen::MatrixXd inv = lu.inverse();
  AlphaDiagnostic out;
  out.alpha = fit.params.alpha;
  out.se = std::sqrt(inv(4, 4));
  out.fit = fit.params;
  out.iterations = fit.iterations;
  return out;
}

}  // namespace ctgest

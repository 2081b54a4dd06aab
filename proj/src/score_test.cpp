#include "ctgest/score_test.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>

#include "ctgest/errors.hpp"
#include "ctgest/estimation.hpp"
#include "ctgest/special.hpp"

namespace ctgest {

HExtra HExtra::outcome() {
  HExtra h;
  h.name = "outcome";
  h.dim = 1;
  h.weights = [](const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model) {
    return outcome_weights(traj, psi, model, 1);
  };
  return h;
}

HExtra HExtra::outcome_strata() {
  HExtra h;
  h.name = "outcome_strata";
  h.dim = 3;
  h.weights = [](const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model) {
    return outcome_weights(traj, psi, model, 3);
  };
  return h;
}

HExtra HExtra::zero() {
  HExtra h;
  h.name = "zero";
  h.dim = 1;
  h.weights = [](const Trajectory&, const ShiftParams&, const ShiftModel&) {
    return ExtraWeights::constant(0.0);
  };
  return h;
}

HExtra HExtra::custom(std::string name, std::size_t dim,
                      std::function<Eigen::VectorXd(const Trajectory&, double, double)> fn) {
  if (dim == 0) throw InputError("custom h_extra needs dim >= 1");
  HExtra h;
  h.name = std::move(name);
  h.dim = dim;
  h.weights = [dim, fn](const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model) {
    const auto x = outcome_weights(traj, psi, model, 1);
    ExtraWeights w;
    w.dim = dim;
    w.segment_constant = false;
    w.eval = [traj, x, fn, dim](std::span<const double> ts, Eigen::Ref<Eigen::MatrixXd> out) {
      Eigen::MatrixXd xs(1, static_cast<Eigen::Index>(ts.size()));
      x.eval(ts, xs);
      for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        const Eigen::VectorXd v = fn(traj, ts[i], xs(0, col));
        if (static_cast<std::size_t>(v.size()) != dim)
          throw InputError("custom h_extra returned the wrong dimension");
        out.col(col) = v;
      }
    };
    return w;
  };
  return h;
}

HExtra HExtra::from_name(const std::string& name) {
  if (name == "outcome") return outcome();
  if (name == "outcome_strata") return outcome_strata();
  if (name == "zero") return zero();
  throw InputError("unknown h_extra '" + name + "' (expected outcome, outcome_strata or zero)");
}

TestResult test_at_psi(const Cohort& cohort, const ShiftModel& model, const ShiftParams& psi,
                       const HExtra& h_extra, const TestOptions& opts) {
  if (cohort.empty()) throw InputError("test: empty cohort");
  validate_cohort(cohort);
  if (!h_extra.weights || h_extra.dim == 0) throw InputError("test: h_extra has no weights");
  const auto fit = weibull_mle(cohort, opts.init_weibull.value_or(default_start(cohort)),
                               opts.nuisance);

  const auto e = static_cast<Eigen::Index>(h_extra.dim);
  const Eigen::Index p = 4 + e;
  const auto n = static_cast<Eigen::Index>(cohort.size());
  Eigen::MatrixXd scores(p, n);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& traj = cohort[static_cast<std::size_t>(i)];
    const auto w = h_extra.weights(traj, psi, model);
    if (w.dim != h_extra.dim) throw InputError("test: h_extra weights have the wrong dimension");
    const auto r = risk_integrals(fit.params, traj, w, true);
    scores.col(i) = r.score();
    gram += r.gram;
  }
  gram /= static_cast<double>(n);

  // infl_i = g_i - D V^-1 g~_i with D = dg/dtheta, V = dg~/dtheta
  const Eigen::MatrixXd v = -gram.topLeftCorner(4, 4);
  const Eigen::MatrixXd d = -gram.bottomLeftCorner(e, 4);
  Eigen::FullPivLU<Eigen::MatrixXd> lu_v(v);
  if (!lu_v.isInvertible()) throw SingularError("test: nuisance information matrix is singular");
  const Eigen::MatrixXd adjust = d * lu_v.inverse();
  const Eigen::MatrixXd infl = scores.bottomRows(e) - adjust * scores.topRows(4);

  TestResult res;
  res.n = cohort.size();
  res.weibull = fit.params;
  res.h_extra = h_extra.name;
  res.extra_dim = h_extra.dim;
  res.dof = static_cast<int>(h_extra.dim);
  res.psi = psi.size() == 1 ? psi[0] : std::nan("");
  res.mean_extra = scores.bottomRows(e).rowwise().mean();
  const Eigen::MatrixXd centered = infl.colwise() - infl.rowwise().mean();
  res.sigma = centered * centered.transpose() / static_cast<double>(n);

  Eigen::FullPivLU<Eigen::MatrixXd> lu_s(res.sigma);
  const double scale = res.sigma.cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || !res.sigma.allFinite() || !lu_s.isInvertible())
    throw SingularError("test: influence covariance of h_extra '" + h_extra.name +
                        "' is singular; choose a different h_extra");
  res.statistic = static_cast<double>(n) * res.mean_extra.dot(lu_s.solve(res.mean_extra));
  res.statistic = std::max(res.statistic, 0.0);
  res.p_value = chi_square_sf(res.statistic, res.dof);
  return res;
}

TestResult run_test(const Cohort& cohort, const HExtra& h_extra, const TestOptions& opts) {
  // at psi = 0 every model has X = Y
  return test_at_psi(cohort, ShiftModel::simple_aft(), ShiftParams::Zero(1), h_extra, opts);
}

std::vector<double> confidence_region_by_inversion(const Cohort& cohort, const ShiftModel& model,
                                                   const std::vector<double>& psi_grid,
                                                   double level, const HExtra& h_extra,
                                                   const TestOptions& opts) {
  if (model.dim() != 1) throw InputError("test inversion needs a one-dimensional psi");
  if (!(level > 0.0 && level < 1.0)) throw InputError("test level must lie in (0, 1)");
  std::vector<double> region;
  if (psi_grid.empty()) return region;
  if (!std::is_sorted(psi_grid.begin(), psi_grid.end()))
    throw InputError("psi grid must be sorted");
  TestOptions fixed = opts;
  if (!fixed.init_weibull)
    fixed.init_weibull = weibull_mle(cohort, default_start(cohort), opts.nuisance).params;
  for (double v : psi_grid) {
    if (!std::isfinite(v)) throw InputError("psi grid must be finite");
    const auto r = test_at_psi(cohort, model, ShiftParams::Constant(1, v), h_extra, fixed);
    if (r.p_value >= level) region.push_back(v);
  }
  return region;
}

}  // namespace ctgest

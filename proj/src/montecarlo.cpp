#include "ctgest/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "ctgest/errors.hpp"
#include "ctgest/estimation.hpp"
#include "ctgest/score_test.hpp"
#include "ctgest/simulator.hpp"
#include "ctgest/special.hpp"

namespace ctgest {

RepRecord run_replication(const RunConfig& cfg, std::size_t rep) {
  RepRecord r;
  r.rep = rep;
  r.seed = derive_seed(cfg.dgp.seed, rep, StreamDomain::replication);
  DGPConfig dgp = cfg.dgp;
  dgp.seed = r.seed;
  const auto model = make_model(cfg.estimation);
  ShiftParams truth = ShiftParams::Zero(static_cast<Eigen::Index>(model.dim()));
  truth[0] = dgp.psi0;

  try {
    const auto sim = simulate_cohort(dgp);
    const auto& cohort = sim.cohort;
    const auto fr = fractions(cohort);
    r.initiated = fr.initiated;
    r.died_before_tau = fr.died_before_tau;

    const auto nuisance = weibull_mle(cohort, default_start(cohort)).params;
    if (has_check(cfg.mc, "estimate")) {
      auto opts = make_solve_options(cfg.estimation);
      opts.init_weibull = nuisance;
      const auto res = solve(cohort, model, opts);
      r.params = res.params;
      r.se = res.se;
      r.ci = res.ci;
      r.residual = res.diagnostics.residual_norm;
      r.estimated = true;
    }
    TestOptions topts;
    topts.init_weibull = nuisance;
    const auto h = HExtra::from_name(cfg.test.h_extra);
    if (has_check(cfg.mc, "test")) {
      const auto t = run_test(cohort, h, topts);
      r.statistic = t.statistic;
      r.p_value = t.p_value;
      r.tested = true;
    }
    if (has_check(cfg.mc, "inversion")) {
      r.p_at_truth = test_at_psi(cohort, model, truth, h, topts).p_value;
      r.inverted = true;
    }
    if (has_check(cfg.mc, "alpha")) {
      const auto at_truth = alpha_diagnostic(cohort, truth, model);
      const auto at_zero = alpha_diagnostic(cohort, ShiftParams::Zero(truth.size()), model);
      r.alpha_truth = at_truth.alpha;
      r.alpha_truth_se = at_truth.se;
      r.alpha_zero = at_zero.alpha;
      r.alpha_zero_se = at_zero.se;
      r.alpha_checked = true;
    }
    r.converged = true;
  } catch (const Error& e) {
    r.error = e.what();
    r.exit_code = e.exit_code();
  }
  return r;
}

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return std::nan("");
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double corr_of(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2) return std::nan("");
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double fraction(std::size_t hits, std::size_t total) {
  return total == 0 ? std::nan("") : static_cast<double>(hits) / static_cast<double>(total);
}

// smallest x with chi_square_sf(x, k) <= 1 - p, by bisection
double chi_square_quantile(double p, int k) {
  double lo = 0.0, hi = 1.0;
  while (chi_square_sf(hi, k) > 1.0 - p) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi_square_sf(mid, k) > 1.0 - p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

MCSummary summarize(const RunConfig& cfg, const std::vector<RepRecord>& reps) {
  MCSummary s;
  s.replications = reps.size();
  s.level = cfg.test.level;
  const auto model = make_model(cfg.estimation);
  const auto names = parameter_names(model);
  const auto p = names.size();
  std::vector<double> truth{cfg.dgp.xi0, cfg.dgp.gamma0, cfg.dgp.theta0[0], cfg.dgp.theta0[1]};
  truth.push_back(cfg.dgp.psi0);
  truth.resize(p, 0.0);

  std::vector<double> initiated, died;
  std::vector<std::vector<double>> est(p), se(p);
  std::vector<std::size_t> covered(p, 0);
  std::vector<double> z;
  std::vector<double> stats;
  std::size_t rejected = 0, inv_cover = 0, a_truth = 0, a_zero = 0;
  for (const auto& r : reps) {
    if (!r.converged) {
      ++s.failed;
      s.failures.push_back("rep " + std::to_string(r.rep) + ": " + r.error);
      continue;
    }
    ++s.converged;
    initiated.push_back(r.initiated);
    died.push_back(r.died_before_tau);
    if (r.estimated) {
      ++s.estimate_count;
      for (std::size_t j = 0; j < p; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        est[j].push_back(r.params[jj]);
        se[j].push_back(r.se[jj]);
        if (r.ci(jj, 0) <= truth[j] && truth[j] <= r.ci(jj, 1)) ++covered[j];
      }
      z.push_back((r.params[4] - truth[4]) / r.se[4]);
    }
    if (r.tested) {
      ++s.test_count;
      stats.push_back(r.statistic);
      if (r.p_value < s.level) ++rejected;
    }
    if (r.inverted) {
      ++s.inversion_count;
      if (r.p_at_truth >= s.level) ++inv_cover;
    }
    if (r.alpha_checked) {
      ++s.alpha_count;
      if (std::abs(r.alpha_truth) > 3.0 * r.alpha_truth_se) ++a_truth;
      if (std::abs(r.alpha_zero) > 3.0 * r.alpha_zero_se) ++a_zero;
    }
  }
  s.mean_initiated = mean_of(initiated);
  s.mean_died_before_tau = mean_of(died);

  if (s.estimate_count > 0) {
    for (std::size_t j = 0; j < p; ++j) {
      ParameterSummary ps;
      ps.name = names[j];
      ps.truth = truth[j];
      ps.mean = mean_of(est[j]);
      ps.bias = ps.mean - ps.truth;
      ps.emp_sd = sd_of(est[j]);
      ps.mean_se = mean_of(se[j]);
      ps.sd_over_se = ps.emp_sd / ps.mean_se;
      ps.coverage = fraction(covered[j], s.estimate_count);
      s.parameters.push_back(ps);
    }
    for (std::size_t j = 0; j < 4; ++j) s.corr_theta_psi.push_back(corr_of(est[j], est[4]));
    for (double q : {0.1, 0.5, 0.9}) {
      const double zq = normal_quantile(q);
      s.standardized_quantiles.push_back(fraction(
          static_cast<std::size_t>(std::count_if(z.begin(), z.end(), [&](double v) { return v <= zq; })),
          z.size()));
    }
  }
  if (s.test_count > 0) {
    s.rejection_rate = fraction(rejected, s.test_count);
    const int dof = static_cast<int>(HExtra::from_name(cfg.test.h_extra).dim);
    for (double q : {0.5, 0.9, 0.95}) {
      const double xq = chi_square_quantile(q, dof);
      s.statistic_cdf.push_back(fraction(
          static_cast<std::size_t>(std::count_if(stats.begin(), stats.end(), [&](double v) { return v <= xq; })),
          stats.size()));
    }
  }
  if (s.inversion_count > 0) s.inversion_coverage = fraction(inv_cover, s.inversion_count);
  if (s.alpha_count > 0) {
    s.alpha_truth_reject = fraction(a_truth, s.alpha_count);
    s.alpha_zero_reject = fraction(a_zero, s.alpha_count);
  }
  return s;
}

MCResult run_montecarlo(const RunConfig& cfg) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t total = cfg.mc.replications;
  MCResult out;
  out.reps.resize(total);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1))
      out.reps[i] = run_replication(cfg, i);
  };
  const std::size_t width = std::min(cfg.mc.parallel_width, total);
  if (width <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(width);
    for (std::size_t t = 0; t < width; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  out.summary = summarize(cfg, out.reps);
  out.summary.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

bool too_many_failures(const MCSummary& s) { return 10 * s.failed > s.replications; }

}  // namespace ctgest

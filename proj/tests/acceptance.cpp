// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Usage: ctgest_acceptance [--width N]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ctgest/estimation.hpp"
#include "ctgest/montecarlo.hpp"
#include "ctgest/report.hpp"
#include "ctgest/score_test.hpp"
#include "ctgest/shift.hpp"
#include "ctgest/simulator.hpp"
#include "ctgest/special.hpp"

using namespace ctgest;

namespace {

constexpr double kLn2 = 0.69314718055994531;
std::size_t g_width = 8;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back((ok ? "ok    " : "FAIL  ") + what);
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ShiftParams scalar(double v) { return ShiftParams::Constant(1, v); }

Trajectory random_traj(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Trajectory t;
  t.id = "r";
  t.tau = 10.0;
  t.y = 0.2 + 14.0 * u(gen);
  if (u(gen) < 0.7) t.treat_start = std::min(t.y, t.tau) * u(gen);
  if (u(gen) < 0.5) t.pcp_time = t.y * u(gen);
  t.azt = u(gen) < 0.5;
  return t;
}

RunConfig mc_config(std::size_t n, double psi0, std::size_t reps, std::uint64_t seed,
                    std::vector<std::string> checks) {
  RunConfig cfg;
  cfg.dgp.n = n;
  cfg.dgp.psi0 = psi0;
  cfg.dgp.seed = seed;
  cfg.mc.replications = reps;
  cfg.mc.parallel_width = g_width;
  cfg.mc.checks = std::move(checks);
  return cfg;
}

void report(int id, const std::string& title, const Outcome& o, double secs) {
  std::printf("%s  criterion %d: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), secs);
  for (const auto& n : o.notes) std::printf("      %s\n", n.c_str());
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------

Outcome closed_form_vs_ode() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto traj = random_traj(gen);
    const auto psi = scalar(4.0 * u(gen) - 2.0);
    for (int k = 0; k < 5; ++k) {
      const double t = std::min(traj.y, traj.tau) * u(gen);
      const double a = x_closed_form(traj, psi, ShiftModel::simple_aft(), t);
      const double b = x_ode(traj, psi, ShiftModel::simple_aft(), t, 1e-10);
      worst = std::max(worst, std::abs(a - b));
    }
  }
  const double secs = seconds_since(t0);
  o.check(worst <= 1e-8, fmt("max |closed form - ode| = %.3g over 5000 points", worst));
  o.check(secs < 5.0, fmt("runtime %.2f s < 5 s", secs));
  return o;
}

Outcome gronwall_and_flow() {
  Outcome o;
  const double delta = 0.37;

  // simple AFT: X' does not depend on X, so a final-condition shift carries through unchanged
  Trajectory traj;
  traj.id = "g";
  traj.pcp_time = 1.0;
  traj.treat_start = 2.0;
  traj.y = 5.0;
  traj.tau = 10.0;
  const auto aft = ShiftModel::simple_aft();
  double bound_gap = 0.0, flow_gap = 0.0;
  for (double t : {0.0, 1.0, 2.5, 4.0}) {
    const double base = x_ode_from(traj, scalar(kLn2), aft, 5.0, 5.0, t);
    const double bumped = x_ode_from(traj, scalar(kLn2), aft, 5.0, 5.0 + delta, t);
    bound_gap = std::max(bound_gap, std::abs(bumped - base) - delta);
  }
  for (double t1 : {0.0, 1.0, 2.0})
    for (double t2 : {2.5, 3.0, 4.5}) {
      const double mid = x_ode(traj, scalar(kLn2), aft, t2);
      flow_gap = std::max(flow_gap, std::abs(x_ode_from(traj, scalar(kLn2), aft, t2, mid, t1) -
                                             x_ode(traj, scalar(kLn2), aft, t1)));
    }
  o.check(bound_gap <= 1e-8, fmt("simple AFT: perturbation excess over bound %.3g", bound_gap));
  o.check(flow_gap <= 1e-8, fmt("simple AFT: flow identity error %.3g", flow_gap));

  // X' = -0.1 X on [0, 1] with X(1) = 2, so X(0) = 2 e^0.1
  CustomRate r;
  r.rate = [](double y, double, const Trajectory&, const ShiftParams&) { return -0.1 * y; };
  r.bound = 1.0;
  r.lipschitz_y = 0.1;
  const auto decay = ShiftModel::custom(r);
  Trajectory unit;
  unit.id = "u";
  unit.y = 2.0;
  unit.tau = 1.0;
  double excess = 0.0, exact_gap = 0.0;
  for (double t : {0.0, 0.3, 0.8}) {
    const double base = x_ode_from(unit, scalar(0.0), decay, 1.0, 2.0, t);
    const double bumped = x_ode_from(unit, scalar(0.0), decay, 1.0, 2.0 + delta, t);
    excess = std::max(excess, std::abs(bumped - base) - std::exp(0.1 * (1.0 - t)) * delta);
    exact_gap = std::max(exact_gap, std::abs(base - 2.0 * std::exp(0.1 * (1.0 - t))));
  }
  const double mid = x_ode(unit, scalar(0.0), decay, 0.5);
  const double flow = std::abs(x_ode_from(unit, scalar(0.0), decay, 0.5, mid, 0.0) - 2.0 * std::exp(0.1));
  o.check(excess <= 1e-8, fmt("exponential rate: perturbation excess over Gronwall bound %.3g", excess));
  o.check(exact_gap <= 1e-8, fmt("exponential rate: error against 2 e^{0.1 (1 - t)} %.3g", exact_gap));
  o.check(flow <= 1e-8, fmt("exponential rate: flow identity error at t = 0 %.3g", flow));
  return o;
}

struct ComponentStats {
  Eigen::VectorXd mean, se;
};

ComponentStats stacked_stats(const Cohort& cohort, const WeibullPHParams& w, const ShiftParams& psi) {
  const auto st = stacked(cohort, w, psi, ShiftModel::simple_aft(), true);
  const double n = static_cast<double>(cohort.size());
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(st.mean.size());
  for (const auto& g : st.per_patient) sq += (g.components - st.mean).cwiseAbs2();
  return {st.mean, (sq / (n - 1.0)).cwiseSqrt() / std::sqrt(n)};
}

WeibullPHParams truth_weibull(const DGPConfig& d) {
  WeibullPHParams w;
  w.xi = d.xi0;
  w.gamma = d.gamma0;
  w.theta1 = d.theta0[0];
  w.theta2 = d.theta0[1];
  return w;
}

Outcome unbiasedness(const Cohort& cohort, const DGPConfig& dgp) {
  Outcome o;
  const auto w = truth_weibull(dgp);
  const auto at_truth = stacked_stats(cohort, w, scalar(dgp.psi0));
  double worst = 0.0;
  for (Eigen::Index j = 0; j < 5; ++j) worst = std::max(worst, std::abs(at_truth.mean[j]) / at_truth.se[j]);
  o.check(worst <= 3.0, fmt("at the truth, max |mean| / SE over 5 components = %.2f", worst));
  const auto off = stacked_stats(cohort, w, scalar(dgp.psi0 + 1.0));
  double best = 0.0;
  for (Eigen::Index j = 0; j < 5; ++j) best = std::max(best, std::abs(off.mean[j]) / off.se[j]);
  o.check(best > 5.0, fmt("at psi0 + 1, max |mean| / SE = %.1f", best));
  return o;
}

Outcome martingale_variance(const Cohort& cohort, const DGPConfig& dgp) {
  Outcome o;
  const auto w = truth_weibull(dgp);
  const auto model = ShiftModel::simple_aft();
  const auto psi = scalar(dgp.psi0);
  const double n = static_cast<double>(cohort.size());
  for (int j : {0, 4}) {
    double s = 0.0, ss = 0.0, lhs = 0.0, rhs = 0.0;
    for (const auto& traj : cohort) {
      const auto r = risk_integrals(w, traj, psi_weights(traj, psi, model), true);
      const double m = r.score()[j];
      const double d = m * m - r.gram(j, j);
      lhs += m * m;
      rhs += r.gram(j, j);
      s += d;
      ss += d * d;
    }
    const double mean = s / n;
    const double se = std::sqrt((ss / n - mean * mean) / (n - 1.0));
    o.check(std::abs(mean) <= 3.0 * se,
            fmt("component %.0f: E(int h dM)^2 = %.6g vs E int h^2 lambda = %.6g", j + 1.0, lhs / n, rhs / n) +
                fmt(", gap %.2f SE", std::abs(mean) / se));
  }
  return o;
}

Outcome consistency(const MCResult& mc) {
  Outcome o;
  const auto& s = mc.summary;
  const auto& psi = s.parameters[4];
  const double r = static_cast<double>(s.estimate_count);
  o.check(s.estimate_count == 500, fmt("estimated replications %.0f of 500", r));
  o.check(std::abs(psi.mean - kLn2) <= 3.0 * psi.emp_sd / std::sqrt(r),
          fmt("mean psi %.5f, |bias| %.5f <= 3 SD / sqrt(R) = %.5f", psi.mean, std::abs(psi.bias),
              3.0 * psi.emp_sd / std::sqrt(r)));
  const double q[3] = {0.1, 0.5, 0.9};
  for (int k = 0; k < 3; ++k) {
    const double band = 3.0 * std::sqrt(q[k] * (1.0 - q[k]) / r);
    o.check(std::abs(s.standardized_quantiles[k] - q[k]) <= band,
            fmt("P(z <= normal %.2f quantile) = %.4f, band +-%.4f", q[k], s.standardized_quantiles[k], band));
  }
  o.check(s.wall_time_seconds < 600.0, fmt("wall time %.1f s < 600 s", s.wall_time_seconds));
  return o;
}

Outcome sandwich_structure(const MCResult& mc, const Cohort& one) {
  Outcome o;
  const auto& s = mc.summary;
  const auto& psi = s.parameters[4];
  o.check(psi.sd_over_se >= 0.9 && psi.sd_over_se <= 1.1,
          fmt("SD(psi) / mean SE = %.4f / %.4f = %.4f", psi.emp_sd, psi.mean_se, psi.sd_over_se));

  const auto est = solve(one, ShiftModel::simple_aft());
  const double off = est.cov.topRightCorner(4, 1).cwiseAbs().maxCoeff();
  o.check(off <= 1e-10, fmt("max |cov(theta, psi)| from the sandwich = %.3g", off));

  const double r = static_cast<double>(s.estimate_count);
  const char* names[4] = {"xi", "gamma", "theta1", "theta2"};
  for (int k = 0; k < 4; ++k) {
    const double c = s.corr_theta_psi[static_cast<std::size_t>(k)];
    const double se = 1.0 / std::sqrt(r - 3.0);  // Fisher z scale near 0
    o.check(std::abs(std::atanh(c)) <= 3.0 * se,
            std::string("corr(") + names[k] + fmt(", psi) = %.4f, 3 SE = %.4f", c, 3.0 * se));
  }
  return o;
}

Outcome coverage(const MCResult& mc) {
  Outcome o;
  const auto& psi = mc.summary.parameters[4];
  o.check(mc.summary.estimate_count >= 1000,
          fmt("estimated replications %.0f", static_cast<double>(mc.summary.estimate_count)));
  o.check(psi.coverage >= 0.925 && psi.coverage <= 0.975, fmt("Wald 95%% coverage %.4f", psi.coverage));
  return o;
}

Outcome score_test(const MCResult& null_mc, const MCResult& alt_mc) {
  Outcome o;
  const auto& h0 = null_mc.summary;
  const auto& h1 = alt_mc.summary;
  o.check(h0.rejection_rate >= 0.035 && h0.rejection_rate <= 0.065,
          fmt("size %.4f over %.0f reps", h0.rejection_rate, static_cast<double>(h0.test_count)));
  const double se = std::sqrt(h0.rejection_rate * (1.0 - h0.rejection_rate) / h0.test_count);
  o.check(h1.rejection_rate >= h0.rejection_rate + 5.0 * se,
          fmt("power %.4f vs size + 5 SE = %.4f", h1.rejection_rate, h0.rejection_rate + 5.0 * se));
  o.check(h1.inversion_coverage >= 0.925 && h1.inversion_coverage <= 0.975,
          fmt("inversion region covers psi0 at rate %.4f over %.0f reps", h1.inversion_coverage,
              static_cast<double>(h1.inversion_count)));
  // informational: null distribution of the statistic
  const double q[3] = {0.5, 0.9, 0.95};
  for (int k = 0; k < 3; ++k) {
    const double band = 3.0 * std::sqrt(q[k] * (1.0 - q[k]) / h0.test_count);
    const bool ok = std::abs(h0.statistic_cdf[static_cast<std::size_t>(k)] - q[k]) <= band;
    o.notes.push_back(std::string(ok ? "info  " : "info! ") +
                      fmt("null CDF at chi-square %.2f quantile %.4f (band +-%.4f)", q[k],
                          h0.statistic_cdf[static_cast<std::size_t>(k)], band));
  }
  return o;
}

Outcome alpha_check(const MCResult& mc) {
  Outcome o;
  const auto& first = mc.reps.front();
  o.check(first.alpha_checked && std::abs(first.alpha_truth) <= 3.0 * first.alpha_truth_se,
          fmt("first rep: alpha(psi0) = %.4f, SE %.4f", first.alpha_truth, first.alpha_truth_se));
  const auto& s = mc.summary;
  o.notes.push_back(fmt("info  alpha(psi0) beyond 3 SE in %.3f of %.0f reps", s.alpha_truth_reject,
                        static_cast<double>(s.alpha_count)));
  o.check(s.alpha_zero_reject > 0.5, fmt("alpha(0) beyond 3 SE in %.3f of reps", s.alpha_zero_reject));
  return o;
}

Outcome determinism() {
  Outcome o;
  auto cfg = mc_config(500, kLn2, 40, 20240601, {"estimate", "test", "inversion"});
  const auto dump = [&](std::size_t width) {
    cfg.mc.parallel_width = width;
    const auto mc = run_montecarlo(cfg);
    Json j;
    j["config"] = to_json(cfg);
    j["summary"] = to_json(mc.summary, false);
    return j.dump(2);
  };
  const auto a = dump(1), b = dump(8);
  o.check(a == b, fmt("mc_summary.json for widths 1 and 8: %.0f bytes each, identical", static_cast<double>(a.size())));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if (std::strcmp(argv[i], "--width") == 0) g_width = std::stoul(argv[i + 1]);

  int failed = 0;
  const auto run = [&](int id, const std::string& title, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.check(false, std::string("threw: ") + e.what());
    }
    report(id, title, o, seconds_since(t0));
    if (!o.pass) ++failed;
  };

  run(1, "closed form and backward ODE agree", closed_form_vs_ode);
  run(2, "Gronwall bound and flow property", gronwall_and_flow);

  DGPConfig big;
  big.n = 100000;
  big.seed = 101;
  const auto big_cohort = simulate_cohort(big).cohort;
  const auto fr = fractions(big_cohort);
  std::printf("      DGP at defaults (n = %zu): initiated %.4f, died before tau %.4f\n", big.n,
              fr.initiated, fr.died_before_tau);
  run(3, "stacked estimating function is unbiased at the truth",
      [&] { return unbiasedness(big_cohort, big); });
  run(4, "martingale variance identity", [&] { return martingale_variance(big_cohort, big); });

  const auto mc5 = run_montecarlo(mc_config(2000, kLn2, 500, 5005, {"estimate"}));
  DGPConfig one;
  one.n = 2000;
  one.seed = 606;
  run(5, "consistency and normality of psi", [&] { return consistency(mc5); });
  run(6, "sandwich calibration and block structure",
      [&] { return sandwich_structure(mc5, simulate_cohort(one).cohort); });
  run(7, "Wald interval coverage", [&] {
    return coverage(run_montecarlo(mc_config(1000, kLn2, 1000, 7007, {"estimate"})));
  });
  run(8, "score test size, power and inversion", [&] {
    const auto h0 = run_montecarlo(mc_config(1000, 0.0, 2000, 8008, {"test"}));
    const auto h1 = run_montecarlo(mc_config(1000, kLn2, 2000, 8009, {"test", "inversion"}));
    return score_test(h0, h1);
  });
  run(9, "added-outcome diagnostic", [&] {
    return alpha_check(run_montecarlo(mc_config(4000, kLn2, 100, 9009, {"alpha"})));
  });
  run(10, "Monte Carlo summary is independent of parallel width", determinism);

  std::printf("%d of 10 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}

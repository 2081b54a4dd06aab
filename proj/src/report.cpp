#include "ctgest/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ctgest/errors.hpp"
#include "ctgest/format.hpp"

namespace ctgest {

namespace {

// NaN and infinities have no JSON spelling
Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vec(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v[i]));
  return out;
}

Json vec(const std::vector<double>& v) {
  Json out = Json::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

}  // namespace

Json to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec(Eigen::VectorXd(m.row(i).transpose())));
  return out;
}

Json to_json(const EstimationResult& r) {
  Json j;
  j["names"] = r.names;
  Json params, se, ci;
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    params[r.names[i]] = number(r.params[ii]);
    se[r.names[i]] = number(r.se[ii]);
    ci[r.names[i]] = Json::array({number(r.ci(ii, 0)), number(r.ci(ii, 1))});
  }
  j["n"] = r.n;
  j["params"] = params;
  j["se"] = se;
  j["ci_level"] = r.ci_level;
  j["ci"] = ci;
  j["cov"] = to_json(r.cov);
  j["v0"] = to_json(r.v0);
  j["w0"] = to_json(r.w0);
  const auto& d = r.diagnostics;
  Json trace = Json::array();
  for (const auto& [psi, res] : d.trace) trace.push_back(Json::array({number(psi), number(res)}));
  j["diagnostics"] = {{"method", d.method},
                      {"converged", d.converged},
                      {"nuisance_iterations", d.nuisance_iterations},
                      {"psi_iterations", d.psi_iterations},
                      {"residual_norm", number(d.residual_norm)},
                      {"trace", trace}};
  return j;
}

Json to_json(const TestResult& r) {
  Json j;
  j["statistic"] = number(r.statistic);
  j["dof"] = r.dof;
  j["p_value"] = number(r.p_value);
  j["extra_dim"] = r.extra_dim;
  j["h_extra"] = r.h_extra;
  j["psi"] = number(r.psi);
  j["n"] = r.n;
  j["mean_extra"] = vec(r.mean_extra);
  j["sigma"] = to_json(r.sigma);
  j["nuisance"] = {{"xi", number(r.weibull.xi)},
                   {"gamma", number(r.weibull.gamma)},
                   {"theta1", number(r.weibull.theta1)},
                   {"theta2", number(r.weibull.theta2)}};
  return j;
}

Json to_json(const RunConfig& cfg) {
  const auto& g = cfg.dgp;
  const auto& e = cfg.estimation;
  Json j;
  j["dgp"] = {{"n", g.n},
              {"seed", g.seed},
              {"tau", g.tau},
              {"psi0", g.psi0},
              {"xi0", g.xi0},
              {"gamma0", g.gamma0},
              {"theta0", {g.theta0[0], g.theta0[1]}},
              {"rho_pcp", g.rho_pcp},
              {"beta_pcp_azt", g.beta_pcp_azt},
              {"mu0", g.mu0},
              {"beta_death", {g.beta_death[0], g.beta_death[1]}},
              {"p_azt", g.p_azt}};
  j["estimation"] = {{"psi_bracket", {e.psi_lo, e.psi_hi}},
                     {"tol", e.tol},
                     {"max_iter", e.max_iter},
                     {"ci_level", e.ci_level},
                     {"model", e.model},
                     {"window", e.window}};
  j["test"] = {{"h_extra", cfg.test.h_extra}, {"level", cfg.test.level}};
  j["mc"] = {{"replications", cfg.mc.replications}, {"checks", cfg.mc.checks}};
  return j;
}

Json to_json(const MCSummary& s, bool with_wall_time) {
  Json j;
  j["replications"] = s.replications;
  j["converged"] = s.converged;
  j["failed"] = s.failed;
  j["failures"] = s.failures;
  j["fractions"] = {{"initiated", number(s.mean_initiated)},
                    {"died_before_tau", number(s.mean_died_before_tau)}};
  Json params = Json::array();
  for (const auto& p : s.parameters)
    params.push_back({{"name", p.name},
                      {"truth", number(p.truth)},
                      {"mean", number(p.mean)},
                      {"bias", number(p.bias)},
                      {"emp_sd", number(p.emp_sd)},
                      {"mean_se", number(p.mean_se)},
                      {"sd_over_se", number(p.sd_over_se)},
                      {"coverage", number(p.coverage)}});
  j["estimation"] = {{"count", s.estimate_count},
                     {"parameters", params},
                     {"corr_theta_psi", vec(s.corr_theta_psi)},
                     {"standardized_psi_below_normal_q10_q50_q90", vec(s.standardized_quantiles)}};
  j["test"] = {{"count", s.test_count},
               {"level", s.level},
               {"rejection_rate", number(s.rejection_rate)},
               {"statistic_cdf_at_chisq_q50_q90_q95", vec(s.statistic_cdf)}};
  j["inversion"] = {{"count", s.inversion_count}, {"coverage", number(s.inversion_coverage)}};
  j["alpha"] = {{"count", s.alpha_count},
                {"reject_at_truth", number(s.alpha_truth_reject)},
                {"reject_at_zero", number(s.alpha_zero_reject)}};
  if (with_wall_time) j["wall_time_seconds"] = s.wall_time_seconds;
  return j;
}

void write_json(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw InputError("write failed for '" + path + "'");
}

void write_per_rep_csv(std::ostream& out, const std::vector<RepRecord>& reps,
                       const std::vector<std::string>& names) {
  out << "rep,seed,converged,exit_code,initiated,died_before_tau";
  for (const auto& n : names) out << ',' << n << ",se_" << n << ",ci_lo_" << n << ",ci_hi_" << n;
  out << ",residual,statistic,p_value,p_at_truth,alpha_truth,alpha_truth_se,alpha_zero,alpha_zero_se,error\n";
  const auto cell = [&](bool present, double v) {
    out << ',';
    if (present) out << format_double(v);
  };
  for (const auto& r : reps) {
    out << r.rep << ',' << r.seed << ',' << (r.converged ? 1 : 0) << ',' << r.exit_code;
    cell(r.converged, r.initiated);
    cell(r.converged, r.died_before_tau);
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      cell(r.estimated, r.estimated ? r.params[ii] : 0.0);
      cell(r.estimated, r.estimated ? r.se[ii] : 0.0);
      cell(r.estimated, r.estimated ? r.ci(ii, 0) : 0.0);
      cell(r.estimated, r.estimated ? r.ci(ii, 1) : 0.0);
    }
    cell(r.estimated, r.residual);
    cell(r.tested, r.statistic);
    cell(r.tested, r.p_value);
    cell(r.inverted, r.p_at_truth);
    cell(r.alpha_checked, r.alpha_truth);
    cell(r.alpha_checked, r.alpha_truth_se);
    cell(r.alpha_checked, r.alpha_zero);
    cell(r.alpha_checked, r.alpha_zero_se);
    std::string err = r.error;
    for (auto& c : err)
      if (c == '"' || c == '\n') c = '\'';
    out << ",\"" << err << "\"\n";
  }
}

void write_result_csv(std::ostream& out, const EstimationResult& r) {
  out << "n";
  for (const auto& n : r.names) out << ',' << n << ",se_" << n << ",ci_lo_" << n << ",ci_hi_" << n;
  out << ",residual,method\n" << r.n;
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out << ',' << format_double(r.params[ii]) << ',' << format_double(r.se[ii]) << ','
        << format_double(r.ci(ii, 0)) << ',' << format_double(r.ci(ii, 1));
  }
  out << ',' << format_double(r.diagnostics.residual_norm) << ',' << r.diagnostics.method << '\n';
}

void print_table(std::ostream& out, const EstimationResult& r) {
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %14s %12s %14s %14s\n", "param", "estimate", "se",
                "ci_lo", "ci_hi");
  out << line;
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    std::snprintf(line, sizeof line, "%-8s %14.6g %12.4g %14.6g %14.6g\n", r.names[i].c_str(),
                  r.params[ii], r.se[ii], r.ci(ii, 0), r.ci(ii, 1));
    out << line;
  }
  std::snprintf(line, sizeof line, "n = %zu, %s, residual %.3g, %g%% intervals\n", r.n,
                r.diagnostics.method.c_str(), r.diagnostics.residual_norm, 100.0 * r.ci_level);
  out << line;
}

}  // namespace ctgest

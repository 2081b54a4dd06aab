#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ctgest/config.hpp"
#include "ctgest/errors.hpp"
#include "ctgest/estimation.hpp"
#include "ctgest/format.hpp"
#include "ctgest/montecarlo.hpp"
#include "ctgest/report.hpp"
#include "ctgest/score_test.hpp"
#include "ctgest/simulator.hpp"

namespace fs = std::filesystem;
using namespace ctgest;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "flat key = value config file");
  cmd->add_option("--out", c.out, "output directory (overrides io.out_dir)");
  cmd->add_option("--set", c.sets, "KEY=VALUE override, repeatable");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("--set expects KEY=VALUE, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.dgp.seed = *c.seed;
  if (c.out) cfg.io.out_dir = *c.out;
  validate(cfg);
  return cfg;
}

fs::path out_dir(const RunConfig& cfg) {
  const fs::path dir(cfg.io.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw InputError("cannot create output directory '" + cfg.io.out_dir + "'");
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  return out;
}

bool wants(const RunConfig& cfg, const std::string& fmt) {
  return std::find(cfg.io.formats.begin(), cfg.io.formats.end(), fmt) != cfg.io.formats.end();
}

int cmd_simulate(const Common& c) {
  const auto cfg = resolve(c);
  const auto dir = out_dir(cfg);
  const auto sim = simulate_cohort(cfg.dgp);
  save_cohort(sim.cohort, (dir / "cohort.csv").string());
  auto lat = open_out(dir / "latents.csv");
  lat << "id,y0,t_latent\n";
  for (const auto& p : sim.latent)
    lat << p.traj.id << ',' << format_double(p.y0) << ',' << format_double(p.t_latent) << '\n';
  if (!lat) throw InputError("write failed for latents.csv");
  const auto fr = fractions(sim.cohort);
  std::printf("n = %zu, initiated %.4f, died before tau %.4f\n", sim.cohort.size(), fr.initiated,
              fr.died_before_tau);
  return 0;
}

int cmd_estimate(const Common& c, const std::string& cohort_path,
                 const std::vector<double>& scan) {
  const auto cfg = resolve(c);
  const auto dir = out_dir(cfg);
  const auto cohort = load_cohort(cohort_path);
  if (cohort.empty()) throw InputError("cohort '" + cohort_path + "' has no patients");
  const auto model = make_model(cfg.estimation);
  auto opts = make_solve_options(cfg.estimation);

  Json scan_json;
  if (!scan.empty()) {
    if (scan.size() != 3 || scan[2] < 1 || scan[2] != std::floor(scan[2]))
      throw InputError("--psi-scan expects LO HI STEPS with integer STEPS >= 1");
    const auto fit = weibull_mle(cohort, default_start(cohort), opts.nuisance);
    opts.init_weibull = fit.params;
    const auto rows = psi_scan(cohort, model, fit.params, scan[0], scan[1], static_cast<int>(scan[2]));
    auto out = open_out(dir / "psi_scan.csv");
    out << "psi,residual\n";
    Json brackets = Json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out << format_double(rows[i].first) << ',' << format_double(rows[i].second) << '\n';
      if (i > 0 && (rows[i - 1].second <= 0.0) != (rows[i].second <= 0.0))
        brackets.push_back({rows[i - 1].first, rows[i].first});
    }
    scan_json = {{"lo", scan[0]},
                 {"hi", scan[1]},
                 {"steps", static_cast<int>(scan[2])},
                 {"sign_change_brackets", brackets},
                 {"multiple_roots", brackets.size() > 1}};
    if (brackets.size() > 1)
      std::fprintf(stderr, "warning: psi scan found %zu sign changes; the root is not unique on the grid\n",
                   brackets.size());
  }

  const auto res = solve(cohort, model, opts);
  print_table(std::cout, res);
  Json j = to_json(res);
  j["model"] = model.name();
  if (!scan_json.is_null()) j["psi_scan"] = scan_json;
  write_json(j, (dir / "result.json").string());
  if (wants(cfg, "csv")) {
    auto out = open_out(dir / "result.csv");
    write_result_csv(out, res);
  }
  return 0;
}

int cmd_test(const Common& c, const std::string& cohort_path,
             const std::optional<std::string>& h_name) {
  auto cfg = resolve(c);
  if (h_name) cfg.test.h_extra = *h_name;
  const auto dir = out_dir(cfg);
  const auto cohort = load_cohort(cohort_path);
  const auto h = HExtra::from_name(cfg.test.h_extra);
  const auto r = run_test(cohort, h);
  Json j = to_json(r);
  j["level"] = cfg.test.level;
  j["reject"] = r.p_value < cfg.test.level;
  write_json(j, (dir / "test.json").string());
  std::printf("statistic %.6g, dof %d, p %.6g (h_extra %s)\n", r.statistic, r.dof, r.p_value,
              r.h_extra.c_str());
  return 0;
}

int cmd_montecarlo(const Common& c, const std::optional<std::size_t>& reps) {
  auto cfg = resolve(c);
  if (reps) cfg.mc.replications = *reps;
  validate(cfg);
  const auto dir = out_dir(cfg);
  const auto mc = run_montecarlo(cfg);
  Json j;
  j["config"] = to_json(cfg);
  // wall time lives in its own file so the summary is a pure function of the inputs
  j["summary"] = to_json(mc.summary, false);
  write_json(j, (dir / "mc_summary.json").string());
  write_json(Json{{"wall_time_seconds", mc.summary.wall_time_seconds}}, (dir / "timing.json").string());
  auto out = open_out(dir / "per_rep.csv");
  write_per_rep_csv(out, mc.reps, parameter_names(make_model(cfg.estimation)));
  const auto& s = mc.summary;
  std::printf("replications %zu, converged %zu, failed %zu, initiated %.4f, died before tau %.4f\n",
              s.replications, s.converged, s.failed, s.mean_initiated, s.mean_died_before_tau);
  for (const auto& p : s.parameters)
    std::printf("%-8s bias %11.4g  sd %10.4g  se %10.4g  coverage %.4f\n", p.name.c_str(), p.bias,
                p.emp_sd, p.mean_se, p.coverage);
  if (s.test_count > 0) std::printf("test rejection rate %.4f\n", s.rejection_rate);
  if (s.inversion_count > 0) std::printf("inversion coverage %.4f\n", s.inversion_coverage);
  std::printf("wall time %.2f s\n", s.wall_time_seconds);
  if (too_many_failures(s)) {
    std::fprintf(stderr, "error: more than 10%% of replications failed\n");
    return 3;
  }
  return 0;
}

int cmd_xpsi(const Common& c, const std::string& cohort_path, const std::string& id,
             const std::vector<double>& psi_values, std::vector<double> times) {
  const auto cfg = resolve(c);
  const auto cohort = load_cohort(cohort_path);
  const auto it = std::find_if(cohort.begin(), cohort.end(), [&](const auto& t) { return t.id == id; });
  if (it == cohort.end()) throw InputError("unknown patient id '" + id + "'");
  const auto& traj = *it;
  const auto model = make_model(cfg.estimation);
  if (psi_values.size() != model.dim())
    throw InputError("--psi expects " + std::to_string(model.dim()) + " value(s) for model " + model.name());
  const ShiftParams psi = Eigen::Map<const Eigen::VectorXd>(psi_values.data(),
                                                            static_cast<Eigen::Index>(psi_values.size()));
  if (times.empty())
    for (int i = 0; i <= 10; ++i) times.push_back(traj.tau * i / 10.0);

  std::ostringstream csv;
  csv << "t,X,closed_form,ode";
  for (std::size_t j = 0; j < model.dim(); ++j)
    csv << (model.dim() == 1 ? std::string(",dX_dpsi") : ",dX_dpsi" + std::to_string(j + 1));
  csv << '\n';
  for (double t : times) {
    const double ode = x_ode(traj, psi, model, t);
    csv << format_double(t) << ',' << format_double(x_value(traj, psi, model, t)) << ',';
    if (model.has_closed_form()) csv << format_double(x_closed_form(traj, psi, model, t));
    csv << ',' << format_double(ode);
    const auto g = dx_dpsi(traj, psi, model, t);
    for (Eigen::Index j = 0; j < g.size(); ++j) csv << ',' << format_double(g[j]);
    csv << '\n';
  }
  if (c.out) {
    auto out = open_out(out_dir(cfg) / "xpsi.csv");
    out << csv.str();
  } else {
    std::cout << csv.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"g-estimation for continuous-time structural nested models"};
  app.require_subcommand(1);

  Common common;
  std::string cohort_path;
  std::vector<double> scan;
  std::optional<std::string> h_name;
  std::optional<std::size_t> reps;
  std::string id;
  std::vector<double> psi_values;
  std::vector<double> times;

  auto* sim = app.add_subcommand("simulate", "simulate a cohort (cohort.csv, latents.csv)");
  add_common(sim, common);
  sim->add_option("--seed", common.seed, "dgp seed");

  auto* est = app.add_subcommand("estimate", "solve the estimating equations (result.json)");
  add_common(est, common);
  est->add_option("cohort", cohort_path, "cohort CSV")->required();
  est->add_option("--psi-scan", scan, "LO HI STEPS: residual of the psi equation on a grid")
      ->expected(3);

  auto* tst = app.add_subcommand("test", "score test of no treatment effect (test.json)");
  add_common(tst, common);
  tst->add_option("cohort", cohort_path, "cohort CSV")->required();
  tst->add_option("--h-extra", h_name, "outcome | outcome_strata | zero");

  auto* mc = app.add_subcommand("montecarlo", "replicated simulate/estimate/test (mc_summary.json)");
  add_common(mc, common);
  mc->add_option("--seed", common.seed, "master seed");
  mc->add_option("--reps", reps, "number of replications");

  auto* xp = app.add_subcommand("xpsi", "mimicking process of one patient (CSV)");
  add_common(xp, common);
  xp->add_option("cohort", cohort_path, "cohort CSV")->required();
  xp->add_option("--id", id, "patient id")->required();
  xp->add_option("--psi", psi_values, "psi value(s)")->required();
  xp->add_option("--t", times, "evaluation times (default 11 points on [0, tau])")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : InputError("").exit_code();
  }

  try {
    if (*sim) return cmd_simulate(common);
    if (*est) return cmd_estimate(common, cohort_path, scan);
    if (*tst) return cmd_test(common, cohort_path, h_name);
    if (*mc) return cmd_montecarlo(common, reps);
    if (*xp) return cmd_xpsi(common, cohort_path, id, psi_values, times);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

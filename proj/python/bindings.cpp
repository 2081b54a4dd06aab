#include <pybind11/eigen.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ctgest/errors.hpp"
#include "ctgest/estimation.hpp"
#include "ctgest/report.hpp"
#include "ctgest/score_test.hpp"
#include "ctgest/shift.hpp"
#include "ctgest/simulator.hpp"
#include "ctgest/special.hpp"
#include "ctgest/trajectory.hpp"

namespace py = pybind11;
using namespace ctgest;

namespace {

ShiftModel model_by_name(const std::string& name, double window) {
  if (name != "simple_aft" && name != "stratified_aft")
    throw InputError("unknown model '" + name + "' (expected simple_aft or stratified_aft)");
  const auto m = name == "simple_aft" ? ShiftModel::simple_aft() : ShiftModel::stratified_aft();
  return window > 0.0 ? ShiftModel::window_restricted(m, window) : m;
}

}  // namespace

PYBIND11_MODULE(ctgest, m) {
  m.doc() = "Continuous-time g-estimation of a structural nested failure time model";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<SingularError>(m, "SingularError", base.ptr());

  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init<>())
      .def(py::init([](std::string id, bool azt, std::optional<double> pcp_time,
                       std::optional<double> treat_start, double y, double tau) {
             Trajectory t{std::move(id), azt, pcp_time, treat_start, y, tau};
             validate(t);
             return t;
           }),
           py::arg("id"), py::arg("azt"), py::arg("pcp_time"), py::arg("treat_start"), py::arg("y"),
           py::arg("tau"))
      .def_readwrite("id", &Trajectory::id)
      .def_readwrite("azt", &Trajectory::azt)
      .def_readwrite("pcp_time", &Trajectory::pcp_time)
      .def_readwrite("treat_start", &Trajectory::treat_start)
      .def_readwrite("y", &Trajectory::y)
      .def_readwrite("tau", &Trajectory::tau)
      .def_property_readonly("initiated", &Trajectory::initiated)
      .def(py::self == py::self)
      .def("__repr__", [](const Trajectory& t) {
        return "Trajectory(id='" + t.id + "', y=" + std::to_string(t.y) + ")";
      });

  m.def("load_cohort", &load_cohort, py::arg("path"));
  m.def("save_cohort", &save_cohort, py::arg("cohort"), py::arg("path"));

  py::class_<DGPConfig>(m, "DGPConfig")
      .def(py::init<>())
      .def_readwrite("n", &DGPConfig::n)
      .def_readwrite("seed", &DGPConfig::seed)
      .def_readwrite("tau", &DGPConfig::tau)
      .def_readwrite("psi0", &DGPConfig::psi0)
      .def_readwrite("xi0", &DGPConfig::xi0)
      .def_readwrite("gamma0", &DGPConfig::gamma0)
      .def_property(
          "theta0", [](const DGPConfig& c) { return std::make_pair(c.theta0[0], c.theta0[1]); },
          [](DGPConfig& c, std::pair<double, double> v) { c.theta0[0] = v.first; c.theta0[1] = v.second; })
      .def_readwrite("rho_pcp", &DGPConfig::rho_pcp)
      .def_readwrite("beta_pcp_azt", &DGPConfig::beta_pcp_azt)
      .def_readwrite("mu0", &DGPConfig::mu0)
      .def_property(
          "beta_death", [](const DGPConfig& c) { return std::make_pair(c.beta_death[0], c.beta_death[1]); },
          [](DGPConfig& c, std::pair<double, double> v) {
            c.beta_death[0] = v.first;
            c.beta_death[1] = v.second;
          })
      .def_readwrite("p_azt", &DGPConfig::p_azt);

  m.def(
      "simulate",
      [](const DGPConfig& cfg) {
        auto sim = simulate_cohort(cfg);
        std::vector<std::pair<double, double>> latent;
        for (const auto& p : sim.latent) latent.emplace_back(p.y0, p.t_latent);
        return py::make_tuple(sim.cohort, latent);
      },
      py::arg("config"), "Returns (cohort, [(y0, t_latent), ...]).");

  m.def(
      "x_value",
      [](const Trajectory& t, std::vector<double> psi, double time, const std::string& model, double window) {
        return x_value(t, Eigen::Map<Eigen::VectorXd>(psi.data(), static_cast<Eigen::Index>(psi.size())),
                       model_by_name(model, window), time);
      },
      py::arg("traj"), py::arg("psi"), py::arg("t"), py::arg("model") = "simple_aft", py::arg("window") = 0.0);
  m.def(
      "x_ode",
      [](const Trajectory& t, std::vector<double> psi, double time, const std::string& model, double window) {
        return x_ode(t, Eigen::Map<Eigen::VectorXd>(psi.data(), static_cast<Eigen::Index>(psi.size())),
                     model_by_name(model, window), time);
      },
      py::arg("traj"), py::arg("psi"), py::arg("t"), py::arg("model") = "simple_aft", py::arg("window") = 0.0);

  py::class_<EstimationResult>(m, "EstimationResult")
      .def_readonly("names", &EstimationResult::names)
      .def_readonly("params", &EstimationResult::params)
      .def_readonly("se", &EstimationResult::se)
      .def_readonly("cov", &EstimationResult::cov)
      .def_readonly("ci", &EstimationResult::ci)
      .def_readonly("ci_level", &EstimationResult::ci_level)
      .def_readonly("n", &EstimationResult::n)
      .def_property_readonly("method", [](const EstimationResult& r) { return r.diagnostics.method; })
      .def_property_readonly("residual_norm",
                             [](const EstimationResult& r) { return r.diagnostics.residual_norm; })
      .def("to_json", [](const EstimationResult& r) { return to_json(r).dump(); });

  m.def(
      "estimate",
      [](const Cohort& cohort, const std::string& model, double window, double psi_lo, double psi_hi,
         double tol, double ci_level) {
        SolveOptions o;
        o.psi_lo = psi_lo;
        o.psi_hi = psi_hi;
        o.tol = tol;
        o.ci_level = ci_level;
        return solve(cohort, model_by_name(model, window), o);
      },
      py::arg("cohort"), py::arg("model") = "simple_aft", py::arg("window") = 0.0, py::arg("psi_lo") = -3.0,
      py::arg("psi_hi") = 3.0, py::arg("tol") = 1e-8, py::arg("ci_level") = 0.95);

  py::class_<TestResult>(m, "TestResult")
      .def_readonly("statistic", &TestResult::statistic)
      .def_readonly("dof", &TestResult::dof)
      .def_readonly("p_value", &TestResult::p_value)
      .def_readonly("h_extra", &TestResult::h_extra)
      .def_readonly("n", &TestResult::n)
      .def("to_json", [](const TestResult& r) { return to_json(r).dump(); });

  m.def(
      "test_no_effect",
      [](const Cohort& cohort, const std::string& h_extra) {
        return run_test(cohort, HExtra::from_name(h_extra));
      },
      py::arg("cohort"), py::arg("h_extra") = "outcome");

  m.def("chi_square_sf", &chi_square_sf, py::arg("x"), py::arg("k"));
  m.def("normal_quantile", &normal_quantile, py::arg("p"));
}

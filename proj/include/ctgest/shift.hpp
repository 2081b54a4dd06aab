#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ctgest/trajectory.hpp"

namespace ctgest {

// Parameter vector of the shift function; psi = 0 means "no treatment effect".
using ShiftParams = Eigen::VectorXd;

class ShiftModel;

// User-supplied shift function. The declared bound and Lipschitz constant are
// promises that check_regularity() audits; they are not enforced.
struct CustomRate {
  std::function<double(double y, double t, const Trajectory&, const ShiftParams&)> rate;
  std::size_t dim = 1;
  double bound = 0.0;
  double lipschitz_y = 0.0;
  // Set when rate is 0 while untreated, so X is constant on the risk set.
  bool zero_while_untreated = false;
  std::string name = "custom";
};

// The model D_psi(y, t; Z_t) for the infinitesimal effect of treatment.
//
//   simple_aft        (1 - e^psi) 1{treated at t}
//   stratified_aft    (1 - e^{psi1 + psi2 P(t) + psi3 I_AZT}) 1{treated at t},
//                     P(t) = 1{PCP at or before t and before treatment start}
//   window_restricted inner model, zeroed when y - t > width
//   custom            arbitrary rate
//
// "Treated at t" means treat_start <= t < min(y, tau): treatment is switched
// off at the end of the observation window.
class ShiftModel {
 public:
  enum class Kind { simple_aft, stratified_aft, window_restricted, custom };

  static ShiftModel simple_aft();
  static ShiftModel stratified_aft();
  static ShiftModel window_restricted(ShiftModel inner, double width);
  static ShiftModel custom(CustomRate rate);

  Kind kind() const noexcept;
  std::size_t dim() const noexcept;
  std::string name() const;

  // x_closed_form() is available.
  bool has_closed_form() const noexcept;
  // D vanishes before treatment starts, hence X_psi is constant on [0, risk_end).
  bool constant_on_risk_set() const noexcept;

  double window_width() const;
  const ShiftModel& inner() const;
  const CustomRate& custom_rate() const;

 private:
  struct Window {
    std::shared_ptr<const ShiftModel> inner;
    double width;
  };
  using Variant = std::variant<std::monostate, Window, CustomRate>;
  ShiftModel(Kind kind, Variant v) : kind_(kind), v_(std::move(v)) {}

  Kind kind_;
  Variant v_;
};

// D_psi evaluated at ODE state y and time t in [0, tau]. Zero once dead (t >= traj.y).
double d_eval(const ShiftModel& model, const ShiftParams& psi, double y, double t,
              const Trajectory& traj);

// Exponent kappa of the time ratio e^kappa applied during treatment (AFT
// variants only). Depends on the patient through P and I_AZT.
double aft_exponent(const ShiftModel& model, const ShiftParams& psi, const Trajectory& traj);

// X_psi(t) for simple_aft / stratified_aft; throws InputError otherwise.
double x_closed_form(const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model,
                     double t);

// X_psi(t) by backward integration of X' = D from X(min(y, tau)) = y. The
// integrator restarts at every event time of the trajectory.
double x_ode(const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model, double t,
             double tol = 1e-10);

// Solution of X' = D through (s_final, x_final), evaluated at t <= s_final.
double x_ode_from(const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model,
                  double s_final, double x_final, double t, double tol = 1e-10);

// X_psi at several times (any order) from a single backward sweep.
std::vector<double> x_ode_path(const Trajectory& traj, const ShiftParams& psi,
                               const ShiftModel& model, std::span<const double> times,
                               double tol = 1e-10);

// Closed form when available, otherwise x_ode.
double x_value(const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model,
               double t, double tol = 1e-10);

// Gradient of X_psi(t) in psi. Analytic for the AFT variants, central
// differences (step 1e-6 (1 + |psi_j|)) on x_ode for the rest.
Eigen::VectorXd dx_dpsi(const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model,
                        double t);

struct RegularityReport {
  double bound = 0.0;
  double lipschitz_y = 0.0;
  double lipschitz_t = 0.0;
  std::vector<std::string> violations;
};

// Empirical |D| bound and difference-quotient Lipschitz constants on a
// grid_n x grid_n lattice over [0, tau] x [0, 2y]. t-quotients whose interval
// contains an event time are skipped.
RegularityReport check_regularity(const ShiftModel& model, const ShiftParams& psi,
                                  const Trajectory& traj, int grid_n);

}  // namespace ctgest

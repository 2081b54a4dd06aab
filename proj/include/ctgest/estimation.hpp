#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctgest/intensity.hpp"
#include "ctgest/shift.hpp"
#include "ctgest/trajectory.hpp"

namespace ctgest {

// Per-patient estimating function
//   g = int h_t(X_psi(t), Z_{t-}) (dN(t) - lambda(t) dt),
//   h = (1/xi, 1/gamma + log t, I_AZT, I_PCP(t-), X_psi(t) z(t)),
// with z = 1 for one-dimensional psi and z = (1, I_PCP(t-), I_AZT) truncated
// to dim(psi) otherwise.
struct GVector {
  Eigen::VectorXd components;
  Eigen::VectorXd jump_part;
  Eigen::VectorXd drift_part;
};

// Weights X_psi(t) z_j(t) for one patient; constant on the risk set whenever
// the model allows it, otherwise X is integrated along a quadrature grid.
ExtraWeights psi_weights(const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model);

// X_psi(t) z_j(t) for j < nz (nz <= 3), independent of the model's dimension.
ExtraWeights outcome_weights(const Trajectory& traj, const ShiftParams& psi,
                             const ShiftModel& model, std::size_t nz);

GVector g_patient(const Trajectory& traj, const WeibullPHParams& weibull, const ShiftParams& psi,
                  const ShiftModel& model);

struct Stacked {
  Eigen::VectorXd mean;
  std::vector<GVector> per_patient;
};

// P_n g over the cohort.
Stacked stacked(const Cohort& cohort, const WeibullPHParams& weibull, const ShiftParams& psi,
                const ShiftModel& model, bool keep_per_patient = true);

// Exact Jacobian of P_n g in (xi, gamma, theta1, theta2, psi). At a zero of
// the nuisance scores it coincides with V0.
Eigen::MatrixXd stacked_jacobian(const Cohort& cohort, const WeibullPHParams& weibull,
                                 const ShiftParams& psi, const ShiftModel& model);

struct SandwichParts {
  Eigen::MatrixXd v0;
  Eigen::MatrixXd w0;
  Eigen::MatrixXd cov;  // V0^-1 W0 V0^-T / n
};

// Plug-in sandwich:
//   W0     = P_n int h h^T lambda dt
//   V0_nui = -P_n int h (d log lambda / d nuisance)^T lambda dt
//   V0_psi = rows of h depending on X: P_n int z dX/dpsi (dN - lambda dt)
SandwichParts sandwich(const Cohort& cohort, const WeibullPHParams& weibull,
                       const ShiftParams& psi, const ShiftModel& model);

struct SolveOptions {
  double psi_lo = -3.0;
  double psi_hi = 3.0;
  double tol = 1e-8;
  int max_iter = 100;
  double ci_level = 0.95;
  MleOptions nuisance;
  std::optional<WeibullPHParams> init_weibull;
  std::optional<ShiftParams> init_psi;
};

struct Diagnostics {
  std::string method;  // "profile-bracket", "profile-newton" or "full-newton"
  int nuisance_iterations = 0;
  int psi_iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
  std::vector<std::pair<double, double>> trace;  // (psi, residual) visited by the 1-D search
};

struct EstimationResult {
  std::vector<std::string> names;
  WeibullPHParams weibull;
  ShiftParams psi;
  Eigen::VectorXd params;  // (xi, gamma, theta1, theta2, psi...)
  Eigen::VectorXd se;
  Eigen::MatrixXd v0;
  Eigen::MatrixXd w0;
  Eigen::MatrixXd cov;
  Eigen::MatrixX2d ci;
  double ci_level = 0.95;
  std::size_t n = 0;
  Diagnostics diagnostics;
};

// Names of the stacked parameters for a model.
std::vector<std::string> parameter_names(const ShiftModel& model);

// Profile solver: Weibull MLE for the nuisance part, then a safeguarded
// bracketing root search in psi (one dimension) or damped Newton (more).
// Falls back to Newton over all parameters with a finite-difference Jacobian.
EstimationResult solve(const Cohort& cohort, const ShiftModel& model, const SolveOptions& opts = {});

// Wald intervals from an estimate vector and covariance.
Eigen::MatrixX2d wald_intervals(const Eigen::VectorXd& est, const Eigen::MatrixXd& cov,
                                double level);

// Fifth-component residual on an evenly spaced psi grid at fixed nuisance.
std::vector<std::pair<double, double>> psi_scan(const Cohort& cohort, const ShiftModel& model,
                                                const WeibullPHParams& weibull, double lo,
                                                double hi, int steps);

struct AlphaDiagnostic {
  double alpha = 0.0;
  double se = 0.0;
  WeibullPHParams fit;
  int iterations = 0;
};

// Fits the intensity with alpha X_psi(t) added to the linear predictor at
// fixed psi. For the true psi, alpha should be 0.
AlphaDiagnostic alpha_diagnostic(const Cohort& cohort, const ShiftParams& psi,
                                 const ShiftModel& model, const MleOptions& opts = {});

}  // namespace ctgest

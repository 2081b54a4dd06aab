#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ctgest/trajectory.hpp"

namespace ctgest {

// Time-dependent Weibull proportional hazards intensity for treatment initiation
//   lambda(t) = 1{at risk} xi gamma t^(gamma-1) exp(theta1 I_AZT + theta2 I_PCP(t-) + alpha X(t)).
// alpha is only ever nonzero in the augmented fit of alpha_diagnostic().
struct WeibullPHParams {
  double xi = 1.0;
  double gamma = 1.0;
  double theta1 = 0.0;
  double theta2 = 0.0;
  double alpha = 0.0;

  // (xi, gamma, theta1, theta2)
  Eigen::Vector4d nuisance() const { return {xi, gamma, theta1, theta2}; }
  static WeibullPHParams from_nuisance(const Eigen::Vector4d& v) {
    return {v[0], v[1], v[2], v[3], 0.0};
  }
};

void validate(const WeibullPHParams& p);

double lambda_eval(const WeibullPHParams& p, double t, const Trajectory& traj,
                   std::optional<double> x_at_t = std::nullopt);

enum class PrimitiveKind {
  plain,         // int_a^b gamma t^(gamma-1) dt
  logweight,     // int_a^b (1/gamma + log t) gamma t^(gamma-1) dt
  logweight_sq,  // int_a^b (1/gamma + log t)^2 gamma t^(gamma-1) dt
};

double segment_primitive(double gamma, double a, double b, PrimitiveKind kind);

enum class Weight { one, inv_xi, score_gamma, azt, pcp, constant };

// int_0^risk_end w(t) lambda(t) dt. `c` is the value of Weight::constant;
// `x_on_risk` is the (constant) X on the risk set, needed when alpha != 0.
double cumulative_weighted(const WeibullPHParams& p, const Trajectory& traj, Weight w,
                           double c = 1.0, std::optional<double> x_on_risk = std::nullopt);

// Additional weight functions appended to the nuisance weights
// (1/xi, 1/gamma + log t, I_AZT, I_PCP(t-)). eval fills out(j, i) = w_j(ts[i]).
struct ExtraWeights {
  std::size_t dim = 0;
  // every w_j is constant between consecutive event times of the patient
  bool segment_constant = true;
  std::function<void(std::span<const double> ts, Eigen::Ref<Eigen::MatrixXd> out)> eval;

  static ExtraWeights none() { return {}; }
  // w_0(t) = c on the whole risk set.
  static ExtraWeights constant(double c);
};

// Per-patient integrals of h = (nuisance weights, extra weights) against the
// counting process and its compensator.
struct RiskIntegrals {
  bool event = false;
  Eigen::VectorXd jump;   // h(T) when initiated, else 0
  Eigen::VectorXd drift;  // int h lambda dt
  Eigen::MatrixXd gram;   // int h h^T lambda dt (empty unless requested)
  double cumhaz = 0.0;    // int lambda dt

  Eigen::VectorXd score() const { return jump - drift; }
};

// When p.alpha != 0 the intensity carries exp(alpha * w_0(t)); extra.dim >= 1.
// Closed-form segment integrals are used when the extra weights are segment
// constant, Gauss-Legendre quadrature in u = t^gamma otherwise.
RiskIntegrals risk_integrals(const WeibullPHParams& p, const Trajectory& traj,
                             const ExtraWeights& extra, bool with_gram);

struct MleOptions {
  double tol = 1e-10;
  int max_iter = 100;
};

struct WeibullFit {
  WeibullPHParams params;
  int iterations = 0;
  double residual = 0.0;      // max-norm of the mean score at params
  Eigen::MatrixXd info;       // sum over patients of int h h^T lambda dt
  Eigen::VectorXd mean_score;
};

// Zeros of the partial score equations for (xi, gamma, theta1, theta2) by
// damped Newton on (log xi, log gamma, theta1, theta2).
WeibullFit weibull_mle(const Cohort& cohort, const WeibullPHParams& init = {},
                       const MleOptions& opts = {});

// Same, with alpha also free; x_weights[i] supplies X(t) for patient i.
WeibullFit weibull_mle_augmented(const Cohort& cohort, std::span<const ExtraWeights> x_weights,
                                 const WeibullPHParams& init = {}, const MleOptions& opts = {});

// Starting point: exponential rate MLE, gamma = 1, theta = 0.
WeibullPHParams default_start(const Cohort& cohort);

}  // namespace ctgest

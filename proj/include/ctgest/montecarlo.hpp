#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctgest/config.hpp"

namespace ctgest {

// One replication of simulate -> estimate -> test.
struct RepRecord {
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  bool converged = false;  // every requested check ran without error
  std::string error;
  int exit_code = 0;
  double initiated = 0.0;
  double died_before_tau = 0.0;

  bool estimated = false;
  Eigen::VectorXd params;
  Eigen::VectorXd se;
  Eigen::MatrixX2d ci;
  double residual = 0.0;

  bool tested = false;
  double statistic = 0.0;  // no-effect test (psi = 0)
  double p_value = 1.0;

  bool inverted = false;
  double p_at_truth = 1.0;  // test of D = D_psi0; psi0 in the region iff p >= level

  bool alpha_checked = false;
  double alpha_truth = 0.0, alpha_truth_se = 0.0;  // alpha at psi0
  double alpha_zero = 0.0, alpha_zero_se = 0.0;    // alpha at psi = 0
};

struct ParameterSummary {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double emp_sd = 0.0;
  double mean_se = 0.0;
  double sd_over_se = 0.0;
  double coverage = 0.0;
};

struct MCSummary {
  std::size_t replications = 0;
  std::size_t converged = 0;
  std::size_t failed = 0;
  std::vector<std::string> failures;  // "rep <i>: <message>", in rep order

  double mean_initiated = 0.0;
  double mean_died_before_tau = 0.0;

  std::size_t estimate_count = 0;
  std::vector<ParameterSummary> parameters;
  std::vector<double> corr_theta_psi;  // corr(param_i, psi) for the four nuisance parameters
  // fraction of standardized (psi - psi0) / se below the normal 10/50/90% quantiles
  std::vector<double> standardized_quantiles;

  double level = 0.05;
  std::size_t test_count = 0;
  double rejection_rate = 0.0;  // size when psi0 = 0, power otherwise
  std::vector<double> statistic_cdf;  // at chi-square 50/90/95% quantiles

  std::size_t inversion_count = 0;
  double inversion_coverage = 0.0;

  std::size_t alpha_count = 0;
  double alpha_truth_reject = 0.0;  // |alpha| > 3 se at psi0
  double alpha_zero_reject = 0.0;   // |alpha| > 3 se at psi = 0

  double wall_time_seconds = 0.0;
};

struct MCResult {
  std::vector<RepRecord> reps;
  MCSummary summary;
};

// Replication r simulates with seed derive_seed(cfg.dgp.seed, r, replication).
// Records are independent of mc.parallel_width. Failed replications are
// recorded, not thrown.
MCResult run_montecarlo(const RunConfig& cfg);

// More than 10% of replications failed.
bool too_many_failures(const MCSummary& s);

RepRecord run_replication(const RunConfig& cfg, std::size_t rep);

// Aggregates records (in rep order); wall time is left at 0.
MCSummary summarize(const RunConfig& cfg, const std::vector<RepRecord>& reps);

}  // namespace ctgest

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctgest/rng.hpp"
#include "ctgest/trajectory.hpp"

namespace ctgest {

// Data-generating process. At the defaults about 62% of patients initiate
// prophylaxis and 90% die before tau (psi0 = ln 2).
struct DGPConfig {
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  double tau = 10.0;
  double psi0 = 0.69314718055994531;  // ln 2
  double xi0 = 0.1;
  double gamma0 = 1.2;
  double theta0[2] = {0.5, 0.8};  // AZT, PCP effects on initiation
  double rho_pcp = 0.15;
  double beta_pcp_azt = -0.5;
  double mu0 = 0.08;
  double beta_death[2] = {0.3, 1.0};  // AZT, PCP effects on untreated death
  double p_azt = 0.5;
};

void validate(const DGPConfig& cfg);

struct SimulatedPatient {
  Trajectory traj;
  double y0 = 0.0;        // untreated outcome Y^(0)
  double t_latent = 0.0;  // initiation draw; +inf when the window hazard is exhausted
};

// Segment of a cumulative hazard H(t) = scale (t^shape - a^shape) on [a, b).
// shape = 1 gives a constant rate.
struct HazardSegment {
  double a = 0.0;
  double b = kInf;
  double scale = 0.0;
  double shape = 1.0;
};

// Smallest t with H(t) = -log(u); +inf when the total hazard is below -log(u).
// Segments must be contiguous from 0.
double invert_piecewise_hazard(std::span<const HazardSegment> segments, double u);

// Observed outcome for a patient who starts treatment at T with untreated
// outcome y0 and time ratio e^psi0, treatment switched off at tau.
double treated_outcome(double y0, double t_start, double psi0, double tau);

// Patient stream: 4 uniforms in order (arm, PCP, death, initiation).
SimulatedPatient simulate_patient(const DGPConfig& cfg, SplitMix64& stream, std::size_t index);

struct SimulatedCohort {
  Cohort cohort;
  std::vector<SimulatedPatient> latent;
};

// Patient i draws from SplitMix64(derive_seed(seed, i, patient)).
SimulatedCohort simulate_cohort(const DGPConfig& cfg);

struct CohortFractions {
  double initiated = 0.0;
  double died_before_tau = 0.0;
};
CohortFractions fractions(const Cohort& cohort);

}  // namespace ctgest

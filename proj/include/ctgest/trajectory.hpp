#pragma once

#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ctgest {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// One patient's observed path: randomized arm, first PCP event, start of
// prophylaxis (single jump of the treatment counting process), death time
// and the end of the treatment-observation window.
struct Trajectory {
  std::string id;
  bool azt = false;
  std::optional<double> pcp_time;
  std::optional<double> treat_start;
  double y = 0.0;
  double tau = 0.0;

  bool initiated() const noexcept { return treat_start.has_value(); }
  double treat_or_inf() const noexcept { return treat_start.value_or(kInf); }
  double pcp_or_inf() const noexcept { return pcp_time.value_or(kInf); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

using Cohort = std::vector<Trajectory>;

// Indicator covariates at time t, all evaluated as left limits so that every
// integrand against dN and lambda dt is predictable.
struct CovariateState {
  bool azt = false;
  bool pcp_left = false;      // pcp_time < t
  bool treated_left = false;  // treat_start < t
  bool at_risk = false;       // t < risk_end

  friend bool operator==(const CovariateState&, const CovariateState&) = default;
};

// Throws InputError describing the first violated invariant.
void validate(const Trajectory& traj);

// Unique ids, one shared tau, every trajectory valid.
void validate_cohort(const Cohort& cohort);

CovariateState covariates_at(const Trajectory& traj, double t);

// End of the at-risk set [0, risk_end) for treatment initiation.
double risk_end(const Trajectory& traj) noexcept;

// Length of (t1, t2) intersected with [treat_start, inf).
double duration_treated(const Trajectory& traj, double t1, double t2);

// {a, b} together with every event time strictly inside (a, b), sorted.
// Indicator covariates are constant between consecutive breakpoints.
std::vector<double> segment_grid(const Trajectory& traj, double a, double b);

// CSV schema: id,azt,pcp_time,treat_start,y,tau (empty field = absent).
Cohort read_cohort(std::istream& in);
void write_cohort(std::ostream& out, const Cohort& cohort);
Cohort load_cohort(const std::string& path);
void save_cohort(const Cohort& cohort, const std::string& path);

}  // namespace ctgest

#include "ctgest/simulator.hpp"

#include <cmath>
#include <string>

#include "ctgest/errors.hpp"

namespace ctgest {

void validate(const DGPConfig& cfg) {
  const auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw InputError(std::string("dgp.") + name + " must be positive and finite");
  };
  const auto finite = [](double v, const char* name) {
    if (!std::isfinite(v)) throw InputError(std::string("dgp.") + name + " must be finite");
  };
  positive(cfg.tau, "tau");
  positive(cfg.xi0, "xi0");
  positive(cfg.gamma0, "gamma0");
  positive(cfg.rho_pcp, "rho_pcp");
  positive(cfg.mu0, "mu0");
  finite(cfg.psi0, "psi0");
  finite(cfg.theta0[0], "theta0");
  finite(cfg.theta0[1], "theta0");
  finite(cfg.beta_pcp_azt, "beta_pcp_azt");
  finite(cfg.beta_death[0], "beta_death");
  finite(cfg.beta_death[1], "beta_death");
  if (!(cfg.p_azt >= 0.0 && cfg.p_azt <= 1.0)) throw InputError("dgp.p_azt must lie in [0, 1]");
}

double invert_piecewise_hazard(std::span<const HazardSegment> segments, double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("invert_piecewise_hazard: u must lie in (0, 1)");
  if (segments.empty()) throw InputError("invert_piecewise_hazard: no segments");
  if (segments.front().a != 0.0) throw InputError("hazard segments must start at 0");
  double target = -std::log(u);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (!(s.b >= s.a) || !(s.scale >= 0.0) || !(s.shape > 0.0) || !std::isfinite(s.scale))
      throw InputError("malformed hazard segment " + std::to_string(i));
    if (i > 0 && s.a != segments[i - 1].b)
      throw InputError("hazard segments are not contiguous at segment " + std::to_string(i));
    if (s.scale == 0.0 || s.a == s.b) continue;
    const double start = std::pow(s.a, s.shape);
    const double total = s.scale * (std::pow(s.b, s.shape) - start);
    if (total >= target) {
      const double t = s.shape == 1.0 ? s.a + target / s.scale
                                      : std::pow(start + target / s.scale, 1.0 / s.shape);
      return std::min(t, s.b);
    }
    target -= total;
  }
  return kInf;
}

double treated_outcome(double y0, double t_start, double psi0, double tau) {
  // time-ratio e^-psi0 while treated, switched off at tau
  // written as y0 plus a correction so that psi0 = 0 returns y0 exactly
  const double on_treatment = y0 + std::expm1(-psi0) * (y0 - t_start);
  if (on_treatment <= tau) return on_treatment;
  return y0 - std::expm1(psi0) * (tau - t_start);
}

SimulatedPatient simulate_patient(const DGPConfig& cfg, SplitMix64& stream, std::size_t index) {
  const double u_arm = stream.uniform();
  const double u_pcp = stream.uniform();
  const double u_death = stream.uniform();
  const double u_init = stream.uniform();

  SimulatedPatient out;
  auto& traj = out.traj;
  traj.id = "p" + std::to_string(index);
  traj.tau = cfg.tau;
  traj.azt = u_arm < cfg.p_azt;
  const double azt = traj.azt ? 1.0 : 0.0;

  const double pcp = -std::log(u_pcp) / (cfg.rho_pcp * std::exp(cfg.beta_pcp_azt * azt));

  const double death_base = cfg.mu0 * std::exp(cfg.beta_death[0] * azt);
  const HazardSegment death[] = {{0.0, pcp, death_base, 1.0},
                                 {pcp, kInf, death_base * std::exp(cfg.beta_death[1]), 1.0}};
  out.y0 = invert_piecewise_hazard(death, u_death);

  const double window = std::min(out.y0, cfg.tau);
  const double init_base = cfg.xi0 * std::exp(cfg.theta0[0] * azt);
  std::vector<HazardSegment> init;
  if (pcp < window) {
    init.push_back({0.0, pcp, init_base, cfg.gamma0});
    init.push_back({pcp, window, init_base * std::exp(cfg.theta0[1]), cfg.gamma0});
  } else {
    init.push_back({0.0, window, init_base, cfg.gamma0});
  }
  out.t_latent = invert_piecewise_hazard(init, u_init);

  if (out.t_latent < window) {
    traj.treat_start = out.t_latent;
    traj.y = treated_outcome(out.y0, out.t_latent, cfg.psi0, cfg.tau);
  } else {
    traj.y = out.y0;
  }
  if (pcp <= traj.y) traj.pcp_time = pcp;
  return out;
}

SimulatedCohort simulate_cohort(const DGPConfig& cfg) {
  validate(cfg);
  SimulatedCohort out;
  out.cohort.reserve(cfg.n);
  out.latent.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    SplitMix64 stream(derive_seed(cfg.seed, i, StreamDomain::patient));
    auto p = simulate_patient(cfg, stream, i);
    out.cohort.push_back(p.traj);
    out.latent.push_back(std::move(p));
  }
  return out;
}

CohortFractions fractions(const Cohort& cohort) {
  CohortFractions f;
  if (cohort.empty()) return f;
  for (const auto& t : cohort) {
    f.initiated += t.initiated() ? 1.0 : 0.0;
    f.died_before_tau += t.y < t.tau ? 1.0 : 0.0;
  }
  f.initiated /= static_cast<double>(cohort.size());
  f.died_before_tau /= static_cast<double>(cohort.size());
  return f;
}

}  // namespace ctgest

#include "ctgest/shift.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctgest/errors.hpp"
#include "ctgest/format.hpp"

namespace ctgest {

ShiftModel ShiftModel::simple_aft() { return ShiftModel(Kind::simple_aft, std::monostate{}); }

ShiftModel ShiftModel::stratified_aft() {
  return ShiftModel(Kind::stratified_aft, std::monostate{});
}

ShiftModel ShiftModel::window_restricted(ShiftModel inner, double width) {
  if (!(width > 0.0) || !std::isfinite(width))
    throw InputError("window_restricted: width must be positive and finite");
  return ShiftModel(Kind::window_restricted,
                    Window{std::make_shared<const ShiftModel>(std::move(inner)), width});
}

ShiftModel ShiftModel::custom(CustomRate rate) {
  if (!rate.rate) throw InputError("custom shift model: empty rate function");
  if (rate.dim == 0) throw InputError("custom shift model: dim must be >= 1");
  return ShiftModel(Kind::custom, std::move(rate));
}

ShiftModel::Kind ShiftModel::kind() const noexcept { return kind_; }

std::size_t ShiftModel::dim() const noexcept {
  switch (kind_) {
    case Kind::simple_aft: return 1;
    case Kind::stratified_aft: return 3;
    case Kind::window_restricted: return std::get<Window>(v_).inner->dim();
    case Kind::custom: return std::get<CustomRate>(v_).dim;
  }
  return 0;
}

std::string ShiftModel::name() const {
  switch (kind_) {
    case Kind::simple_aft: return "simple_aft";
    case Kind::stratified_aft: return "stratified_aft";
    case Kind::window_restricted: {
      const auto& w = std::get<Window>(v_);
      return "window_restricted(" + w.inner->name() + ", " + format_double(w.width) + ")";
    }
    case Kind::custom: return std::get<CustomRate>(v_).name;
  }
  return "";
}

bool ShiftModel::has_closed_form() const noexcept {
  return kind_ == Kind::simple_aft || kind_ == Kind::stratified_aft;
}

bool ShiftModel::constant_on_risk_set() const noexcept {
  switch (kind_) {
    case Kind::simple_aft:
    case Kind::stratified_aft: return true;
    case Kind::window_restricted: return std::get<Window>(v_).inner->constant_on_risk_set();
    case Kind::custom: return std::get<CustomRate>(v_).zero_while_untreated;
  }
  return false;
}

double ShiftModel::window_width() const {
  if (kind_ != Kind::window_restricted) throw InputError("not a window_restricted model");
  return std::get<Window>(v_).width;
}

const ShiftModel& ShiftModel::inner() const {
  if (kind_ != Kind::window_restricted) throw InputError("not a window_restricted model");
  return *std::get<Window>(v_).inner;
}

const CustomRate& ShiftModel::custom_rate() const {
  if (kind_ != Kind::custom) throw InputError("not a custom model");
  return std::get<CustomRate>(v_);
}

namespace {

void check_dim(const ShiftModel& model, const ShiftParams& psi) {
  if (static_cast<std::size_t>(psi.size()) != model.dim())
    throw InputError(model.name() + " expects psi of dimension " +
                     std::to_string(model.dim()) + ", got " + std::to_string(psi.size()));
  if (!psi.allFinite()) throw InputError("psi has non-finite entries");
}

bool treated_at(const Trajectory& traj, double t) {
  return traj.treat_start && *traj.treat_start <= t && t < traj.y && t < traj.tau;
}

// 1{PCP at or before t and before treatment start}; only consulted while treated.
bool pcp_history(const Trajectory& traj) {
  return traj.pcp_time && traj.treat_start && *traj.pcp_time < *traj.treat_start;
}

double d_eval_unchecked(const ShiftModel& model, const ShiftParams& psi, double y, double t,
                        const Trajectory& traj) {
  if (t >= traj.y) return 0.0;
  switch (model.kind()) {
    case ShiftModel::Kind::simple_aft:
    case ShiftModel::Kind::stratified_aft:
      return treated_at(traj, t) ? 1.0 - std::exp(aft_exponent(model, psi, traj)) : 0.0;
    case ShiftModel::Kind::window_restricted:
      if (y - t > model.window_width()) return 0.0;
      return d_eval_unchecked(model.inner(), psi, y, t, traj);
    case ShiftModel::Kind::custom:
      return model.custom_rate().rate(y, t, traj, psi);
  }
  return 0.0;
}

// Length of [max(t, T), min(y, tau)): treated time remaining after t.
double treated_remaining(const Trajectory& traj, double t) {
  if (!traj.treat_start) return 0.0;
  const double lo = std::max(t, *traj.treat_start);
  const double hi = std::min(traj.y, traj.tau);
  return std::max(0.0, hi - lo);
}

void check_time(const Trajectory& traj, double t, const char* who) {
  if (!(t >= 0.0 && t <= traj.tau))
    throw DomainError(std::string(who) + ": t = " + format_double(t) + " outside [0, tau]");
}

// ---------------------------------------------------------------------------
// Backward RK4 with step doubling on one segment where the covariates are
// constant. The right-hand side sees times clamped into the open segment so
// that indicator jumps at the end points never leak into it.
class BackwardIntegrator {
 public:
  BackwardIntegrator(const ShiftModel& model, const ShiftParams& psi, const Trajectory& traj,
                     double tol)
      : model_(model), psi_(psi), traj_(traj), tol_(tol) {}

  double run(double s_from, double s_to, double x) const {
    if (s_to >= s_from) return x;
    const double margin = std::min(1e-12 * std::max(1.0, std::abs(s_from)), 0.25 * (s_from - s_to));
    const double lo = s_to + margin;
    const double hi = s_from - margin;
    const auto rhs = [&](double s, double xv) {
      return d_eval_unchecked(model_, psi_, xv, std::clamp(s, lo, hi), traj_);
    };
    const auto step = [&](double s, double xv, double h) {
      // h > 0 is the backward step length
      const double k1 = rhs(s, xv);
      const double k2 = rhs(s - 0.5 * h, xv - 0.5 * h * k1);
      const double k3 = rhs(s - 0.5 * h, xv - 0.5 * h * k2);
      const double k4 = rhs(s - h, xv - h * k3);
      return xv - h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    };

    const double h_min = 1e-14 * std::max(1.0, std::abs(s_from));
    double s = s_from;
    double h = s_from - s_to;
    int steps = 0;
    while (s > s_to) {
      const bool last = h >= s - s_to;
      if (last) h = s - s_to;
      const double full = step(s, x, h);
      const double half = step(s - 0.5 * h, step(s, x, 0.5 * h), 0.5 * h);
      const double err = std::abs(half - full);
      if (!std::isfinite(half))
        throw ConvergenceError("x_ode: non-finite state on segment [" + format_double(s_to) +
                                   ", " + format_double(s_from) + "] at s = " + format_double(s),
                               NAN, steps);
      if (err <= tol_ || h <= h_min) {
        x = half + (half - full) / 15.0;
        s = last ? s_to : s - h;
        if (err < tol_ / 64.0) h *= 2.0;
      } else {
        h *= 0.5;
      }
      if (++steps > 50'000'000)
        throw ConvergenceError("x_ode: step budget exhausted on segment [" +
                                   format_double(s_to) + ", " + format_double(s_from) + "]",
                               err, steps);
    }
    return x;
  }

 private:
  const ShiftModel& model_;
  const ShiftParams& psi_;
  const Trajectory& traj_;
  double tol_;
};

}  // namespace

double d_eval(const ShiftModel& model, const ShiftParams& psi, double y, double t,
              const Trajectory& traj) {
  check_dim(model, psi);
  check_time(traj, t, "d_eval");
  return d_eval_unchecked(model, psi, y, t, traj);
}

double aft_exponent(const ShiftModel& model, const ShiftParams& psi, const Trajectory& traj) {
  check_dim(model, psi);
  switch (model.kind()) {
    case ShiftModel::Kind::simple_aft: return psi[0];
    case ShiftModel::Kind::stratified_aft:
      return psi[0] + (pcp_history(traj) ? psi[1] : 0.0) + (traj.azt ? psi[2] : 0.0);
    default: throw InputError(model.name() + " has no AFT exponent");
  }
}

double x_closed_form(const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model,
                     double t) {
  if (!model.has_closed_form())
    throw InputError(model.name() + " has no closed form for X_psi; use x_ode");
  check_time(traj, t, "x_closed_form");
  const double remaining = treated_remaining(traj, t);
  if (remaining == 0.0) return traj.y;
  return traj.y + std::expm1(aft_exponent(model, psi, traj)) * remaining;
}

std::vector<double> x_ode_path(const Trajectory& traj, const ShiftParams& psi,
                               const ShiftModel& model, std::span<const double> times,
                               double tol) {
  check_dim(model, psi);
  if (!(tol > 0.0)) throw DomainError("x_ode: tol must be positive");
  for (double t : times) check_time(traj, t, "x_ode");

  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });

  const double start = std::min(traj.y, traj.tau);
  const auto breaks = segment_grid(traj, 0.0, start);
  const BackwardIntegrator integrator(model, psi, traj, tol);

  std::vector<double> out(times.size(), traj.y);
  double s = start;
  double x = traj.y;
  for (std::size_t idx : order) {
    const double target = times[idx];
    if (target >= start) continue;  // dead or past tau: X = y
    // walk down through the breakpoints in (target, s)
    for (auto it = breaks.rbegin(); it != breaks.rend(); ++it) {
      if (*it >= s) continue;
      if (*it <= target) break;
      x = integrator.run(s, *it, x);
      s = *it;
    }
    x = integrator.run(s, target, x);
    s = target;
    out[idx] = x;
  }
  return out;
}

double x_ode_from(const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model,
                  double s_final, double x_final, double t, double tol) {
  check_dim(model, psi);
  if (!(tol > 0.0)) throw DomainError("x_ode: tol must be positive");
  check_time(traj, t, "x_ode_from");
  check_time(traj, s_final, "x_ode_from");
  if (t > s_final) throw DomainError("x_ode_from: t must not exceed the final time");
  if (!std::isfinite(x_final)) throw DomainError("x_ode_from: final value must be finite");
  const auto breaks = segment_grid(traj, t, s_final);
  const BackwardIntegrator integrator(model, psi, traj, tol);
  double x = x_final;
  for (std::size_t i = breaks.size() - 1; i > 0; --i) x = integrator.run(breaks[i], breaks[i - 1], x);
  return x;
}

double x_ode(const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model, double t,
             double tol) {
  return x_ode_path(traj, psi, model, std::span<const double>(&t, 1), tol).front();
}

double x_value(const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model,
               double t, double tol) {
  return model.has_closed_form() ? x_closed_form(traj, psi, model, t)
                                 : x_ode(traj, psi, model, t, tol);
}

Eigen::VectorXd dx_dpsi(const Trajectory& traj, const ShiftParams& psi, const ShiftModel& model,
                        double t) {
  check_dim(model, psi);
  check_time(traj, t, "dx_dpsi");
  const auto k = static_cast<Eigen::Index>(model.dim());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(k);
  if (model.has_closed_form()) {
    const double dur = duration_treated(traj, std::min(t, traj.y), std::min(traj.y, traj.tau));
    if (dur == 0.0) return grad;
    const double scale = std::exp(aft_exponent(model, psi, traj)) * dur;
    grad[0] = scale;
    if (model.kind() == ShiftModel::Kind::stratified_aft) {
      grad[1] = pcp_history(traj) ? scale : 0.0;
      grad[2] = traj.azt ? scale : 0.0;
    }
    return grad;
  }
  constexpr double fd_tol = 1e-13;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(psi[j]));
    ShiftParams up = psi, down = psi;
    up[j] += h;
    down[j] -= h;
    grad[j] = (x_ode(traj, up, model, t, fd_tol) - x_ode(traj, down, model, t, fd_tol)) / (2.0 * h);
  }
  return grad;
}

RegularityReport check_regularity(const ShiftModel& model, const ShiftParams& psi,
                                  const Trajectory& traj, int grid_n) {
  if (grid_n < 2) throw DomainError("check_regularity: grid_n must be >= 2");
  check_dim(model, psi);
  const auto n = static_cast<std::size_t>(grid_n);
  std::vector<double> ts(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    ts[i] = traj.tau * static_cast<double>(i) / static_cast<double>(n - 1);
    ys[i] = 2.0 * traj.y * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  std::vector<double> d(n * n);
  RegularityReport report;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = d_eval_unchecked(model, psi, ys[j], ts[i], traj);
      d[i * n + j] = v;
      if (!std::isfinite(v)) {
        report.violations.push_back("non-finite D at t=" + format_double(ts[i]) +
                                    ", y=" + format_double(ys[j]));
        continue;
      }
      report.bound = std::max(report.bound, std::abs(v));
    }
  }
  const auto jumps = segment_grid(traj, 0.0, traj.tau);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j + 1 < n; ++j) {
      const double q = std::abs(d[i * n + j + 1] - d[i * n + j]) / (ys[j + 1] - ys[j]);
      if (std::isfinite(q)) report.lipschitz_y = std::max(report.lipschitz_y, q);
    }
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const bool crosses = std::any_of(jumps.begin() + 1, jumps.end() - 1, [&](double e) {
      return e >= ts[i] && e <= ts[i + 1];
    });
    if (crosses) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const double q = std::abs(d[(i + 1) * n + j] - d[i * n + j]) / (ts[i + 1] - ts[i]);
      if (std::isfinite(q)) report.lipschitz_t = std::max(report.lipschitz_t, q);
    }
  }
  if (model.kind() == ShiftModel::Kind::custom) {
    const auto& c = model.custom_rate();
    const double slack = 1e-12;
    if (report.bound > c.bound * (1.0 + slack) + slack)
      report.violations.push_back("empirical bound " + format_double(report.bound) +
                                  " exceeds declared " + format_double(c.bound));
    if (report.lipschitz_y > c.lipschitz_y * (1.0 + 1e-6) + slack)
      report.violations.push_back("empirical Lipschitz constant in y " +
                                  format_double(report.lipschitz_y) + " exceeds declared " +
                                  format_double(c.lipschitz_y));
  }
  return report;
}

}  // namespace ctgest

#include "ctgest/trajectory.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "ctgest/errors.hpp"
#include "ctgest/format.hpp"

namespace ctgest {

namespace {

std::string describe(const Trajectory& traj) {
  return "patient '" + traj.id + "'";
}

}  // namespace

void validate(const Trajectory& traj) {
  const auto fail = [&](const std::string& msg) {
    throw InputError(describe(traj) + ": " + msg);
  };
  if (traj.id.empty()) fail("empty id");
  if (!std::isfinite(traj.y) || traj.y <= 0.0) fail("y must be positive and finite");
  if (!std::isfinite(traj.tau) || traj.tau <= 0.0) fail("tau must be positive and finite");
  if (traj.pcp_time) {
    const double p = *traj.pcp_time;
    if (!std::isfinite(p) || p < 0.0) fail("pcp_time must be nonnegative and finite");
    if (p > traj.y) fail("pcp_time > y");
  }
  if (traj.treat_start) {
    const double t = *traj.treat_start;
    if (!std::isfinite(t) || t < 0.0) fail("treat_start must be nonnegative and finite");
    if (t >= traj.y) fail("treat_start >= y");
    if (t >= traj.tau) fail("treat_start >= tau");
  }
}

void validate_cohort(const Cohort& cohort) {
  std::unordered_set<std::string> seen;
  for (const auto& traj : cohort) {
    validate(traj);
    if (!seen.insert(traj.id).second)
      throw InputError("duplicate patient id '" + traj.id + "'");
    if (traj.tau != cohort.front().tau)
      throw InputError(describe(traj) + ": tau differs from the rest of the cohort");
  }
}

CovariateState covariates_at(const Trajectory& traj, double t) {
  if (!(t >= 0.0 && t <= traj.tau))
    throw DomainError("covariates_at: t = " + format_double(t) + " outside [0, tau]");
  CovariateState s;
  s.azt = traj.azt;
  s.pcp_left = traj.pcp_or_inf() < t;
  s.treated_left = traj.treat_or_inf() < t;
  s.at_risk = t < risk_end(traj);
  return s;
}

double risk_end(const Trajectory& traj) noexcept {
  return std::min({traj.treat_or_inf(), traj.y, traj.tau});
}

double duration_treated(const Trajectory& traj, double t1, double t2) {
  if (t1 > t2)
    throw DomainError("duration_treated: t1 > t2");
  if (!traj.treat_start) return 0.0;
  return std::max(0.0, t2 - std::max(t1, *traj.treat_start));
}

std::vector<double> segment_grid(const Trajectory& traj, double a, double b) {
  std::vector<double> grid{a};
  for (const auto& ev : {traj.pcp_time, traj.treat_start, std::optional<double>(traj.y)}) {
    if (ev && *ev > a && *ev < b) grid.push_back(*ev);
  }
  grid.push_back(b);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr const char* kHeader = "id,azt,pcp_time,treat_start,y,tau";

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, std::size_t row, const char* field) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end)
    throw InputError("row " + std::to_string(row) + ", field " + field +
                     ": not a number: '" + s + "'");
  return v;
}

std::optional<double> parse_optional(const std::string& s, std::size_t row,
                                     const char* field) {
  if (s.empty()) return std::nullopt;
  return parse_number(s, row, field);
}

}  // namespace

Cohort read_cohort(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw InputError("cohort file is empty (missing header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader)
    throw InputError(std::string("bad cohort header, expected '") + kHeader + "'");

  Cohort cohort;
  std::size_t row = 0;  // data rows, header excluded
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (f.size() != 6)
      throw InputError("row " + std::to_string(row) + ": expected 6 fields, got " +
                       std::to_string(f.size()));
    Trajectory traj;
    traj.id = f[0];
    if (f[1] == "0") traj.azt = false;
    else if (f[1] == "1") traj.azt = true;
    else throw InputError("row " + std::to_string(row) + ", field azt: must be 0 or 1");
    traj.pcp_time = parse_optional(f[2], row, "pcp_time");
    traj.treat_start = parse_optional(f[3], row, "treat_start");
    traj.y = parse_number(f[4], row, "y");
    traj.tau = parse_number(f[5], row, "tau");
    try {
      validate(traj);
    } catch (const InputError& e) {
      throw InputError("row " + std::to_string(row) + ": " + e.what());
    }
    cohort.push_back(std::move(traj));
  }
  validate_cohort(cohort);
  return cohort;
}

void write_cohort(std::ostream& out, const Cohort& cohort) {
  out << kHeader << '\n';
  for (const auto& t : cohort) {
    out << t.id << ',' << (t.azt ? 1 : 0) << ',';
    if (t.pcp_time) out << format_double(*t.pcp_time);
    out << ',';
    if (t.treat_start) out << format_double(*t.treat_start);
    out << ',' << format_double(t.y) << ',' << format_double(t.tau) << '\n';
  }
}

Cohort load_cohort(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open cohort file '" + path + "'");
  return read_cohort(in);
}

void save_cohort(const Cohort& cohort, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write cohort file '" + path + "'");
  write_cohort(out, cohort);
  if (!out) throw InputError("write failed for '" + path + "'");
}

}  // namespace ctgest

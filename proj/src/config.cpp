#include "ctgest/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>

#include "ctgest/errors.hpp"
#include "ctgest/score_test.hpp"

namespace ctgest {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
    return s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(item));
      item.clear();
    } else {
      item += c;
    }
  }
  out.push_back(trim(item));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  const std::string s = trim(v);
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(d))
    throw InputError("config key '" + key + "': expected a finite number, got '" + v + "'");
  return d;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  const std::string s = trim(v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw InputError("config key '" + key + "': expected a nonnegative integer, got '" + v + "'");
  return out;
}

void to_pair(const std::string& key, const std::string& v, double out[2]) {
  const auto items = split_list(v);
  if (items.size() != 2)
    throw InputError("config key '" + key + "': expected two comma-separated numbers");
  out[0] = to_double(key, items[0]);
  out[1] = to_double(key, items[1]);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"dgp.n", [](RunConfig& c, const std::string& k, const std::string& v) { c.dgp.n = to_u64(k, v); }},
      {"dgp.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.dgp.seed = to_u64(k, v); }},
      {"dgp.tau", [](RunConfig& c, const std::string& k, const std::string& v) { c.dgp.tau = to_double(k, v); }},
      {"dgp.psi0", [](RunConfig& c, const std::string& k, const std::string& v) { c.dgp.psi0 = to_double(k, v); }},
      {"dgp.xi0", [](RunConfig& c, const std::string& k, const std::string& v) { c.dgp.xi0 = to_double(k, v); }},
      {"dgp.gamma0", [](RunConfig& c, const std::string& k, const std::string& v) { c.dgp.gamma0 = to_double(k, v); }},
      {"dgp.theta0", [](RunConfig& c, const std::string& k, const std::string& v) { to_pair(k, v, c.dgp.theta0); }},
      {"dgp.rho_pcp", [](RunConfig& c, const std::string& k, const std::string& v) { c.dgp.rho_pcp = to_double(k, v); }},
      {"dgp.beta_pcp_azt", [](RunConfig& c, const std::string& k, const std::string& v) { c.dgp.beta_pcp_azt = to_double(k, v); }},
      {"dgp.mu0", [](RunConfig& c, const std::string& k, const std::string& v) { c.dgp.mu0 = to_double(k, v); }},
      {"dgp.beta_death", [](RunConfig& c, const std::string& k, const std::string& v) { to_pair(k, v, c.dgp.beta_death); }},
      {"dgp.p_azt", [](RunConfig& c, const std::string& k, const std::string& v) { c.dgp.p_azt = to_double(k, v); }},
      {"estimation.psi_bracket", [](RunConfig& c, const std::string& k, const std::string& v) {
         double b[2];
         to_pair(k, v, b);
         c.estimation.psi_lo = b[0];
         c.estimation.psi_hi = b[1];
       }},
      {"estimation.tol", [](RunConfig& c, const std::string& k, const std::string& v) { c.estimation.tol = to_double(k, v); }},
      {"estimation.max_iter", [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto m = to_u64(k, v);
         if (m > 100000) throw InputError("config key '" + k + "': too large");
         c.estimation.max_iter = static_cast<int>(m);
       }},
      {"estimation.ci_level", [](RunConfig& c, const std::string& k, const std::string& v) { c.estimation.ci_level = to_double(k, v); }},
      {"estimation.model", [](RunConfig& c, const std::string&, const std::string& v) { c.estimation.model = unquote(trim(v)); }},
      {"estimation.window", [](RunConfig& c, const std::string& k, const std::string& v) { c.estimation.window = to_double(k, v); }},
      {"test.h_extra", [](RunConfig& c, const std::string&, const std::string& v) { c.test.h_extra = unquote(trim(v)); }},
      {"test.level", [](RunConfig& c, const std::string& k, const std::string& v) { c.test.level = to_double(k, v); }},
      {"mc.replications", [](RunConfig& c, const std::string& k, const std::string& v) { c.mc.replications = to_u64(k, v); }},
      {"mc.parallel_width", [](RunConfig& c, const std::string& k, const std::string& v) { c.mc.parallel_width = to_u64(k, v); }},
      {"mc.checks", [](RunConfig& c, const std::string&, const std::string& v) { c.mc.checks = split_list(unquote(trim(v))); }},
      {"io.out_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.io.out_dir = unquote(trim(v)); }},
      {"io.formats", [](RunConfig& c, const std::string&, const std::string& v) { c.io.formats = split_list(unquote(trim(v))); }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, set] : setters()) {
    if (name == key) {
      set(cfg, key, value);
      return;
    }
  }
  throw InputError("unknown config key '" + key + "'");
}

RunConfig parse_config(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw InputError(where + "expected 'key = value', got '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (const auto hash = value.find(" #"); hash != std::string::npos) value = trim(value.substr(0, hash));
    if (key.empty()) throw InputError(where + "empty key");
    if (!seen.insert(key).second) throw InputError(where + "duplicate config key '" + key + "'");
    try {
      apply_setting(cfg, key, value);
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

void validate(const RunConfig& cfg) {
  validate(cfg.dgp);
  const auto& e = cfg.estimation;
  if (!(e.psi_lo < e.psi_hi)) throw InputError("estimation.psi_bracket must satisfy lo < hi");
  if (!(e.tol > 0.0)) throw InputError("estimation.tol must be positive");
  if (e.max_iter < 1) throw InputError("estimation.max_iter must be >= 1");
  if (!(e.ci_level > 0.0 && e.ci_level < 1.0)) throw InputError("estimation.ci_level must lie in (0, 1)");
  if (e.window < 0.0) throw InputError("estimation.window must be nonnegative");
  make_model(e);
  HExtra::from_name(cfg.test.h_extra);
  if (!(cfg.test.level > 0.0 && cfg.test.level < 1.0)) throw InputError("test.level must lie in (0, 1)");
  if (cfg.mc.replications < 1) throw InputError("mc.replications must be >= 1");
  if (cfg.mc.parallel_width < 1) throw InputError("mc.parallel_width must be >= 1");
  for (const auto& c : cfg.mc.checks)
    if (c != "estimate" && c != "test" && c != "inversion" && c != "alpha")
      throw InputError("mc.checks: unknown check '" + c + "'");
  for (const auto& f : cfg.io.formats)
    if (f != "json" && f != "csv") throw InputError("io.formats: unknown format '" + f + "'");
}

ShiftModel make_model(const EstimationConfig& cfg) {
  ShiftModel base = [&] {
    if (cfg.model == "simple_aft") return ShiftModel::simple_aft();
    if (cfg.model == "stratified_aft") return ShiftModel::stratified_aft();
    throw InputError("estimation.model: unknown model '" + cfg.model +
                     "' (expected simple_aft or stratified_aft)");
  }();
  if (cfg.window > 0.0) return ShiftModel::window_restricted(base, cfg.window);
  return base;
}

SolveOptions make_solve_options(const EstimationConfig& cfg) {
  SolveOptions o;
  o.psi_lo = cfg.psi_lo;
  o.psi_hi = cfg.psi_hi;
  o.tol = cfg.tol;
  o.max_iter = cfg.max_iter;
  o.ci_level = cfg.ci_level;
  return o;
}

bool has_check(const MCConfig& cfg, const std::string& name) {
  return std::find(cfg.checks.begin(), cfg.checks.end(), name) != cfg.checks.end();
}

}  // namespace ctgest

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "ctgest/config.hpp"
#include "ctgest/errors.hpp"
#include "ctgest/montecarlo.hpp"
#include "ctgest/report.hpp"

using namespace ctgest;

TEST_CASE("config parsing") {
  std::istringstream in(
      "# desk run\n"
      "dgp.n = 250\n"
      "dgp.seed = 18446744073709551615\n"
      "dgp.psi0 = 0.0\n"
      "dgp.theta0 = 0.4, 0.9\n"
      "\n"
      "estimation.psi_bracket = -2, 2\n"
      "mc.checks = estimate, alpha\n"
      "io.formats = json, csv\n");
  const auto cfg = parse_config(in);
  CHECK(cfg.dgp.n == 250);
  CHECK(cfg.dgp.seed == 18446744073709551615ULL);
  CHECK(cfg.dgp.psi0 == 0.0);
  CHECK(cfg.dgp.theta0[1] == 0.9);
  CHECK(cfg.estimation.psi_lo == -2.0);
  CHECK(cfg.estimation.psi_hi == 2.0);
  CHECK(has_check(cfg.mc, "alpha"));
  CHECK_FALSE(has_check(cfg.mc, "test"));
  CHECK(cfg.io.formats.size() == 2);
}

TEST_CASE("config errors name the key") {
  std::istringstream unknown("dgp.n = 10\ndgp.colour = red\n");
  try {
    parse_config(unknown, "run.cfg");
    FAIL("expected an input error");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("dgp.colour") != std::string::npos);
    CHECK(msg.find("run.cfg:2") != std::string::npos);
    CHECK(e.exit_code() == 2);
  }
  std::istringstream bad_value("dgp.n = lots\n");
  try {
    parse_config(bad_value);
    FAIL("expected an input error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("dgp.n") != std::string::npos);
  }
  std::istringstream dup("dgp.n = 1\ndgp.n = 2\n");
  CHECK_THROWS_AS(parse_config(dup), InputError);
  std::istringstream no_eq("dgp.n 10\n");
  CHECK_THROWS_AS(parse_config(no_eq), InputError);

  RunConfig cfg;
  cfg.mc.replications = 0;
  CHECK_THROWS_AS(validate(cfg), InputError);
  cfg = {};
  cfg.estimation.ci_level = 1.0;
  CHECK_THROWS_AS(validate(cfg), InputError);
  cfg = {};
  cfg.test.h_extra = "nope";
  CHECK_THROWS_AS(validate(cfg), InputError);
  cfg = {};
  CHECK_NOTHROW(validate(cfg));

  // every listed key is known to the parser
  for (const auto& key : config_keys()) {
    RunConfig c;
    try {
      apply_setting(c, key, "@");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find("unknown") == std::string::npos);
    }
  }
}

TEST_CASE("json output") {
  Eigen::MatrixXd m(2, 2);
  m << 1.0, std::nan(""), 0.1, 1e300;
  const auto j = to_json(m);
  CHECK(j[0][1].is_null());
  // shortest round-trip representation
  CHECK(j.dump() == "[[1.0,null],[0.1,1e+300]]");

  RunConfig cfg;
  const auto c = to_json(cfg);
  CHECK(c.contains("dgp"));
  CHECK_FALSE(c["mc"].contains("parallel_width"));
}

namespace {

RunConfig small_mc(std::size_t reps, std::size_t width) {
  RunConfig cfg;
  cfg.dgp.n = 300;
  cfg.dgp.seed = 42;
  cfg.mc.replications = reps;
  cfg.mc.parallel_width = width;
  return cfg;
}

}  // namespace

TEST_CASE("monte carlo is independent of the worker count") {
  const auto serial = run_montecarlo(small_mc(6, 1));
  const auto pooled = run_montecarlo(small_mc(6, 8));
  CHECK(to_json(serial.summary, false).dump() == to_json(pooled.summary, false).dump());
  std::ostringstream a, b;
  const auto names = parameter_names(ShiftModel::simple_aft());
  write_per_rep_csv(a, serial.reps, names);
  write_per_rep_csv(b, pooled.reps, names);
  CHECK(a.str() == b.str());
  CHECK(serial.summary.converged + serial.summary.failed == 6);
}

TEST_CASE("one replication is a single run") {
  const auto mc = run_montecarlo(small_mc(1, 1));
  REQUIRE(mc.reps.size() == 1);
  const auto& rep = mc.reps[0];
  REQUIRE(rep.estimated);

  DGPConfig dgp = small_mc(1, 1).dgp;
  dgp.seed = rep.seed;
  CHECK(rep.seed == derive_seed(42, 0, StreamDomain::replication));
  const auto direct = solve(simulate_cohort(dgp).cohort, ShiftModel::simple_aft());
  CHECK((direct.params - rep.params).cwiseAbs().maxCoeff() == 0.0);
  CHECK(mc.summary.parameters[4].mean == rep.params[4]);
  CHECK(mc.summary.estimate_count == 1);
}

TEST_CASE("failed replications are recorded") {
  auto cfg = small_mc(3, 2);
  cfg.estimation.psi_lo = 2.5;  // bracket excludes the root
  const auto mc = run_montecarlo(cfg);
  CHECK(mc.summary.replications == 3);
  CHECK(mc.summary.converged + mc.summary.failed == 3);
  CHECK(mc.summary.failed >= 1);
  CHECK(mc.summary.failures.size() == mc.summary.failed);
  CHECK(too_many_failures(mc.summary));
}

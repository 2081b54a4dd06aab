#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "ctgest/errors.hpp"
#include "ctgest/trajectory.hpp"

using namespace ctgest;

namespace {

Trajectory make(std::optional<double> pcp, std::optional<double> T, double y, double tau = 10.0,
                bool azt = false, std::string id = "p") {
  Trajectory t;
  t.id = std::move(id);
  t.azt = azt;
  t.pcp_time = pcp;
  t.treat_start = T;
  t.y = y;
  t.tau = tau;
  return t;
}

}  // namespace

TEST_CASE("covariates use left limits") {
  const auto traj = make(1.0, 2.0, 5.0);
  const auto at1 = covariates_at(traj, 1.0);
  CHECK_FALSE(at1.pcp_left);
  CHECK_FALSE(at1.treated_left);
  CHECK(at1.at_risk);

  const auto at3 = covariates_at(traj, 3.0);
  CHECK(at3.pcp_left);
  CHECK(at3.treated_left);
  CHECK_FALSE(at3.at_risk);

  const auto alive = covariates_at(make(std::nullopt, std::nullopt, 5.0), 4.999);
  CHECK_FALSE(alive.pcp_left);
  CHECK_FALSE(alive.treated_left);
  CHECK(alive.at_risk);

  CHECK_THROWS_AS(covariates_at(traj, -0.1), DomainError);
  CHECK_THROWS_AS(covariates_at(traj, 10.5), DomainError);
}

TEST_CASE("risk end") {
  CHECK(risk_end(make(std::nullopt, 2.0, 5.0)) == 2.0);
  CHECK(risk_end(make(std::nullopt, std::nullopt, 5.0)) == 5.0);
  CHECK(risk_end(make(std::nullopt, std::nullopt, 12.0)) == 10.0);
}

TEST_CASE("duration treated") {
  const auto treated = make(std::nullopt, 2.0, 5.0);
  CHECK(duration_treated(treated, 0.0, 5.0) == 3.0);
  CHECK(duration_treated(make(std::nullopt, std::nullopt, 5.0), 0.0, 5.0) == 0.0);
  CHECK(duration_treated(treated, 3.0, 4.0) == 1.0);
  CHECK_THROWS_AS(duration_treated(treated, 4.0, 3.0), DomainError);

  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    double t[3] = {u(gen), u(gen), u(gen)};
    std::sort(t, t + 3);
    const auto tr = make(std::nullopt, u(gen) * 0.5, 9.9);
    CHECK(duration_treated(tr, t[0], t[2]) ==
          doctest::Approx(duration_treated(tr, t[0], t[1]) + duration_treated(tr, t[1], t[2])).epsilon(1e-14));
  }
}

TEST_CASE("segment grid") {
  CHECK(segment_grid(make(1.0, 2.0, 5.0), 0.0, 5.0) == std::vector<double>{0, 1, 2, 5});
  CHECK(segment_grid(make(std::nullopt, std::nullopt, 5.0), 0.0, 3.0) == std::vector<double>{0, 3});
  CHECK(segment_grid(make(std::nullopt, std::nullopt, 8.0), 0.0, 5.0) == std::vector<double>{0, 5});
  // pcp outside the window is dropped
  auto far = make(7.0, std::nullopt, 8.0);
  CHECK(segment_grid(far, 0.0, 5.0) == std::vector<double>{0, 5});
}

TEST_CASE("covariates are constant between grid points") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const double y = 1.0 + 9.0 * u(gen);
    const double T = y * u(gen);
    const double pcp = y * u(gen);
    const auto traj = make(pcp, T, y, 10.0, k % 2 == 0);
    const auto grid = segment_grid(traj, 0.0, traj.tau);
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
      const auto ref = covariates_at(traj, grid[i] + 1e-9 * (grid[i + 1] - grid[i]));
      for (int j = 1; j < 20; ++j) {
        const double t = grid[i] + (grid[i + 1] - grid[i]) * j / 20.0;
        CHECK(covariates_at(traj, t) == ref);
      }
    }
  }
}

TEST_CASE("at risk implies untreated and alive") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const double y = 0.5 + 12.0 * u(gen);
    const auto traj = make(std::nullopt, u(gen) < 0.5 ? std::optional<double>(std::min(y, 10.0) * u(gen)) : std::nullopt, y);
    for (int j = 0; j <= 40; ++j) {
      const double t = traj.tau * j / 40.0;
      const auto c = covariates_at(traj, t);
      if (c.at_risk) {
        CHECK_FALSE(c.treated_left);
        CHECK(t < traj.y);
        CHECK(t < traj.tau);
      }
    }
  }
}

TEST_CASE("csv parsing") {
  std::istringstream in("id,azt,pcp_time,treat_start,y,tau\np1,1,,2.0,5.0,10.0\n");
  const auto cohort = read_cohort(in);
  REQUIRE(cohort.size() == 1);
  CHECK(cohort[0] == make(std::nullopt, 2.0, 5.0, 10.0, true, "p1"));

  std::istringstream header_only("id,azt,pcp_time,treat_start,y,tau\n");
  CHECK(read_cohort(header_only).empty());

  std::istringstream bad("id,azt,pcp_time,treat_start,y,tau\np1,1,,6.0,5.0,10.0\n");
  try {
    read_cohort(bad);
    FAIL("expected an error");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("treat_start") != std::string::npos);
  }

  std::istringstream missing("id,azt,pcp_time,y,tau\np1,1,,5.0,10.0\n");
  CHECK_THROWS_AS(read_cohort(missing), InputError);
  std::istringstream text("id,azt,pcp_time,treat_start,y,tau\np1,1,,abc,5.0,10.0\n");
  CHECK_THROWS_AS(read_cohort(text), InputError);
  std::istringstream at_tau("id,azt,pcp_time,treat_start,y,tau\np1,1,,10.0,12.0,10.0\n");
  CHECK_THROWS_AS(read_cohort(at_tau), InputError);
}

TEST_CASE("cohort validation") {
  Cohort dup{make(std::nullopt, std::nullopt, 5.0, 10.0, false, "a"),
             make(std::nullopt, std::nullopt, 6.0, 10.0, false, "a")};
  CHECK_THROWS_AS(validate_cohort(dup), InputError);
  Cohort taus{make(std::nullopt, std::nullopt, 5.0, 10.0, false, "a"),
              make(std::nullopt, std::nullopt, 6.0, 9.0, false, "b")};
  CHECK_THROWS_AS(validate_cohort(taus), InputError);
  CHECK_THROWS_AS(validate(make(6.0, std::nullopt, 5.0)), InputError);  // pcp after death
  CHECK_THROWS_AS(validate(make(std::nullopt, std::nullopt, 0.0)), InputError);
}

TEST_CASE("csv round trip is exact") {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Cohort cohort;
  for (int i = 0; i < 300; ++i) {
    const double y = 0.01 + 15.0 * u(gen);
    std::optional<double> T, pcp;
    if (u(gen) < 0.5) T = std::min(y, 10.0) * u(gen);
    if (u(gen) < 0.5) pcp = y * u(gen);
    cohort.push_back(make(pcp, T, y, 10.0, u(gen) < 0.5, "id" + std::to_string(i)));
  }
  std::stringstream buf;
  write_cohort(buf, cohort);
  CHECK(read_cohort(buf) == cohort);
}

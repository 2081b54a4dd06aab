#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <vector>

#include "ctgest/estimation.hpp"
#include "ctgest/simulator.hpp"

namespace ctgest {

struct EstimationConfig {
  double psi_lo = -3.0;
  double psi_hi = 3.0;
  double tol = 1e-8;
  int max_iter = 100;
  double ci_level = 0.95;
  std::string model = "simple_aft";  // simple_aft | stratified_aft
  double window = 0.0;               // > 0 wraps the model in a window restriction
};

struct TestConfig {
  std::string h_extra = "outcome";
  double level = 0.05;
};

struct MCConfig {
  std::size_t replications = 100;
  std::size_t parallel_width = 1;
  std::vector<std::string> checks{"estimate", "test", "inversion"};  // + "alpha"
};

struct IOConfig {
  std::string out_dir = ".";
  std::vector<std::string> formats{"json"};  // json, csv
};

struct RunConfig {
  DGPConfig dgp;
  EstimationConfig estimation;
  TestConfig test;
  MCConfig mc;
  IOConfig io;
};

// Sets one dotted key; unknown keys and malformed values raise InputError
// naming the key.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

// Flat "key = value" lines, '#' comments, blank lines ignored.
RunConfig parse_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

void validate(const RunConfig& cfg);

// Every accepted key, in a stable order.
const std::vector<std::string>& config_keys();

ShiftModel make_model(const EstimationConfig& cfg);
SolveOptions make_solve_options(const EstimationConfig& cfg);
bool has_check(const MCConfig& cfg, const std::string& name);

}  // namespace ctgest

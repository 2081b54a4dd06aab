#pragma once

#include <ostream>
#include <string>

#include <json.hpp>

#include "ctgest/config.hpp"
#include "ctgest/estimation.hpp"
#include "ctgest/montecarlo.hpp"
#include "ctgest/score_test.hpp"

namespace ctgest {

using Json = nlohmann::ordered_json;

Json to_json(const Eigen::MatrixXd& m);
Json to_json(const EstimationResult& r);
Json to_json(const TestResult& r);
Json to_json(const RunConfig& cfg);  // everything except mc.parallel_width and io
Json to_json(const MCSummary& s, bool with_wall_time = true);

// Writes `j` with two-space indentation and a trailing newline.
void write_json(const Json& j, const std::string& path);

void write_per_rep_csv(std::ostream& out, const std::vector<RepRecord>& reps,
                       const std::vector<std::string>& names);

// Flat one-row CSV of an estimation result.
void write_result_csv(std::ostream& out, const EstimationResult& r);

// Fixed-width table of estimates, SEs and intervals.
void print_table(std::ostream& out, const EstimationResult& r);

}  // namespace ctgest

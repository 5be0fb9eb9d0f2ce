#include <gtest/gtest.h>

#include "common.hpp"
#include "dosewise/io.hpp"

using namespace dosewise;
using nlohmann::json;

TEST(Config, ShippedFilesParse) {
  const Config full = load_config(DOSEWISE_CONFIG_DIR "/leukemia.json");
  const Config demo = load_config(DOSEWISE_CONFIG_DIR "/zero_noise_demo.json");
  EXPECT_EQ(full.measurement_days, (std::vector<int>{0, 7, 14}));
  EXPECT_EQ(demo.measurement_rel_sd, 0.0);
  EXPECT_EQ(demo.filter.particles, 50u);
  // The explicit file spells out the defaults.
  const auto a = build_problem(full), b = fixtures::default_problem();
  EXPECT_EQ(a.sys.cost.lambda, b.sys.cost.lambda);
  EXPECT_EQ(a.sys.estimator.gamma, b.sys.estimator.gamma);
  EXPECT_EQ(a.sys.time.N, 504);
}

TEST(Config, UnknownKeysAreRejectedWithPath) {
  try {
    fixtures::config_from({{"noise", {{"process_rel_sd", 0.0}, {"typo", 1}}}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "$.noise.typo");
  }
  EXPECT_THROW(fixtures::config_from({{"extra", 1}}), ConfigError);
  EXPECT_THROW(parse_config(json::object()), ConfigError);
  EXPECT_THROW(parse_config({{"schema_version", 99}}), ConfigError);
}

TEST(Config, BadValues) {
  EXPECT_THROW(fixtures::config_from({{"cost", {{"lambda", -1.0}}}}), ConfigError);
  EXPECT_THROW(fixtures::config_from({{"cost", {{"lambda", "maybe"}}}}), ConfigError);
  EXPECT_THROW(fixtures::config_from({{"model", {{"theta", {1.0, 2.0}}}}}), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, AutoWeightsAndOverrides) {
  const auto derived = fixtures::default_problem();
  EXPECT_GT(derived.sys.cost.lambda, 0.0);
  EXPECT_GT(derived.sys.cost.trace_cap, 0.0);
  const auto fixed = build_problem(fixtures::config_from(
      {{"cost", {{"lambda", 0.5}, {"lambda_hat", 2.0}, {"trace_cap", 3.0}}},
       {"estimator", {{"gamma", 4.0}}}}));
  EXPECT_EQ(fixed.sys.cost.lambda, 0.5);
  EXPECT_EQ(fixed.sys.cost.lambda_hat, 2.0);
  EXPECT_EQ(fixed.sys.cost.trace_cap, 3.0);
  EXPECT_EQ(fixed.sys.estimator.gamma, 4.0);
  // Mixed: only lambda fixed, the rest derived.
  const auto mixed = build_problem(fixtures::config_from({{"cost", {{"lambda", 0.0}}}}));
  EXPECT_EQ(mixed.sys.cost.lambda, 0.0);
  EXPECT_EQ(mixed.sys.cost.trace_cap, derived.sys.cost.trace_cap);
}

TEST(Config, HashTracksContent) {
  const Config a = fixtures::config_from({{"noise", {{"process_rel_sd", 0.0}}}});
  const Config b = fixtures::config_from({{"noise", {{"process_rel_sd", 0.0}}}});
  const Config c = fixtures::config_from({{"noise", {{"process_rel_sd", 1e-4}}}});
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_NE(a.hash, c.hash);
  EXPECT_EQ(a.hash.size(), 16u);
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Io, NumberFormattingRoundTrips) {
  for (double v : {0.0, 1.0, 2.85e9, 1.0 / 3.0, -7.25e-12}) EXPECT_EQ(std::stod(fmt(v)), v);
  EXPECT_EQ(fmt(0.5), "0.5");
}

TEST(Io, TrajectoryCsvLayout) {
  const auto& prob = fixtures::default_problem();
  const auto traj = simulate_augmented(prob.sys, prob.initial_chi(),
                                       DoseRegimen::constant(prob.sys.time, 85.0), 1);
  const std::string csv = trajectory_csv(traj, {"abc", 1, "simulate"});
  std::istringstream in(csv);
  std::string stamp, header, first;
  std::getline(in, stamp);
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(stamp, "# command=simulate config_hash=abc seed=1");
  EXPECT_EQ(header.rfind("t_hours,x1,", 0), 0u);
  EXPECT_NE(header.find(",u,y1,y2,stage_cost"), std::string::npos);
  EXPECT_EQ(std::count(first.begin(), first.end(), ','), 20);
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 504u);

  const json j = trajectory_json(traj, {"abc", 1, "simulate"});
  EXPECT_EQ(j["rows"].size(), 505u);
  EXPECT_EQ(j["columns"].size(), 21u);
  EXPECT_TRUE(j["rows"][1][18].is_null());
  EXPECT_FALSE(j["rows"][0][18].is_null());
}

TEST(Io, RegimenFromJson) {
  const auto& time = fixtures::default_problem().sys.time;
  const auto r = regimen_from_json(json(std::vector<double>(14, 85.0)), time);
  EXPECT_EQ(r, DoseRegimen::constant(time, 85.0));
  EXPECT_THROW(regimen_from_json(json(std::vector<double>(3, 85.0)), time), InvalidArgument);
  EXPECT_THROW(regimen_from_json(json(std::vector<double>(14, 1e4)), time), InvalidArgument);
  EXPECT_THROW(regimen_from_json(json("85"), time), InvalidArgument);
}

TEST(Io, MeasurementCsv) {
  const auto rows = parse_measurements_csv("# patient 7\nday,wbc,anc\n0,2.9e9,1.4e9\n\n7,2.5e9,1.1e9\r\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].day, 7);
  EXPECT_EQ(rows[1].anc, 1.1e9);
  EXPECT_THROW(parse_measurements_csv("d,w,a\n"), InvalidArgument);
  EXPECT_THROW(parse_measurements_csv("day,wbc,anc\n0;1;2\n"), InvalidArgument);
  EXPECT_THROW(parse_measurements_csv("day,wbc,anc\n0,1e9,-1\n"), InvalidArgument);
  EXPECT_THROW(parse_measurements_csv("day,wbc,anc\n7,1e9,1e9\n7,1e9,1e9\n"), InvalidArgument);
  EXPECT_TRUE(parse_measurements_csv("day,wbc,anc\n").empty());
}

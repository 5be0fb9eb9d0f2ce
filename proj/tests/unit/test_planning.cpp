#include <gtest/gtest.h>

#include "common.hpp"
#include "dosewise/evaluation.hpp"
#include "dosewise/planning.hpp"

using namespace dosewise;
using namespace dosewise::leukemia;

namespace {

const Problem& zero_noise() {
  static const Problem prob = build_problem(load_config(DOSEWISE_CONFIG_DIR "/zero_noise_demo.json"));
  return prob;
}

CandidateResult row(std::vector<double> daily, double perf, double info) {
  CandidateResult c;
  c.regimen.daily = std::move(daily);
  c.summary.mean_performance = perf;
  c.summary.mean_information = info;
  return c;
}

}  // namespace

TEST(Candidates, BlockGridCountAndOrder) {
  const auto& prob = fixtures::default_problem();
  const auto& time = prob.sys.time;
  const double nominal = prob.sys.model.nominal_dose();
  const auto grid = candidate_grid(default_config().optimizer);
  const auto cands = make_candidates(time, nominal, grid);
  ASSERT_EQ(cands.size(), 36u);
  EXPECT_EQ(cands.front(), DoseRegimen::constant(time, 0.0));
  EXPECT_EQ(cands.back(), DoseRegimen::constant(time, time.u_max));
  // Earliest block is the most significant digit.
  EXPECT_EQ(cands[1].daily[0], 0.0);
  EXPECT_DOUBLE_EQ(cands[1].daily[13], 0.25 * nominal);
  for (const auto& c : cands) c.validate(time);
}

TEST(Candidates, BlockStraddlingReplanDayIsCut) {
  const auto& prob = fixtures::default_problem();
  const auto& time = prob.sys.time;
  const double nominal = prob.sys.model.nominal_dose();
  const auto grid = candidate_grid(default_config().optimizer);
  const DoseRegimen committed = DoseRegimen::constant(time, nominal);
  const auto cands = make_candidates(time, nominal, grid, &committed, 10);
  ASSERT_EQ(cands.size(), 6u);
  for (const auto& c : cands) {
    for (int d = 0; d < 10; ++d) EXPECT_EQ(c.daily[d], nominal);
    for (int d = 11; d < 14; ++d) EXPECT_EQ(c.daily[d], c.daily[10]);
  }
  EXPECT_THROW(make_candidates(time, nominal, grid, nullptr, 10), InvalidArgument);
}

TEST(Candidates, BadGrids) {
  const auto& time = fixtures::default_problem().sys.time;
  CandidateGrid g;
  EXPECT_THROW(make_candidates(time, 85.0, g), InvalidArgument);
  g.levels = {1.0};
  g.blocks = {{0, 5}, {5, 13}};
  EXPECT_THROW(make_candidates(time, 85.0, g), InvalidArgument);
  g.blocks = {{0, 13}};
  EXPECT_EQ(make_candidates(time, 85.0, g).size(), 1u);
  g.free_days = true;
  g.levels = {0.0, 1.0, 2.0};
  EXPECT_THROW(make_candidates(time, 85.0, g), TooLarge);
}

TEST(Selection, TieGoesToLowestDose) {
  std::vector<CandidateResult> table{row({2.0, 2.0}, -1.0, 0.0), row({1.0, 1.0}, -1.0, 0.0),
                                     row({0.0, 2.0}, -1.0, 0.0)};
  EXPECT_EQ(select_candidate(table, 0.0), 2u);
  std::vector<CandidateResult> single{row({5.0}, 3.0, -1.0)};
  EXPECT_EQ(select_candidate(single, 1.0), 0u);
  std::vector<CandidateResult> none;
  EXPECT_THROW(select_candidate(none, 1.0), InvalidArgument);
}

TEST(Selection, InformationWeightTradesPerformanceForTrace) {
  CounterRng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CandidateResult> table;
    for (int k = 0; k < 36; ++k)
      table.push_back(row({static_cast<double>(k)}, rng.normal(), -std::abs(rng.normal())));
    const std::size_t a = select_candidate(table, 0.0);
    const std::size_t b = select_candidate(table, 0.1 + rng.uniform());
    EXPECT_LE(table[a].summary.mean_performance, table[b].summary.mean_performance);
    EXPECT_GE(table[a].summary.mean_information, table[b].summary.mean_information);
  }
}

TEST(Rollout, ZeroNoiseDiracHasNoSpread) {
  const auto& prob = zero_noise();
  const Belief z = Belief::dirac(prob.initial_chi(), 0);
  const auto reg = DoseRegimen::constant(prob.sys.time, prob.sys.model.nominal_dose());
  const auto s = rollout_value(prob.sys, z, reg, 8, 1);
  EXPECT_EQ(s.cost.standard_error, 0.0);
  EXPECT_EQ(s.cost.evaluations, 8u);
  // Matches the deterministic augmented run.
  const auto traj = simulate_augmented(prob.sys, prob.initial_chi(), reg, 1);
  EXPECT_NEAR(s.mean_performance + prob.sys.cost.lambda * s.mean_information, traj.total_cost(),
              1e-9 * std::abs(traj.total_cost()));
}

TEST(Rollout, StandardErrorShrinksWithScenarios) {
  const auto& prob = fixtures::default_problem();
  const Belief z = make_initial_belief(prob, prob.theta0, prob.sys.model.output(prob.x0, prob.theta0),
                                       100, 2);
  const auto reg = DoseRegimen::constant(prob.sys.time, prob.sys.model.nominal_dose());
  const auto small = rollout_value(prob.sys, z, reg, 25, 3);
  const auto large = rollout_value(prob.sys, z, reg, 400, 3);
  ASSERT_GT(small.cost.standard_error, 0.0);
  const double ratio = small.cost.standard_error / large.cost.standard_error;
  EXPECT_GT(ratio, 2.0);
  EXPECT_LT(ratio, 8.0);
  EXPECT_THROW(rollout_value(prob.sys, z, reg, 0, 3), InvalidArgument);
}

TEST(Optimize, CommonRandomNumbersAndDeterminism) {
  const auto& prob = fixtures::default_problem();
  const Belief z = make_initial_belief(prob, prob.theta0, prob.sys.model.output(prob.x0, prob.theta0),
                                       50, 4);
  const auto& time = prob.sys.time;
  const double nominal = prob.sys.model.nominal_dose();
  const std::vector<DoseRegimen> cands{DoseRegimen::constant(time, nominal),
                                       DoseRegimen::constant(time, nominal)};
  const auto res = optimize_regimen(prob.sys, z, cands, 20, 9);
  EXPECT_EQ(res.table[0].summary.cost.value, res.table[1].summary.cost.value);
  EXPECT_EQ(res.winner, 0u);
  const auto again = optimize_regimen(prob.sys, z, cands, 20, 9, 2);
  EXPECT_EQ(again.table[0].objective, res.table[0].objective);
  EXPECT_THROW(optimize_regimen(prob.sys, z, {}, 20, 9), InvalidArgument);
}

#include <gtest/gtest.h>

#include "dosewise/policy_dp.hpp"
#include "dosewise/validation.hpp"

using namespace dosewise;

namespace {

FiniteToyPOMDP toy_of(ToyShape shape, std::uint64_t seed) {
  CounterRng rng(seed, Stream::kToy);
  return random_toy(shape, rng);
}

ToyShape shape(int states, int actions, int horizon, std::vector<int> ty, std::vector<int> tu) {
  ToyShape s;
  s.n_states = states;
  s.n_actions = actions;
  s.horizon = horizon;
  s.measurement_times = std::move(ty);
  s.decision_times = std::move(tu);
  return s;
}

}  // namespace

TEST(FiniteDp, HorizonZeroIsTerminalCost) {
  const auto toy = toy_of(shape(3, 2, 0, {0}, {}), 1);
  const auto sol = dp_solve_finite(toy, 10);
  const double expect = toy.initial.dot(toy.terminal_cost);
  EXPECT_NEAR(sol.optimal_value(), expect, 1e-14);
  EXPECT_NEAR(brute_force_policy_enum(toy).value, expect, 1e-14);
}

TEST(FiniteDp, SingleActionMatchesItsOnlyPolicy) {
  const auto toy = toy_of(shape(2, 1, 3, {1, 3}, {0, 1, 2}), 2);
  const auto sol = dp_solve_finite(toy, 20);
  const HistoryPolicySpace space(toy);
  const double only = evaluate_history_policy(toy, space, std::vector<int>(space.points, 0));
  EXPECT_NEAR(sol.optimal_value(), only, 1e-13);
  EXPECT_EQ(brute_force_policy_enum(toy).policies, 1u);
}

TEST(FiniteDp, MatchesEnumerationOnSuite) {
  for (const auto& row : validation::run_dp_suite(101, 5)) {
    EXPECT_NEAR(row.exact, row.enumeration, 1e-10) << "states " << row.states << " N " << row.horizon;
    EXPECT_LE(std::abs(row.grid - row.exact), row.bound + 1e-12);
  }
}

TEST(FiniteDp, EnumerationBeatsRandomTables) {
  const auto toy = toy_of(shape(3, 2, 3, {0, 2}, {0, 1, 2}), 6);
  const auto best = brute_force_policy_enum(toy);
  const HistoryPolicySpace space(toy);
  CounterRng rng(6);
  for (int k = 0; k < 50; ++k) {
    std::vector<int> table(space.points);
    for (int& a : table) a = rng.uniform() < 0.5 ? 0 : 1;
    EXPECT_LE(best.value, evaluate_history_policy(toy, space, table) + 1e-15);
  }
  EXPECT_NEAR(evaluate_history_policy(toy, space, best.table), best.value, 1e-15);
}

TEST(FiniteDp, RolloutOfGreedyPolicyAgreesWithValue) {
  const auto toy = toy_of(shape(3, 2, 3, {1, 2, 3}, {0, 1, 2}), 7);
  const auto sol = dp_solve_finite(toy, 30);
  const auto est = rollout_value_finite(
      toy, [&](int t, const BeliefVector& z) { return sol.action(t, z); }, 20000, 7);
  EXPECT_LT(std::abs(est.value - sol.optimal_value()), 3.0 * est.standard_error + 1e-12);
}

TEST(FiniteDp, EnumerationRefusesHugeSpaces) {
  const auto toy = toy_of(shape(2, 2, 3, {0, 1, 2, 3}, {0, 1, 2}), 8);
  EXPECT_THROW(brute_force_policy_enum(toy, 10.0), TooLarge);
}

TEST(FiniteDp, DefaultActionOffDecisionCalendar) {
  ToyShape s = shape(2, 2, 3, {1, 3}, {1});
  s.default_action = 1;
  const auto toy = toy_of(s, 9);
  const auto sol = dp_solve_finite(toy, 10);
  EXPECT_EQ(sol.action(0, toy.initial), 1);
  EXPECT_EQ(sol.action(2, toy.initial), 1);
}

TEST(Baseline, ReactiveRule) {
  EXPECT_DOUBLE_EQ(baseline_reactive(1.5e9, 85.0, 1e9, 2e9, 170.0), 85.0);
  EXPECT_DOUBLE_EQ(baseline_reactive(0.5e9, 85.0, 1e9, 2e9, 170.0), 68.0);
  EXPECT_DOUBLE_EQ(baseline_reactive(3e9, 85.0, 1e9, 2e9, 170.0), 102.0);
  EXPECT_DOUBLE_EQ(baseline_reactive(3e9, 150.0, 1e9, 2e9, 170.0), 170.0);
  EXPECT_DOUBLE_EQ(baseline_reactive(1e9, 85.0, 1e9, 2e9, 170.0), 85.0);
  EXPECT_THROW(baseline_reactive(-1.0, 85.0, 1e9, 2e9, 170.0), InvalidArgument);
}

TEST(Summary, MeanAndStandardError) {
  const auto est = summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(est.value, 2.5);
  EXPECT_DOUBLE_EQ(est.standard_error, std::sqrt(5.0 / 3.0 / 4.0));
  EXPECT_EQ(summarize({7.0}).standard_error, 0.0);
}

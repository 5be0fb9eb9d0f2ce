#include <gtest/gtest.h>

#include "common.hpp"
#include "dosewise/augmented.hpp"

using namespace dosewise;
using namespace dosewise::leukemia;

namespace {

const Problem& quiet_problem() {
  static const Problem prob = build_problem(fixtures::config_from(
      {{"noise", {{"process_rel_sd", 0.0}, {"measurement_rel_sd", 0.05}}}}));
  return prob;
}

}  // namespace

TEST(Augmented, OutputOnAndOffCalendar) {
  const auto& prob = fixtures::default_problem();
  const Chi chi = prob.initial_chi();
  const Output w(1e7, -1e7);
  const Output y = prob.sys.output(chi, w, 0);
  EXPECT_DOUBLE_EQ(y(0), 2.86e9);
  EXPECT_DOUBLE_EQ(y(1), 1.415e9);
  EXPECT_EQ(prob.sys.output(chi, w, 1), System::dummy_output());
  EXPECT_EQ(prob.sys.output(chi, w, 167), System::dummy_output());
}

TEST(Augmented, StepMatchesNoMeasurementOffCalendar) {
  const auto& prob = fixtures::default_problem();
  const auto& sys = prob.sys;
  Chi chi = prob.initial_chi();
  CounterRng rng(5);
  const Output w(3e8, -2e8);
  for (int t = 1; t < 168; t += 13) {
    const State d = sys.noise.sample_process(rng);
    const Chi a = sys.step(chi, 85.0, d, w, t);
    const Chi b = sys.step_no_meas(chi, 85.0, d, t);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.xi, b.xi);
    EXPECT_EQ(a.theta_hat, b.theta_hat);
    chi = a;
  }
  EXPECT_THROW(sys.step_no_meas(chi, 85.0, State::Zero(), 168), InvalidArgument);
  EXPECT_THROW(sys.step(chi, sys.model.u_max() * 2.0, State::Zero(), w, 3), InvalidArgument);
  EXPECT_THROW(sys.step(chi, 85.0, State::Zero(), w, sys.time.N), InvalidArgument);
}

TEST(Augmented, MeasurementStepDrivesEstimator) {
  const auto& prob = fixtures::default_problem();
  const auto& sys = prob.sys;
  const Chi chi = prob.initial_chi();
  const Output w(0.0, 2e8);
  const Chi next = sys.step(chi, 85.0, State::Zero(), w, 0);
  const Output y = sys.output(chi, w, 0);
  EXPECT_EQ(next.theta_hat, estimator_update(sys.model, sys.time, y, chi.x, chi.theta_hat, 0, sys.estimator));
  EXPECT_GT(next.theta_hat(kThetaP), chi.theta_hat(kThetaP));
  // Zero noise: the estimate is already consistent.
  const Chi same = sys.step(chi, 85.0, State::Zero(), Output::Zero(), 0);
  EXPECT_EQ(same.theta_hat, chi.theta_hat);
}

TEST(Augmented, PlantIsSeedDeterministic) {
  const auto& prob = fixtures::default_problem();
  const auto reg = DoseRegimen::constant(prob.sys.time, 85.0);
  const auto a = simulate_plant(prob.sys, prob.theta0, prob.x0, reg, 17);
  const auto b = simulate_plant(prob.sys, prob.theta0, prob.x0, reg, 17);
  const auto c = simulate_plant(prob.sys, prob.theta0, prob.x0, reg, 18);
  ASSERT_EQ(a.x.size(), static_cast<std::size_t>(prob.sys.time.N + 1));
  EXPECT_EQ(a.x.back(), b.x.back());
  EXPECT_NE(a.x.back(), c.x.back());
  for (int t = 0; t <= prob.sys.time.N; ++t)
    EXPECT_EQ(a.y[t].has_value(), prob.sys.time.is_measurement(t));
}

TEST(Augmented, NoDrugNoNoiseStaysNearEquilibrium) {
  const auto& prob = quiet_problem();
  const auto reg = DoseRegimen::constant(prob.sys.time, 0.0);
  const auto trace = simulate_plant(prob.sys, prob.theta0, prob.x0, reg, 1);
  // The smooth floor lifts empty drug compartments by at most log 2 / beta
  // per step, which is all that moves the white-cell chain.
  for (const auto& x : trace.x) {
    for (int i = 0; i < 3; ++i) EXPECT_LT(x(i), 1.0);
    for (int i = 3; i < 8; ++i) EXPECT_LT(fixtures::rel_err(x(i), prob.x0(i)), 1e-2);
  }
  EXPECT_LT(trace.x.back()(7), prob.x0(7));
}

TEST(Augmented, ClosedLoopUsesDefaultOffDecisionCalendar) {
  const auto& prob = fixtures::default_problem();
  const auto& time = prob.sys.time;
  ClosedLoopPolicy<LeukemiaModel> greedy = [](int, const Chi&, const std::optional<Output>&) {
    return 1e6;
  };
  const auto traj = simulate_closed_loop(prob.sys, prob.theta0, prob.x0, prob.initial_chi(), greedy, 4);
  ASSERT_EQ(traj.records.size(), static_cast<std::size_t>(time.N + 1));
  EXPECT_EQ(traj.clamped_controls, time.decision_times.size());
  for (const auto& r : traj.records) {
    if (r.t == time.N) continue;
    EXPECT_EQ(r.u, time.is_decision(r.t) ? time.u_max : time.u_default);
    EXPECT_EQ(r.y.has_value(), time.is_measurement(r.t));
  }
}

TEST(Augmented, ClosedLoopSeesPlantMeasurements) {
  const auto& prob = fixtures::default_problem();
  const auto& time = prob.sys.time;
  std::vector<Output> seen;
  ClosedLoopPolicy<LeukemiaModel> watcher = [&](int, const Chi&, const std::optional<Output>& y) {
    if (y) seen.push_back(*y);
    return 85.0;
  };
  const auto traj = simulate_closed_loop(prob.sys, prob.theta0, prob.x0, prob.initial_chi(), watcher, 9);
  const auto plant = simulate_plant(prob.sys, prob.theta0, prob.x0, DoseRegimen::constant(time, 85.0), 9);
  // N is a measurement time but the controller is not consulted there.
  ASSERT_EQ(seen.size(), time.measurement_times.size() - (time.is_measurement(time.N) ? 1 : 0));
  for (std::size_t k = 0; k < seen.size(); ++k)
    EXPECT_EQ(seen[k], *plant.y[time.measurement_times[k]]);
  EXPECT_EQ(traj.records.back().x_plant, plant.x.back());
}

TEST(Augmented, SimulationIsSeedDeterministic) {
  const auto& prob = fixtures::default_problem();
  const auto reg = DoseRegimen::constant(prob.sys.time, 60.0);
  const auto a = simulate_augmented(prob.sys, prob.initial_chi(), reg, 3);
  const auto b = simulate_augmented(prob.sys, prob.initial_chi(), reg, 3);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].chi.x, b.records[k].chi.x);
    EXPECT_EQ(a.records[k].chi.theta_hat, b.records[k].chi.theta_hat);
    EXPECT_EQ(a.records[k].cost, b.records[k].cost);
  }
  EXPECT_DOUBLE_EQ(a.total_cost(), b.total_cost());
  EXPECT_TRUE(a.records.back().chi.all_finite());
}

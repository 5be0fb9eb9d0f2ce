#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "common.hpp"
#include "dosewise/sensitivity.hpp"
#include "dosewise/validation.hpp"

using namespace dosewise;
using namespace dosewise::leukemia;

namespace {

// x' = theta x, y = x: the sensitivity recursion has the closed form
// xi_t = t theta^(t-1) x0.
struct ScalarLinear : ModelTypes<1, 1, 1> {
  State step(const State& x, double, const State& d, const Params& th) const { return th(0) * x + d; }
  State step_jacobians(const State& x, double u, const State& d, const Params& th,
                       StateJacobian& fx, ParamJacobian& ftheta) const {
    fx(0, 0) = th(0);
    ftheta(0, 0) = x(0);
    return step(x, u, d, th);
  }
  Output output(const State& x, const Params&) const { return x; }
  OutputStateJacobian output_dx(const State&, const Params&) const { return OutputStateJacobian::Identity(); }
  OutputParamJacobian output_dtheta(const State&, const Params&) const { return OutputParamJacobian::Zero(); }
  double u_max() const { return 1.0; }
};

// f independent of theta.
struct Frozen : ScalarLinear {
  State step_jacobians(const State& x, double, const State&, const Params&, StateJacobian& fx,
                       ParamJacobian& ftheta) const {
    fx(0, 0) = 0.7;
    ftheta.setZero();
    return 0.7 * x;
  }
};

Chi chi_with_xi_zero(const Problem& prob) { return Chi::initial(prob.x0, prob.theta0); }

}  // namespace

TEST(Sensitivity, ZeroStaysZeroWhenDynamicsIgnoreTheta) {
  Frozen m;
  Frozen::Sensitivity xi = Frozen::Sensitivity::Zero();
  xi = propagate_sensitivity(m, xi, Frozen::State(2.0), 0.0, Frozen::State::Zero(), Frozen::Params(1.0));
  EXPECT_EQ(xi(0, 0), 0.0);
}

TEST(Sensitivity, ScalarLinearClosedForm) {
  ScalarLinear m;
  const double theta = 0.93, x0 = 2.5;
  ScalarLinear::State x(x0);
  ScalarLinear::Sensitivity xi = ScalarLinear::Sensitivity::Zero();
  for (int t = 1; t <= 30; ++t) {
    xi = propagate_sensitivity(m, xi, x, 0.0, ScalarLinear::State::Zero(), ScalarLinear::Params(theta));
    x = m.step(x, 0.0, ScalarLinear::State::Zero(), ScalarLinear::Params(theta));
    EXPECT_NEAR(xi(0, 0), t * std::pow(theta, t - 1) * x0, 1e-12 * std::max(1.0, std::abs(xi(0, 0))));
  }
}

TEST(Sensitivity, LeukemiaShortHorizonMatchesFiniteDifferences) {
  const auto r = validation::check_sensitivity(fixtures::default_problem(), 21, 3);
  EXPECT_TRUE(r.passed) << r.detail;
  EXPECT_LT(r.measured, 1e-4);
}

TEST(Sensitivity, JacobiansMatchFiniteDifferences) {
  const auto r = validation::check_jacobians(fixtures::default_problem(), 20, 4);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(OutputSensitivity, XiZeroLeavesSingleEntry) {
  const auto& prob = fixtures::default_problem();
  const Chi chi = chi_with_xi_zero(prob);
  const auto S = output_sensitivity(prob.sys.model, prob.sys.time, chi, 0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 8; ++j)
      EXPECT_EQ(S(i, j), (i == 1 && j == kThetaP) ? prob.x0(7) : 0.0);
  EXPECT_THROW(output_sensitivity(prob.sys.model, prob.sys.time, chi, 1), InvalidArgument);
}

TEST(OutputSensitivity, ZeroWhenOutputIgnoresTheta) {
  ScalarLinear m;
  TimeStructure time(3, 1.0, {0}, {0}, 0.0, 1.0);
  AugmentedState<ScalarLinear> chi{ScalarLinear::State(1.0), ScalarLinear::Sensitivity::Zero(),
                                   ScalarLinear::Params(0.5)};
  EXPECT_EQ(output_sensitivity(m, time, chi, 0)(0, 0), 0.0);
  EXPECT_EQ(fim_term(m, time, chi, 0)(0, 0), 0.0);
}

TEST(Fim, TraceEqualsX8SquaredExactly) {
  const auto& prob = fixtures::default_problem();
  Chi chi = chi_with_xi_zero(prob);
  for (double x8 : {2.85e9, 1.0, 3.3e-4, 7.77e10}) {
    chi.x(7) = x8;
    EXPECT_EQ(fim_term(prob.sys.model, prob.sys.time, chi, 0).trace(), x8 * x8);
    EXPECT_EQ(fim_trace(prob.sys.model, prob.sys.time, chi, 0), x8 * x8);
  }
}

TEST(Fim, OracleSuitePasses) {
  const auto r = validation::check_fim(fixtures::default_problem(), 200, 9);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Fim, TotalOverCalendar) {
  const auto& prob = fixtures::default_problem();
  const auto& time = prob.sys.time;
  const Chi chi = chi_with_xi_zero(prob);
  std::vector<Chi> traj(time.measurement_times.size(), chi);
  const auto F = total_fim<LeukemiaModel>(prob.sys.model, time, traj);
  EXPECT_DOUBLE_EQ(F.trace(), 3.0 * prob.x0(7) * prob.x0(7));

  TimeStructure single(4, 1.0, {2}, {0, 1, 2, 3}, 0.0, 170.0);
  std::vector<Chi> one{chi};
  EXPECT_EQ(total_fim<LeukemiaModel>(prob.sys.model, single, one), fim_term(prob.sys.model, single, chi, 2));
  std::vector<Chi> wrong{chi, chi};
  EXPECT_THROW(total_fim<LeukemiaModel>(prob.sys.model, single, wrong), InvalidArgument);
}

TEST(Fim, TraceIsAdditive) {
  const auto& prob = fixtures::default_problem();
  CounterRng rng(21);
  std::vector<Chi> traj;
  double sum = 0.0;
  for (int t : prob.sys.time.measurement_times) {
    Chi chi = chi_with_xi_zero(prob);
    for (int i = 0; i < chi.xi.size(); ++i) chi.xi(i) = rng.normal() * 1e6;
    traj.push_back(chi);
    sum += fim_trace(prob.sys.model, prob.sys.time, chi, t);
  }
  const double total = total_fim<LeukemiaModel>(prob.sys.model, prob.sys.time, traj).trace();
  EXPECT_NEAR(total, sum, 1e-12 * sum);
}

TEST(Cost, InfoCostCap) {
  const auto& prob = fixtures::default_problem();
  Chi chi = chi_with_xi_zero(prob);
  CostSpec c;
  chi.x(7) = 0.0;
  EXPECT_EQ(info_cost(prob.sys.model, prob.sys.time, chi, 0, c), 0.0);
  chi.x(7) = 10.0;
  c.trace_cap = 50.0;
  EXPECT_EQ(info_cost(prob.sys.model, prob.sys.time, chi, 0, c), -50.0);
  c.trace_cap = 200.0;
  EXPECT_EQ(info_cost(prob.sys.model, prob.sys.time, chi, 0, c), -100.0);
}

TEST(Cost, BandPenaltyValues) {
  const auto& prob = fixtures::default_problem();
  CostSpec c;
  State x = prob.x0;
  Params th = prob.theta0;
  x(7) = 2e9;
  th(kThetaP) = 0.5;  // neutrophils at the lower band edge
  EXPECT_EQ(band_penalty(prob.sys.model, x, th, c), 0.0);
  Chi chi{x, Types::Sensitivity::Zero(), th};
  c.lambda = 1.0;
  c.lambda_hat = 1.0;
  EXPECT_EQ(stage_cost(prob.sys.model, prob.sys.time, chi, 0.0, 1, c), 0.0);

  x(7) = 3e9;  // neutrophils 1.5e9, mid-band
  EXPECT_DOUBLE_EQ(band_penalty(prob.sys.model, x, th, c), -2.5e17);
}

TEST(Cost, LambdaZeroGivesPerformanceCost) {
  const auto& prob = fixtures::default_problem();
  CostSpec c = prob.sys.cost;
  c.lambda = 0.0;
  const Chi chi = chi_with_xi_zero(prob);
  for (int t : {0, 1, 168}) {
    EXPECT_DOUBLE_EQ(stage_cost(prob.sys.model, prob.sys.time, chi, 85.0, t, c),
                     performance_cost(prob.sys.model, prob.sys.time, chi.x, 85.0, chi.theta_hat, c));
  }
  EXPECT_THROW(stage_cost(prob.sys.model, prob.sys.time, chi, 500.0, 0, c), InvalidArgument);
}

TEST(Cost, LowerBoundHolds) {
  const auto& prob = fixtures::default_problem();
  const double lb = stage_cost_lower_bound(prob.sys.time, prob.sys.model.u_max(), prob.sys.cost);
  CounterRng rng(8);
  for (int k = 0; k < 200; ++k) {
    Chi chi = chi_with_xi_zero(prob);
    chi.x(7) = 4e9 * rng.uniform();
    for (int i = 0; i < chi.xi.size(); ++i) chi.xi(i) = rng.normal() * 1e8;
    const double u = prob.sys.model.u_max() * rng.uniform();
    EXPECT_GE(prob.sys.stage(chi, u, 0), lb);
  }
}

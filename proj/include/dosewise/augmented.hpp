#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "dosewise/errors.hpp"
#include "dosewise/estimator.hpp"
#include "dosewise/model.hpp"
#include "dosewise/noise.hpp"
#include "dosewise/regimen.hpp"
#include "dosewise/rng.hpp"
#include "dosewise/sensitivity.hpp"
#include "dosewise/time_structure.hpp"

namespace dosewise {

// Everything needed to advance chi: the model evaluated at the estimate,
// calendars, noise laws, costs, and the estimator.
template <Model M>
struct AugmentedSystem {
  using State = typename M::State;
  using Output = typename M::Output;
  using Params = typename M::Params;
  using Chi = AugmentedState<M>;
  using Noise = NoiseModel<M::n, M::m>;

  M model;
  TimeStructure time;
  Noise noise;
  CostSpec cost;
  EstimatorConfig estimator;

  // Placeholder emitted off the measurement calendar; never read by step.
  static Output dummy_output() { return Output::Zero(); }

  // H_t: h(x; theta_hat) + w on T_y, the dummy vector elsewhere.
  Output output(const Chi& chi, const Output& w, int t) const {
    if (time.is_measurement(t)) return model.output(chi.x, chi.theta_hat) + w;
    return dummy_output();
  }

  // F_bar_t: stacks f, the sensitivity recursion, and the estimator driven
  // by the supplied measurement y (ignored off the calendar).
  Chi step_with_measurement(const Chi& chi, double u, const State& d, const Output& y,
                            int t) const {
    check_step(u, t);
    Chi next;
    typename M::StateJacobian fx;
    typename M::ParamJacobian ftheta;
    next.x = model.step_jacobians(chi.x, u, d, chi.theta_hat, fx, ftheta);
    next.xi = fx * chi.xi + ftheta;
    next.theta_hat = estimator_update(model, time, y, chi.x, chi.theta_hat, t, estimator);
    return next;
  }

  // F_t(chi, u, d, w) = F_bar_t(chi, u, d, H_t(chi, w)).
  Chi step(const Chi& chi, double u, const State& d, const Output& w, int t) const {
    return step_with_measurement(chi, u, d, output(chi, w, t), t);
  }

  // G_t: the transition when no measurement exists at t.
  Chi step_no_meas(const Chi& chi, double u, const State& d, int t) const {
    if (time.measurement_transition(t))
      throw InvalidArgument("step_no_meas: t is on the measurement calendar; use step");
    check_step(u, t);
    Chi next;
    typename M::StateJacobian fx;
    typename M::ParamJacobian ftheta;
    next.x = model.step_jacobians(chi.x, u, d, chi.theta_hat, fx, ftheta);
    next.xi = fx * chi.xi + ftheta;
    next.theta_hat = chi.theta_hat;
    return next;
  }

  double stage(const Chi& chi, double u, int t) const {
    return stage_cost(model, time, chi, u, t, cost);
  }
  double terminal(const Chi& chi) const { return terminal_cost(model, time, chi, cost); }

 private:
  void check_step(double u, int t) const {
    if (t < 0 || t >= time.N) throw InvalidArgument("step: t must lie in {0..N-1}");
    if (u < 0.0 || u > model.u_max() * (1.0 + 1e-12))
      throw InvalidArgument("step: u outside [0, u_max]");
  }
};

// Ground-truth patient trace.
template <Model M>
struct PlantTrace {
  std::vector<typename M::State> x;                       // t = 0..N
  std::vector<std::optional<typename M::Output>> y;       // t = 0..N, set on T_y
  std::vector<double> u;                                  // t = 0..N-1
};

// The plant evolves under the true parameters; its noise comes from the
// plant streams of `seed`, independent of every controller stream.
template <Model M>
PlantTrace<M> simulate_plant(const AugmentedSystem<M>& sys, const typename M::Params& theta_true,
                             const typename M::State& x0, const DoseRegimen& regimen,
                             std::uint64_t seed) {
  regimen.validate(sys.time);
  CounterRng process(seed, Stream::kPlantProcess);
  CounterRng measurement(seed, Stream::kPlantMeasurement);
  PlantTrace<M> trace;
  const int N = sys.time.N;
  trace.x.reserve(N + 1);
  trace.y.assign(N + 1, std::nullopt);
  trace.x.push_back(x0);
  for (int t = 0; t <= N; ++t) {
    const auto& x = trace.x.back();
    if (sys.time.is_measurement(t))
      trace.y[t] = sys.model.output(x, theta_true) + sys.noise.sample_measurement(measurement);
    if (t == N) break;
    const double u = regimen.dose_at(sys.time, t);
    trace.u.push_back(u);
    trace.x.push_back(sys.model.step(x, u, sys.noise.sample_process(process), theta_true));
  }
  return trace;
}

// One row per time index; the last row (t = N) carries the terminal cost and
// no control.
template <Model M>
struct TrajectoryRecord {
  int t = 0;
  typename M::State x_plant;
  AugmentedState<M> chi;
  double u = 0.0;
  std::optional<typename M::Output> y;
  double cost = 0.0;
};

template <Model M>
struct Trajectory {
  std::vector<TrajectoryRecord<M>> records;  // t = 0..N
  typename M::Params theta_true;
  std::uint64_t seed = 0;
  std::size_t clamped_controls = 0;
  double delta = 1.0;

  double total_cost() const {
    double c = 0.0;
    for (const auto& r : records) c += r.cost;
    return c;
  }
};

// Controller callback: decide(t, chi_t, y_t) with y_t present on T_y. Called
// at every t in T so stateful policies observe every measurement; the
// harness overrides the answer with u_default off the decision calendar.
template <Model M>
using ClosedLoopPolicy =
    std::function<double(int, const AugmentedState<M>&, const std::optional<typename M::Output>&)>;

// The plant produces measurements; the controller's chi advances through
// F_bar_t with nominal (zero) process noise and the plant's measurement.
template <Model M>
Trajectory<M> simulate_closed_loop(const AugmentedSystem<M>& sys,
                                   const typename M::Params& theta_true,
                                   const typename M::State& x0_true,
                                   const AugmentedState<M>& chi0, const ClosedLoopPolicy<M>& policy,
                                   std::uint64_t seed) {
  CounterRng process(seed, Stream::kPlantProcess);
  CounterRng measurement(seed, Stream::kPlantMeasurement);
  Trajectory<M> traj;
  traj.theta_true = theta_true;
  traj.seed = seed;
  traj.delta = sys.time.delta;
  const int N = sys.time.N;
  traj.records.reserve(N + 1);

  typename M::State x = x0_true;
  AugmentedState<M> chi = chi0;
  const typename M::State zero = M::State::Zero();
  for (int t = 0; t <= N; ++t) {
    TrajectoryRecord<M> rec;
    rec.t = t;
    rec.x_plant = x;
    rec.chi = chi;
    if (sys.time.is_measurement(t))
      rec.y = sys.model.output(x, theta_true) + sys.noise.sample_measurement(measurement);
    if (t == N) {
      rec.cost = sys.terminal(chi);
      traj.records.push_back(rec);
      break;
    }
    double u = sys.time.u_default;
    const double requested = policy(t, chi, rec.y);
    if (sys.time.is_decision(t)) {
      u = sys.time.clamp_control(requested);
      if (u != requested) ++traj.clamped_controls;
    }
    rec.u = u;
    rec.cost = sys.stage(chi, u, t);
    const auto y = rec.y ? *rec.y : AugmentedSystem<M>::dummy_output();
    chi = sys.step_with_measurement(chi, u, zero, y, t);
    x = sys.model.step(x, u, sys.noise.sample_process(process), theta_true);
    traj.records.push_back(rec);
  }
  return traj;
}

// Seeded run of the augmented system itself: chi_{t+1} = F_t(chi_t, u_t,
// d_t, w_t) on T_y \ {N} and G_t(chi_t, u_t, d_t) elsewhere, with y_t = H_t.
template <Model M>
Trajectory<M> simulate_augmented(const AugmentedSystem<M>& sys, const AugmentedState<M>& chi0,
                                 const DoseRegimen& regimen, std::uint64_t seed) {
  regimen.validate(sys.time);
  CounterRng process(seed, Stream::kProcess);
  CounterRng measurement(seed, Stream::kMeasurement);
  Trajectory<M> traj;
  traj.theta_true = chi0.theta_hat;
  traj.seed = seed;
  traj.delta = sys.time.delta;
  const int N = sys.time.N;
  traj.records.reserve(N + 1);
  AugmentedState<M> chi = chi0;
  for (int t = 0; t <= N; ++t) {
    TrajectoryRecord<M> rec;
    rec.t = t;
    rec.x_plant = chi.x;
    rec.chi = chi;
    typename M::Output w = M::Output::Zero();
    if (sys.time.is_measurement(t)) {
      w = sys.noise.sample_measurement(measurement);
      rec.y = sys.output(chi, w, t);
    }
    if (t == N) {
      rec.cost = sys.terminal(chi);
      traj.records.push_back(rec);
      break;
    }
    rec.u = regimen.dose_at(sys.time, t);
    rec.cost = sys.stage(chi, rec.u, t);
    const auto d = sys.noise.sample_process(process);
    chi = sys.time.measurement_transition(t) ? sys.step(chi, rec.u, d, w, t)
                                             : sys.step_no_meas(chi, rec.u, d, t);
    traj.records.push_back(rec);
  }
  return traj;
}

// Open-loop regimen as a closed-loop policy.
template <Model M>
ClosedLoopPolicy<M> regimen_policy(const TimeStructure& time, DoseRegimen regimen) {
  return [time, regimen = std::move(regimen)](int t, const AugmentedState<M>&,
                                              const std::optional<typename M::Output>&) {
    return regimen.dose_at(time, t);
  };
}

}  // namespace dosewise

#pragma once

#include <atomic>
#include <memory>

#include "dosewise/augmented.hpp"
#include "dosewise/particle_filter.hpp"

namespace dosewise {

// Particle-filter kernel over chi. Off T_y only process noise is drawn;
// on T_y \ {N} the transition also draws w (or reuses the realized y).
template <Model M>
struct AugmentedKernel {
  using State = AugmentedState<M>;
  using Control = double;
  using Observation = typename M::Output;

  const AugmentedSystem<M>* sys = nullptr;
  // Number of observation_logdensity calls; shared by copies.
  std::shared_ptr<std::atomic<std::size_t>> density_calls =
      std::make_shared<std::atomic<std::size_t>>(0);

  const TimeStructure& time() const { return sys->time; }

  State sample_transition(const State& chi, double u, int t, CounterRng& rng) const {
    const auto d = sys->noise.sample_process(rng);
    if (!sys->time.measurement_transition(t)) return sys->step_no_meas(chi, u, d, t);
    const auto w = sys->noise.sample_measurement(rng);
    return sys->step(chi, u, d, w, t);
  }

  State sample_transition_given(const State& chi, double u, int t, const Observation& y,
                                CounterRng& rng) const {
    const auto d = sys->noise.sample_process(rng);
    return sys->step_with_measurement(chi, u, d, y, t);
  }

  double observation_logdensity(const Observation& y, const State& chi, int t) const {
    sys->time.require_measurement(t, "observation_logdensity");
    density_calls->fetch_add(1, std::memory_order_relaxed);
    return sys->noise.measurement_logdensity(y - sys->model.output(chi.x, chi.theta_hat));
  }
};

template <Model M>
using AugmentedBelief = ParticleBelief<AugmentedState<M>, typename M::Output>;

// c~_t(z, u): belief average of the stage cost (t < N) or terminal cost.
template <Model M>
double expected_stage_cost(const AugmentedSystem<M>& sys, const AugmentedBelief<M>& z, double u,
                           int t) {
  z.check();
  if (t == sys.time.N) return z.expectation([&](const auto& chi) { return sys.terminal(chi); });
  return z.expectation([&](const auto& chi) { return sys.stage(chi, u, t); });
}

// Weighted mean of a per-particle vector quantity.
template <Model M, class F>
auto belief_mean(const AugmentedBelief<M>& z, F&& f) {
  auto acc = f(z.particles.front());
  acc.setZero();
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z.weights[i] > 0.0) acc += z.weights[i] * f(z.particles[i]);
  return acc;
}

}  // namespace dosewise

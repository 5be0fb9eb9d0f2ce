#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <vector>

#include "dosewise/errors.hpp"
#include "dosewise/parallel.hpp"
#include "dosewise/rng.hpp"
#include "dosewise/time_structure.hpp"

namespace dosewise {

// Sampler/density pair for one POMDP: q_{t+1}(. | s, u) as a sampler and
// s_t(y | s) as a log-density defined on the measurement calendar only.
template <class K>
concept BeliefKernel = requires(const K& k, const typename K::State& s,
                                const typename K::Control& u,
                                const typename K::Observation& y, int t, CounterRng& rng) {
  { k.time() } -> std::convertible_to<const TimeStructure&>;
  { k.sample_transition(s, u, t, rng) } -> std::convertible_to<typename K::State>;
  { k.observation_logdensity(y, s, t) } -> std::convertible_to<double>;
};

// Kernels whose transition out of a measurement time reuses the measurement
// noise realized at that time (the augmented system feeds y_t to the
// estimator). Given y_t the conditional transition only draws process noise.
template <class K>
concept ObservedTransitionKernel =
    BeliefKernel<K> && requires(const K& k, const typename K::State& s,
                                const typename K::Control& u,
                                const typename K::Observation& y, int t, CounterRng& rng) {
      { k.sample_transition_given(s, u, t, y, rng) } -> std::convertible_to<typename K::State>;
    };

// Weighted particle approximation of a belief at time index t. If a
// measurement was assimilated at t it is kept so the next transition can
// condition on it.
template <class State, class Observation>
struct ParticleBelief {
  std::vector<State> particles;
  std::vector<double> weights;
  int t = 0;
  std::optional<Observation> observation;

  std::size_t size() const { return particles.size(); }

  static ParticleBelief dirac(const State& s, int t = 0) {
    return {{s}, {1.0}, t, std::nullopt};
  }

  double effective_sample_size() const {
    double sq = 0.0;
    for (double w : weights) sq += w * w;
    return sq > 0.0 ? 1.0 / sq : 0.0;
  }

  void check() const {
    if (particles.empty()) throw InvalidArgument("belief: at least one particle required");
    if (particles.size() != weights.size())
      throw InvalidArgument("belief: particle and weight counts differ");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("belief: invalid weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("belief: weights must sum to 1");
  }

  // E[f(state)] under the belief.
  template <class F>
  double expectation(F&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < particles.size(); ++i)
      if (weights[i] > 0.0) acc += weights[i] * f(particles[i]);
    return acc;
  }
};

struct FilterOptions {
  double ess_fraction = 0.5;  // resample when ESS < fraction * count
  unsigned threads = 1;
};

namespace detail {

// Normalizes log-weights in place into linear weights. Throws when every
// weight vanished.
inline std::vector<double> normalize_log_weights(const std::vector<double>& logw) {
  double max_log = -std::numeric_limits<double>::infinity();
  for (double v : logw) max_log = std::max(max_log, v);
  if (!std::isfinite(max_log))
    throw DegenerateUpdate("belief update: every particle has zero likelihood", max_log);
  std::vector<double> w(logw.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    w[i] = std::exp(logw[i] - max_log);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace detail

// Systematic resampling: one uniform offset, n evenly spaced pointers.
template <class State, class Observation>
void systematic_resample(ParticleBelief<State, Observation>& belief, CounterRng& rng) {
  const std::size_t n = belief.size();
  std::vector<State> out;
  out.reserve(n);
  const double step = 1.0 / static_cast<double>(n);
  double pointer = rng.uniform() * step;
  double cumulative = belief.weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (pointer > cumulative && j + 1 < n) cumulative += belief.weights[++j];
    out.push_back(belief.particles[j]);
    pointer += step;
  }
  belief.particles = std::move(out);
  belief.weights.assign(n, step);
}

template <class State, class Observation>
void maybe_resample(ParticleBelief<State, Observation>& belief, const FilterOptions& opt,
                    CounterRng& rng) {
  if (belief.effective_sample_size() < opt.ess_fraction * static_cast<double>(belief.size()))
    systematic_resample(belief, rng);
}

// One draw from the transition kernel, conditioning on the assimilated
// measurement when the kernel supports it.
template <BeliefKernel K>
typename K::State propagate_particle(const K& kernel, const typename K::State& s,
                                     const typename K::Control& u, int t,
                                     const std::optional<typename K::Observation>& y_t,
                                     CounterRng& rng) {
  if constexpr (ObservedTransitionKernel<K>) {
    if (y_t && kernel.time().measurement_transition(t))
      return kernel.sample_transition_given(s, u, t, *y_t, rng);
  }
  return kernel.sample_transition(s, u, t, rng);
}

template <BeliefKernel K>
using BeliefOf = ParticleBelief<typename K::State, typename K::Observation>;

namespace detail {

template <BeliefKernel K>
BeliefOf<K> propagate_all(const K& kernel, const BeliefOf<K>& belief,
                          const typename K::Control& u, CounterRng& rng,
                          const FilterOptions& opt) {
  const int t = belief.t;
  if (t < 0 || t >= kernel.time().N) throw InvalidArgument("predict: t must lie in {0..N-1}");
  const std::uint64_t key = rng();
  BeliefOf<K> next;
  next.t = t + 1;
  next.weights = belief.weights;
  next.particles.resize(belief.size(), belief.particles.front());
  parallel_for(belief.size(), opt.threads, [&](std::size_t i) {
    CounterRng local(key, Stream::kProcess, i);
    next.particles[i] =
        propagate_particle(kernel, belief.particles[i], u, t, belief.observation, local);
  });
  return next;
}

}  // namespace detail

// Prediction to t+1 when no measurement exists there: particles move,
// weights do not.
template <BeliefKernel K>
BeliefOf<K> predict(const K& kernel, const BeliefOf<K>& belief, const typename K::Control& u,
                    CounterRng& rng, const FilterOptions& opt = {}) {
  if (kernel.time().is_measurement(belief.t + 1))
    throw InvalidArgument("predict: t+1 is on the measurement calendar; use bayes_update");
  return detail::propagate_all(kernel, belief, u, rng, opt);
}

// Propagation to t+1 followed by Bayes reweighting with the measurement at
// t+1, then systematic resampling if the ESS dropped below the threshold.
template <BeliefKernel K>
BeliefOf<K> bayes_update(const K& kernel, const BeliefOf<K>& belief, const typename K::Control& u,
                         const typename K::Observation& y_next, CounterRng& rng,
                         const FilterOptions& opt = {}) {
  const int t_next = belief.t + 1;
  if (t_next == 0 || !kernel.time().is_measurement(t_next))
    throw InvalidArgument("bayes_update: t+1 must be a nonzero measurement time");
  BeliefOf<K> next = detail::propagate_all(kernel, belief, u, rng, opt);
  std::vector<double> logw(next.size());
  parallel_for(next.size(), opt.threads, [&](std::size_t i) {
    logw[i] = next.weights[i] > 0.0
                  ? std::log(next.weights[i]) +
                        kernel.observation_logdensity(y_next, next.particles[i], t_next)
                  : -std::numeric_limits<double>::infinity();
  });
  next.weights = detail::normalize_log_weights(logw);
  next.observation = y_next;
  maybe_resample(next, opt, rng);
  return next;
}

// Belief advance that picks prediction or Bayes update from the calendar.
template <BeliefKernel K>
BeliefOf<K> advance(const K& kernel, const BeliefOf<K>& belief, const typename K::Control& u,
                    const std::optional<typename K::Observation>& y_next, CounterRng& rng,
                    const FilterOptions& opt = {}) {
  if (kernel.time().is_measurement(belief.t + 1)) {
    if (!y_next) throw InvalidArgument("advance: measurement required at t+1");
    return bayes_update(kernel, belief, u, *y_next, rng, opt);
  }
  return predict(kernel, belief, u, rng, opt);
}

// Initial belief: n draws from the prior, Bayes-conditioned on y0 when 0 is
// a measurement time.
template <BeliefKernel K, class PriorSampler>
BeliefOf<K> initial_belief(const K& kernel, PriorSampler&& prior, std::size_t count,
                           const std::optional<typename K::Observation>& y0, CounterRng& rng,
                           const FilterOptions& opt = {}) {
  if (count == 0) throw InvalidArgument("initial_belief: particle count must be positive");
  BeliefOf<K> belief;
  belief.t = 0;
  belief.particles.reserve(count);
  const std::uint64_t key = rng();
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng local(key, Stream::kPrior, i);
    belief.particles.push_back(prior(local));
  }
  belief.weights.assign(count, 1.0 / static_cast<double>(count));
  if (!kernel.time().is_measurement(0)) return belief;
  if (!y0) throw InvalidArgument("initial_belief: 0 is a measurement time; y0 required");
  std::vector<double> logw(count);
  for (std::size_t i = 0; i < count; ++i)
    logw[i] = std::log(belief.weights[i]) +
              kernel.observation_logdensity(*y0, belief.particles[i], 0);
  belief.weights = detail::normalize_log_weights(logw);
  belief.observation = y0;
  maybe_resample(belief, opt, rng);
  return belief;
}

}  // namespace dosewise

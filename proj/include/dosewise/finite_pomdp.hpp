#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dosewise/errors.hpp"
#include "dosewise/rng.hpp"
#include "dosewise/time_structure.hpp"

namespace dosewise {

// A POMDP with finitely many states, actions and observations, used as an
// exact oracle for the belief machinery. Observations depend on the state
// only; actions are indices 0..n_actions-1 and the default action is
// time.u_default.
struct FiniteToyPOMDP {
  int n_states = 0;
  int n_actions = 0;
  int n_observations = 0;
  std::vector<Eigen::MatrixXd> transition;  // per action, rows sum to 1
  Eigen::MatrixXd observation;              // n_states x n_observations
  std::vector<Eigen::MatrixXd> stage_cost;  // per t < N: n_states x n_actions
  Eigen::VectorXd terminal_cost;
  Eigen::VectorXd initial;
  TimeStructure time;

  int default_action() const { return static_cast<int>(time.u_default); }

  void validate() const {
    auto stochastic_rows = [](const Eigen::MatrixXd& m, const char* what) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if ((m.row(r).array() < 0.0).any() || !m.row(r).allFinite())
          throw InvalidArgument(std::string(what) + ": negative or non-finite entry");
        if (std::abs(m.row(r).sum() - 1.0) > 1e-12)
          throw InvalidArgument(std::string(what) + ": rows must sum to 1");
      }
    };
    if (n_states < 1 || n_actions < 1 || n_observations < 1)
      throw InvalidArgument("toy: empty state, action or observation set");
    if (static_cast<int>(transition.size()) != n_actions)
      throw InvalidArgument("toy: one transition matrix per action required");
    for (const auto& q : transition) {
      if (q.rows() != n_states || q.cols() != n_states)
        throw InvalidArgument("toy: transition shape mismatch");
      stochastic_rows(q, "toy transition");
    }
    if (observation.rows() != n_states || observation.cols() != n_observations)
      throw InvalidArgument("toy: observation shape mismatch");
    stochastic_rows(observation, "toy observation");
    if (static_cast<int>(stage_cost.size()) != time.N)
      throw InvalidArgument("toy: one stage cost table per t < N required");
    for (const auto& c : stage_cost)
      if (c.rows() != n_states || c.cols() != n_actions)
        throw InvalidArgument("toy: stage cost shape mismatch");
    if (terminal_cost.size() != n_states || initial.size() != n_states)
      throw InvalidArgument("toy: terminal cost / initial distribution shape mismatch");
    Eigen::MatrixXd init = initial.transpose();
    stochastic_rows(init, "toy initial distribution");
    time.validate();
    if (default_action() < 0 || default_action() >= n_actions)
      throw InvalidArgument("toy: default action out of range");
  }
};

using BeliefVector = Eigen::VectorXd;

// z' = z^T Q_u, then (if y is present) reweighted by the likelihood of y and
// normalized. `t` is the index of the transition t -> t+1; y is the
// measurement at t+1.
inline BeliefVector exact_filter_step(const FiniteToyPOMDP& toy, const BeliefVector& z, int u,
                                      const std::optional<int>& y, int t) {
  if (u < 0 || u >= toy.n_actions) throw InvalidArgument("exact_filter_step: bad action");
  if (t < 0 || t >= toy.time.N) throw InvalidArgument("exact_filter_step: t must lie in {0..N-1}");
  if (y.has_value() != toy.time.is_measurement(t + 1))
    throw InvalidArgument("exact_filter_step: observation presence must match the calendar at t+1");
  BeliefVector next = toy.transition[static_cast<std::size_t>(u)].transpose() * z;
  if (!y) return next;
  if (*y < 0 || *y >= toy.n_observations)
    throw InvalidArgument("exact_filter_step: bad observation");
  next = next.cwiseProduct(toy.observation.col(*y));
  const double norm = next.sum();
  if (!(norm > 0.0)) throw ImpossibleObservation("exact_filter_step: observation has probability 0");
  return next / norm;
}

// Bayes conditioning of a belief on an observation of the current state.
inline BeliefVector exact_condition(const FiniteToyPOMDP& toy, const BeliefVector& z, int y) {
  BeliefVector next = z.cwiseProduct(toy.observation.col(y));
  const double norm = next.sum();
  if (!(norm > 0.0)) throw ImpossibleObservation("exact_condition: observation has probability 0");
  return next / norm;
}

// Pr(y | z) for an observation of a state distributed as z.
inline Eigen::VectorXd observation_probabilities(const FiniteToyPOMDP& toy, const BeliefVector& z) {
  return toy.observation.transpose() * z;
}

// Exact filter along a full measurement record (y[t] present on T_y).
inline std::vector<BeliefVector> exact_filter(const FiniteToyPOMDP& toy,
                                              const std::vector<int>& actions,
                                              const std::vector<std::optional<int>>& y) {
  std::vector<BeliefVector> out;
  BeliefVector z = toy.initial;
  if (toy.time.is_measurement(0)) z = exact_condition(toy, z, y.at(0).value());
  out.push_back(z);
  for (int t = 0; t < toy.time.N; ++t) {
    std::optional<int> obs;
    if (toy.time.is_measurement(t + 1)) obs = y.at(static_cast<std::size_t>(t + 1)).value();
    z = exact_filter_step(toy, z, actions.at(static_cast<std::size_t>(t)), obs, t);
    out.push_back(z);
  }
  return out;
}

inline int sample_index(const Eigen::VectorXd& probs, CounterRng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return static_cast<int>(i);
  }
  for (Eigen::Index i = probs.size(); i-- > 0;)
    if (probs(i) > 0.0) return static_cast<int>(i);
  return static_cast<int>(probs.size()) - 1;
}

// Particle-filter kernel view of a toy.
struct ToyKernel {
  using State = int;
  using Control = int;
  using Observation = int;

  const FiniteToyPOMDP* toy = nullptr;

  const TimeStructure& time() const { return toy->time; }

  int sample_transition(int s, int u, int t, CounterRng& rng) const {
    if (t < 0 || t >= toy->time.N) throw InvalidArgument("toy transition: bad t");
    return sample_index(toy->transition[static_cast<std::size_t>(u)].row(s).transpose(), rng);
  }

  double observation_logdensity(int y, int s, int t) const {
    toy->time.require_measurement(t, "observation_logdensity");
    const double p = toy->observation(s, y);
    return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
  }

  int sample_observation(int s, CounterRng& rng) const {
    return sample_index(toy->observation.row(s).transpose(), rng);
  }
};

// Dirichlet-ish random row (normalized uniforms bounded away from zero when
// `floor` > 0).
inline Eigen::VectorXd random_distribution(int size, CounterRng& rng, double floor = 0.0) {
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v(i) = floor + rng.uniform();
  return v / v.sum();
}

struct ToyShape {
  int n_states = 2;
  int n_actions = 2;
  int n_observations = 2;
  int horizon = 3;
  std::vector<int> measurement_times;
  std::vector<int> decision_times;
  int default_action = 0;
  double observation_floor = 0.05;
};

// Random toy with costs uniform in [0, 1).
inline FiniteToyPOMDP random_toy(const ToyShape& shape, CounterRng& rng) {
  FiniteToyPOMDP toy;
  toy.n_states = shape.n_states;
  toy.n_actions = shape.n_actions;
  toy.n_observations = shape.n_observations;
  for (int a = 0; a < shape.n_actions; ++a) {
    Eigen::MatrixXd q(shape.n_states, shape.n_states);
    for (int s = 0; s < shape.n_states; ++s)
      q.row(s) = random_distribution(shape.n_states, rng).transpose();
    toy.transition.push_back(q);
  }
  toy.observation.resize(shape.n_states, shape.n_observations);
  for (int s = 0; s < shape.n_states; ++s)
    toy.observation.row(s) =
        random_distribution(shape.n_observations, rng, shape.observation_floor).transpose();
  for (int t = 0; t < shape.horizon; ++t) {
    Eigen::MatrixXd c(shape.n_states, shape.n_actions);
    for (int s = 0; s < shape.n_states; ++s)
      for (int a = 0; a < shape.n_actions; ++a) c(s, a) = rng.uniform();
    toy.stage_cost.push_back(c);
  }
  toy.terminal_cost.resize(shape.n_states);
  for (int s = 0; s < shape.n_states; ++s) toy.terminal_cost(s) = rng.uniform();
  toy.initial = random_distribution(shape.n_states, rng, 0.1);
  toy.time = TimeStructure(shape.horizon, 1.0, shape.measurement_times, shape.decision_times,
                           shape.default_action, shape.n_actions - 1);
  toy.validate();
  return toy;
}

}  // namespace dosewise

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "dosewise/errors.hpp"
#include "dosewise/finite_pomdp.hpp"
#include "dosewise/rng.hpp"

namespace dosewise {

struct ValueEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t evaluations = 0;
  std::size_t excluded = 0;  // scenarios dropped after a degenerate update
};

// Mean and standard error of a sample.
inline ValueEstimate summarize(const std::vector<double>& samples, std::size_t excluded = 0) {
  ValueEstimate est;
  est.evaluations = samples.size();
  est.excluded = excluded;
  if (samples.empty()) return est;
  const double n = static_cast<double>(samples.size());
  est.value = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double v : samples) ss += (v - est.value) * (v - est.value);
    est.standard_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return est;
}

// Reactive protocol: outside the band the next cycle's daily dose moves by
// 20% (down when neutrophils are low, up when high), clamped to [0, u_max].
inline double baseline_reactive(double anc, double current_daily_dose, double band_lo,
                                double band_hi, double u_max) {
  if (!(anc > 0.0) || !(current_daily_dose >= 0.0) || !(u_max > 0.0))
    throw InvalidArgument("baseline_reactive: inputs must be positive");
  double next = current_daily_dose;
  if (anc < band_lo) next = current_daily_dose * 0.8;
  else if (anc > band_hi) next = current_daily_dose * 1.2;
  return std::clamp(next, 0.0, u_max);
}

// ---------------------------------------------------------------------------
// Finite toys: belief-space costs and the value recursion.

inline double expected_stage_cost(const FiniteToyPOMDP& toy, const BeliefVector& z, int u, int t) {
  if (t < 0 || t >= toy.time.N) throw InvalidArgument("expected_stage_cost: bad t");
  return z.dot(toy.stage_cost[static_cast<std::size_t>(t)].col(u));
}

inline double expected_terminal_cost(const FiniteToyPOMDP& toy, const BeliefVector& z) {
  return z.dot(toy.terminal_cost);
}

// Regular grid on the probability simplex with resolution R subdivisions
// per edge, stored in cumulative coordinates c_i = R * sum_{j >= i} z_j
// (i = 1..k-1), which are non-increasing integers in [0, R]. Queries are
// interpolated on the Freudenthal triangulation.
class SimplexGrid {
 public:
  SimplexGrid(int states, int points_per_edge) : k_(states), R_(points_per_edge - 1) {
    if (states < 1) throw InvalidArgument("grid: need at least one state");
    if (points_per_edge < 2) throw InvalidArgument("grid: resolution must be >= 2");
    const int dims = k_ - 1;
    double dense = 1.0;
    for (int i = 0; i < dims; ++i) dense *= (R_ + 1);
    if (dense > 5e7) throw TooLarge("grid: too many nodes");
    lookup_.assign(static_cast<std::size_t>(dense), -1);
    std::vector<int> c(static_cast<std::size_t>(dims), 0);
    enumerate(c, 0, R_);
  }

  int states() const { return k_; }
  int subdivisions() const { return R_; }
  std::size_t size() const { return nodes_.size(); }

  BeliefVector belief(std::size_t node) const {
    const auto& c = nodes_[node];
    BeliefVector z(k_);
    const double R = R_;
    if (k_ == 1) {
      z(0) = 1.0;
      return z;
    }
    z(0) = (R - c[0]) / R;
    for (int i = 1; i < k_ - 1; ++i) z(i) = (c[i - 1] - c[i]) / R;
    z(k_ - 1) = c[k_ - 2] / R;
    return z;
  }

  // Vertices and barycentric weights of the cell containing z.
  std::vector<std::pair<std::size_t, double>> interpolation(const BeliefVector& z) const {
    const int dims = k_ - 1;
    if (dims == 0) return {{0, 1.0}};
    std::vector<double> x(static_cast<std::size_t>(dims));
    double tail = 0.0;
    for (int i = k_ - 1; i >= 1; --i) {
      tail += z(i);
      x[static_cast<std::size_t>(i - 1)] = std::clamp(tail * R_, 0.0, static_cast<double>(R_));
    }
    std::vector<int> base(static_cast<std::size_t>(dims));
    std::vector<double> frac(static_cast<std::size_t>(dims));
    for (int i = 0; i < dims; ++i) {
      base[i] = static_cast<int>(std::floor(x[i]));
      frac[i] = x[i] - base[i];
    }
    // Monotonicity can break only through rounding; repair it.
    for (int i = 1; i < dims; ++i)
      if (base[i] > base[i - 1]) {
        base[i] = base[i - 1];
        frac[i] = 0.0;
      }
    std::vector<int> order(static_cast<std::size_t>(dims));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return frac[a] > frac[b]; });
    std::vector<std::pair<std::size_t, double>> out;
    std::vector<int> v = base;
    out.emplace_back(index(v), 1.0 - (dims > 0 ? frac[order[0]] : 0.0));
    for (int j = 0; j < dims; ++j) {
      const double d = frac[order[j]];
      if (d <= 0.0) break;
      ++v[order[j]];
      const double next = j + 1 < dims ? frac[order[j + 1]] : 0.0;
      out.emplace_back(index(v), d - next);
    }
    return out;
  }

  double interpolate(const std::vector<double>& values, const BeliefVector& z) const {
    double acc = 0.0;
    for (const auto& [node, w] : interpolation(z))
      if (w != 0.0) acc += w * values[node];
    return acc;
  }

  std::size_t index(const std::vector<int>& c) const {
    std::size_t flat = 0;
    for (int v : c) {
      if (v < 0 || v > R_) throw InvalidArgument("grid: coordinate out of range");
      flat = flat * static_cast<std::size_t>(R_ + 1) + static_cast<std::size_t>(v);
    }
    const int id = lookup_[flat];
    if (id < 0) throw InvalidArgument("grid: coordinates are not a simplex node");
    return static_cast<std::size_t>(id);
  }

 private:
  void enumerate(std::vector<int>& c, int depth, int upper) {
    if (depth == static_cast<int>(c.size())) {
      std::size_t flat = 0;
      for (int v : c) flat = flat * static_cast<std::size_t>(R_ + 1) + static_cast<std::size_t>(v);
      lookup_[flat] = static_cast<int>(nodes_.size());
      nodes_.push_back(c);
      return;
    }
    for (int v = 0; v <= upper; ++v) {
      c[static_cast<std::size_t>(depth)] = v;
      enumerate(c, depth + 1, v);
    }
  }

  int k_;
  int R_;
  std::vector<std::vector<int>> nodes_;
  std::vector<int> lookup_;
};

// Value recursion J_t over beliefs of a finite toy. J_t is evaluated exactly
// (memoized over the finitely many beliefs reachable from the query), and
// tabulated on a simplex grid with interpolated successors for the policy
// table.
class FiniteDpSolution {
 public:
  FiniteDpSolution(const FiniteToyPOMDP& toy, int points_per_edge)
      : toy_(&toy), grid_(toy.n_states, points_per_edge) {
    toy.validate();
    memo_.resize(static_cast<std::size_t>(toy.time.N + 1));
    solve_grid();
  }

  const SimplexGrid& grid() const { return grid_; }
  const std::vector<double>& node_values(int t) const { return values_[t]; }
  const std::vector<int>& node_actions(int t) const { return actions_[t]; }

  // Exact J_t(z).
  double value(int t, const BeliefVector& z) const { return evaluate(t, z).first; }

  // Exact greedy selector kappa_t(z): lowest-index minimizer on T_u, the
  // default action elsewhere.
  int action(int t, const BeliefVector& z) const {
    if (!toy_->time.is_decision(t)) return toy_->default_action();
    return evaluate(t, z).second;
  }

  // Action from the grid table (nearest vertex by weight).
  int table_action(int t, const BeliefVector& z) const {
    if (!toy_->time.is_decision(t)) return toy_->default_action();
    const auto cell = grid_.interpolation(z);
    auto best = std::max_element(cell.begin(), cell.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    return actions_[t][best->first];
  }

  double interpolated_value(int t, const BeliefVector& z) const {
    return grid_.interpolate(values_[t], z);
  }

  // J*(p): expectation of J_0 over the initial belief kernel.
  double optimal_value() const {
    return initial_expectation([&](const BeliefVector& z) { return value(0, z); });
  }
  double optimal_value_grid() const {
    return initial_expectation([&](const BeliefVector& z) { return interpolated_value(0, z); });
  }

  // A priori bound on |grid value - exact value|: each interpolation of a
  // concave piecewise-linear J_t misses by at most span_t * 2(k-1)/R, and
  // errors accumulate additively through the recursion.
  double interpolation_bound() const {
    const auto& toy = *toy_;
    const double cell = 2.0 * (toy.n_states - 1) / std::max(1, grid_.subdivisions());
    double bound = 0.0;
    for (int t = 0; t <= toy.time.N; ++t) {
      double span = toy.terminal_cost.maxCoeff() - toy.terminal_cost.minCoeff();
      for (int tau = t; tau < toy.time.N; ++tau)
        span += toy.stage_cost[tau].maxCoeff() - toy.stage_cost[tau].minCoeff();
      bound += span * cell;
    }
    return bound;
  }

 private:
  template <class F>
  double initial_expectation(F&& f) const {
    const auto& toy = *toy_;
    if (!toy.time.is_measurement(0)) return f(toy.initial);
    const Eigen::VectorXd py = observation_probabilities(toy, toy.initial);
    double acc = 0.0;
    for (int y = 0; y < toy.n_observations; ++y)
      if (py(y) > 0.0) acc += py(y) * f(exact_condition(toy, toy.initial, y));
    return acc;
  }

  // V'_t(z, u) given a successor evaluator.
  template <class Next>
  double continuation(const BeliefVector& z, int u, int t, Next&& next) const {
    const auto& toy = *toy_;
    const BeliefVector prior = toy.transition[static_cast<std::size_t>(u)].transpose() * z;
    if (!toy.time.is_measurement(t + 1)) return next(prior);
    const Eigen::VectorXd py = observation_probabilities(toy, prior);
    double acc = 0.0;
    for (int y = 0; y < toy.n_observations; ++y)
      if (py(y) > 0.0) acc += py(y) * next(exact_condition(toy, prior, y));
    return acc;
  }

  std::pair<double, int> evaluate(int t, const BeliefVector& z) const {
    const auto& toy = *toy_;
    if (t == toy.time.N) return {expected_terminal_cost(toy, z), toy.default_action()};
    std::vector<double> key(z.data(), z.data() + z.size());
    auto& memo = memo_[static_cast<std::size_t>(t)];
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    auto next = [&](const BeliefVector& zn) { return evaluate(t + 1, zn).first; };
    std::pair<double, int> best{std::numeric_limits<double>::infinity(), toy.default_action()};
    if (toy.time.is_decision(t)) {
      for (int u = 0; u < toy.n_actions; ++u) {
        const double v = expected_stage_cost(toy, z, u, t) + continuation(z, u, t, next);
        if (v < best.first) best = {v, u};
      }
    } else {
      const int u = toy.default_action();
      best = {expected_stage_cost(toy, z, u, t) + continuation(z, u, t, next), u};
    }
    memo.emplace(std::move(key), best);
    return best;
  }

  void solve_grid() {
    const auto& toy = *toy_;
    const int N = toy.time.N;
    values_.assign(static_cast<std::size_t>(N + 1), std::vector<double>(grid_.size()));
    actions_.assign(static_cast<std::size_t>(N + 1),
                    std::vector<int>(grid_.size(), toy.default_action()));
    for (std::size_t i = 0; i < grid_.size(); ++i)
      values_[N][i] = expected_terminal_cost(toy, grid_.belief(i));
    for (int t = N - 1; t >= 0; --t) {
      auto next = [&](const BeliefVector& zn) { return grid_.interpolate(values_[t + 1], zn); };
      for (std::size_t i = 0; i < grid_.size(); ++i) {
        const BeliefVector z = grid_.belief(i);
        double best = std::numeric_limits<double>::infinity();
        int best_u = toy.default_action();
        if (toy.time.is_decision(t)) {
          for (int u = 0; u < toy.n_actions; ++u) {
            const double v = expected_stage_cost(toy, z, u, t) + continuation(z, u, t, next);
            if (v < best) {
              best = v;
              best_u = u;
            }
          }
        } else {
          best = expected_stage_cost(toy, z, best_u, t) + continuation(z, best_u, t, next);
        }
        values_[t][i] = best;
        actions_[t][i] = best_u;
      }
    }
  }

  const FiniteToyPOMDP* toy_;
  SimplexGrid grid_;
  std::vector<std::vector<double>> values_;
  std::vector<std::vector<int>> actions_;
  mutable std::vector<std::map<std::vector<double>, std::pair<double, int>>> memo_;
};

inline FiniteDpSolution dp_solve_finite(const FiniteToyPOMDP& toy, int points_per_edge) {
  return FiniteDpSolution(toy, points_per_edge);
}

// ---------------------------------------------------------------------------
// Brute force over deterministic history-dependent policies.

// Decision points: one per (t in T_u, observation history up to t).
struct HistoryPolicySpace {
  std::vector<std::size_t> offset;   // per t; meaningful on T_u
  std::vector<std::size_t> histories;  // observation histories at t
  std::size_t points = 0;

  explicit HistoryPolicySpace(const FiniteToyPOMDP& toy) {
    const int N = toy.time.N;
    offset.assign(static_cast<std::size_t>(N), 0);
    histories.assign(static_cast<std::size_t>(N), 1);
    std::size_t seen = 1;
    for (int t = 0; t < N; ++t) {
      if (toy.time.is_measurement(t)) seen *= static_cast<std::size_t>(toy.n_observations);
      histories[t] = seen;
      if (toy.time.is_decision(t)) {
        offset[t] = points;
        points += seen;
      }
    }
  }
};

// Expected total cost of a history-dependent policy by enumerating every
// (state path, observation record) pair.
inline double evaluate_history_policy(const FiniteToyPOMDP& toy, const HistoryPolicySpace& space,
                                      const std::vector<int>& table) {
  const int N = toy.time.N;
  double total = 0.0;
  std::function<void(int, int, std::size_t, double, double)> walk =
      [&](int t, int s, std::size_t hist, double prob, double cost) {
        if (prob == 0.0) return;
        if (toy.time.is_measurement(t)) {
          for (int y = 0; y < toy.n_observations; ++y) {
            const double py = toy.observation(s, y);
            if (py == 0.0) continue;
            const std::size_t h = hist * static_cast<std::size_t>(toy.n_observations) +
                                  static_cast<std::size_t>(y);
            if (t == N) {
              total += prob * py * (cost + toy.terminal_cost(s));
              continue;
            }
            const int a = toy.time.is_decision(t) ? table[space.offset[t] + h]
                                                  : toy.default_action();
            for (int s2 = 0; s2 < toy.n_states; ++s2)
              walk(t + 1, s2, h, prob * py * toy.transition[a](s, s2),
                   cost + toy.stage_cost[t](s, a));
          }
          return;
        }
        if (t == N) {
          total += prob * (cost + toy.terminal_cost(s));
          return;
        }
        const int a = toy.time.is_decision(t) ? table[space.offset[t] + hist]
                                              : toy.default_action();
        for (int s2 = 0; s2 < toy.n_states; ++s2)
          walk(t + 1, s2, hist, prob * toy.transition[a](s, s2), cost + toy.stage_cost[t](s, a));
      };
  for (int s = 0; s < toy.n_states; ++s) walk(0, s, 0, toy.initial(s), 0.0);
  return total;
}

struct EnumerationResult {
  double value = 0.0;
  std::vector<int> table;  // minimizing decision table
  std::size_t policies = 0;
};

inline EnumerationResult brute_force_policy_enum(const FiniteToyPOMDP& toy,
                                                 double max_policies = 1e6) {
  toy.validate();
  const HistoryPolicySpace space(toy);
  const double count = std::pow(static_cast<double>(toy.n_actions),
                                static_cast<double>(space.points));
  if (count > max_policies) throw TooLarge("brute_force_policy_enum: policy space too large");
  EnumerationResult best;
  best.value = std::numeric_limits<double>::infinity();
  std::vector<int> table(space.points, 0);
  for (std::size_t k = 0; k < static_cast<std::size_t>(count); ++k) {
    const double v = evaluate_history_policy(toy, space, table);
    if (v < best.value) {
      best.value = v;
      best.table = table;
    }
    ++best.policies;
    for (std::size_t d = 0; d < table.size(); ++d) {
      if (++table[d] < toy.n_actions) break;
      table[d] = 0;
    }
  }
  return best;
}

// Monte-Carlo value of a belief-feedback policy on a toy: the true state is
// sampled, measurements are drawn from it, beliefs follow the exact filter,
// and the cost accumulated is the belief-space cost c~_t(z_t, u_t).
inline ValueEstimate rollout_value_finite(const FiniteToyPOMDP& toy,
                                          const std::function<int(int, const BeliefVector&)>& policy,
                                          std::size_t n_scenarios, std::uint64_t seed) {
  if (n_scenarios == 0) throw InvalidArgument("rollout_value: n_scenarios must be >= 1");
  const ToyKernel kernel{&toy};
  std::vector<double> costs(n_scenarios);
  for (std::size_t k = 0; k < n_scenarios; ++k) {
    CounterRng rng(seed, Stream::kScenario, k);
    int s = sample_index(toy.initial, rng);
    BeliefVector z = toy.initial;
    if (toy.time.is_measurement(0)) z = exact_condition(toy, z, kernel.sample_observation(s, rng));
    double cost = 0.0;
    for (int t = 0; t < toy.time.N; ++t) {
      const int u = toy.time.is_decision(t) ? policy(t, z) : toy.default_action();
      cost += expected_stage_cost(toy, z, u, t);
      s = kernel.sample_transition(s, u, t, rng);
      std::optional<int> y;
      if (toy.time.is_measurement(t + 1)) y = kernel.sample_observation(s, rng);
      z = exact_filter_step(toy, z, u, y, t);
    }
    costs[k] = cost + expected_terminal_cost(toy, z);
  }
  return summarize(costs);
}

}  // namespace dosewise

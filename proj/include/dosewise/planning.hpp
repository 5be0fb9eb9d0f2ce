#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "dosewise/augmented_kernel.hpp"
#include "dosewise/parallel.hpp"
#include "dosewise/policy_dp.hpp"
#include "dosewise/regimen.hpp"

namespace dosewise {

// Per-scenario totals from time t0 to the end of the horizon.
struct ScenarioOutcome {
  double performance = 0.0;  // sum of c_hat plus the terminal band term
  double information = 0.0;  // sum of c_bar over measurement times (<= 0)
  double cost = 0.0;         // performance + lambda * information
  double violation_hours = 0.0;
};

inline int sample_weighted(const std::vector<double>& weights, CounterRng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return static_cast<int>(i);
  return 0;
}

// One scenario: chi_t0 drawn from the belief, then the augmented system is
// driven by fresh noise under the open-loop regimen. The measurement that
// produced the belief (if any) drives the first estimator update.
template <Model M>
ScenarioOutcome rollout_scenario(const AugmentedSystem<M>& sys, const AugmentedBelief<M>& belief,
                                 const DoseRegimen& regimen, CounterRng& rng) {
  const AugmentedKernel<M> kernel{&sys};
  const int t0 = belief.t;
  AugmentedState<M> chi = belief.particles[static_cast<std::size_t>(sample_weighted(belief.weights, rng))];
  ScenarioOutcome out;
  const double hours = 24.0 * sys.time.delta;
  for (int t = t0; t < sys.time.N; ++t) {
    const double u = regimen.dose_at(sys.time, t);
    out.performance += performance_cost(sys.model, sys.time, chi.x, u, chi.theta_hat, sys.cost);
    if (sys.time.is_measurement(t))
      out.information += info_cost(sys.model, sys.time, chi, t, sys.cost);
    const double anc = sys.model.output(chi.x, chi.theta_hat)(sys.cost.monitored_output);
    if (anc < sys.cost.band_lo || anc > sys.cost.band_hi) out.violation_hours += hours;
    chi = propagate_particle(kernel, chi, u, t,
                             t == t0 ? belief.observation : std::optional<typename M::Output>{},
                             rng);
  }
  out.performance += band_penalty(sys.model, chi.x, chi.theta_hat, sys.cost) / (sys.time.N + 1);
  if (sys.time.is_measurement(sys.time.N))
    out.information += info_cost(sys.model, sys.time, chi, sys.time.N, sys.cost);
  out.cost = out.performance + sys.cost.lambda * out.information;
  return out;
}

struct RolloutSummary {
  ValueEstimate cost;
  double mean_performance = 0.0;
  double mean_information = 0.0;
  double mean_trace = 0.0;  // mean summed capped trace of the FIM terms
  double mean_violation_hours = 0.0;
};

inline RolloutSummary summarize_outcomes(const std::vector<ScenarioOutcome>& outcomes) {
  RolloutSummary s;
  std::vector<double> costs;
  costs.reserve(outcomes.size());
  for (const auto& o : outcomes) {
    costs.push_back(o.cost);
    s.mean_performance += o.performance;
    s.mean_information += o.information;
    s.mean_violation_hours += o.violation_hours;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, outcomes.size()));
  s.mean_performance /= n;
  s.mean_information /= n;
  s.mean_violation_hours /= n;
  s.mean_trace = -s.mean_information;
  s.cost = summarize(costs);
  return s;
}

// Monte-Carlo value of an open-loop regimen from belief z_t. Scenario k
// always uses substream k of `seed`, so two regimens evaluated with the same
// seed share their random numbers. Valid as an estimate of the belief-space
// cost because, for a fixed regimen, the expected sum of c~_t over filtered
// beliefs equals the expected sum of c_t over chi.
template <Model M>
RolloutSummary rollout_value(const AugmentedSystem<M>& sys, const AugmentedBelief<M>& belief,
                             const DoseRegimen& regimen, std::size_t n_scenarios,
                             std::uint64_t seed, unsigned threads = 1) {
  if (n_scenarios == 0) throw InvalidArgument("rollout_value: n_scenarios must be >= 1");
  belief.check();
  regimen.validate(sys.time);
  std::vector<ScenarioOutcome> outcomes(n_scenarios);
  parallel_for(n_scenarios, threads, [&](std::size_t k) {
    CounterRng rng(seed, Stream::kScenario, k);
    outcomes[k] = rollout_scenario(sys, belief, regimen, rng);
  });
  return summarize_outcomes(outcomes);
}

// ---------------------------------------------------------------------------
// Candidate regimens.

struct CandidateGrid {
  std::vector<double> levels;                 // multiples of the nominal dose
  std::vector<std::pair<int, int>> blocks;    // inclusive day ranges sharing one level
  bool free_days = false;                     // every day gets its own level
  double max_candidates = 1e5;
};

// Enumerates regimens; days before `from_day` keep the committed regimen.
// Candidates are ordered lexicographically by level index, earliest block
// most significant.
inline std::vector<DoseRegimen> make_candidates(const TimeStructure& time, double nominal,
                                                const CandidateGrid& grid,
                                                const DoseRegimen* committed = nullptr,
                                                int from_day = 0) {
  if (grid.levels.empty()) throw InvalidArgument("optimize_regimen: empty dose grid");
  const int days = DoseRegimen::decision_days(time);
  std::vector<std::pair<int, int>> blocks;
  if (grid.free_days) {
    for (int d = 0; d < days; ++d) blocks.emplace_back(d, d);
  } else {
    blocks = grid.blocks;
    std::vector<int> cover(static_cast<std::size_t>(days), 0);
    for (const auto& [a, b] : blocks) {
      if (a < 0 || b < a || b >= days)
        throw InvalidArgument("optimize_regimen: block outside the decision days");
      for (int d = a; d <= b; ++d) ++cover[static_cast<std::size_t>(d)];
    }
    for (int c : cover)
      if (c != 1) throw InvalidArgument("optimize_regimen: blocks must partition the decision days");
  }
  if (from_day > 0 && (!committed || static_cast<int>(committed->daily.size()) < days))
    throw InvalidArgument("optimize_regimen: committed regimen required for a later start day");

  // A block straddling the re-planning day is cut there.
  std::vector<std::pair<int, int>> open;
  for (const auto& [a, b] : blocks)
    if (b >= from_day) open.emplace_back(std::max(a, from_day), b);

  const double count = std::pow(static_cast<double>(grid.levels.size()),
                                static_cast<double>(open.size()));
  if (count > grid.max_candidates) throw TooLarge("optimize_regimen: too many candidates");

  DoseRegimen base = committed ? *committed : DoseRegimen::constant(time, 0.0);
  base.daily.resize(static_cast<std::size_t>(days), 0.0);
  std::vector<DoseRegimen> out;
  std::vector<std::size_t> digit(open.size(), 0);
  for (std::size_t k = 0; k < static_cast<std::size_t>(count); ++k) {
    DoseRegimen r = base;
    for (std::size_t b = 0; b < open.size(); ++b)
      for (int d = open[b].first; d <= open[b].second; ++d)
        r.daily[static_cast<std::size_t>(d)] =
            std::min(time.u_max, grid.levels[digit[b]] * nominal);
    out.push_back(std::move(r));
    for (std::size_t b = open.size(); b-- > 0;) {
      if (++digit[b] < grid.levels.size()) break;
      digit[b] = 0;
    }
  }
  return out;
}

struct CandidateResult {
  DoseRegimen regimen;
  RolloutSummary summary;
  double objective = 0.0;  // mean performance + lambda * mean information
};

struct OptimizationResult {
  std::size_t winner = 0;
  std::vector<CandidateResult> table;
  std::uint64_t seed = 0;
  std::size_t scenarios = 0;
  double lambda = 0.0;

  const CandidateResult& best() const { return table[winner]; }
};

// Argmin of the objective; exact ties go to the lowest total dose, then to
// the lexicographically smallest daily vector.
inline std::size_t select_candidate(std::vector<CandidateResult>& table, double lambda) {
  if (table.empty()) throw InvalidArgument("optimize_regimen: no candidates");
  for (auto& c : table)
    c.objective = c.summary.mean_performance + lambda * c.summary.mean_information;
  std::size_t best = 0;
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& a = table[i];
    const auto& b = table[best];
    if (a.objective < b.objective) best = i;
    else if (a.objective == b.objective) {
      const double da = a.regimen.total(), db = b.regimen.total();
      if (da < db || (da == db && a.regimen.daily < b.regimen.daily)) best = i;
    }
  }
  return best;
}

// Exhaustive search over a finite candidate set with common random numbers.
template <Model M>
OptimizationResult optimize_regimen(const AugmentedSystem<M>& sys, const AugmentedBelief<M>& belief,
                                    const std::vector<DoseRegimen>& candidates,
                                    std::size_t n_scenarios, std::uint64_t seed,
                                    unsigned threads = 1) {
  if (candidates.empty()) throw InvalidArgument("optimize_regimen: empty dose grid");
  if (n_scenarios == 0) throw InvalidArgument("optimize_regimen: n_scenarios must be >= 1");
  belief.check();
  OptimizationResult res;
  res.seed = seed;
  res.scenarios = n_scenarios;
  res.lambda = sys.cost.lambda;
  res.table.resize(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    candidates[c].validate(sys.time);
    res.table[c].regimen = candidates[c];
  }
  // Flattened (candidate, scenario) work items keep every worker busy and
  // the reduction order fixed.
  std::vector<ScenarioOutcome> outcomes(candidates.size() * n_scenarios);
  parallel_for(outcomes.size(), threads, [&](std::size_t i) {
    const std::size_t c = i / n_scenarios, k = i % n_scenarios;
    CounterRng rng(seed, Stream::kScenario, k);
    outcomes[i] = rollout_scenario(sys, belief, candidates[c], rng);
  });
  for (std::size_t c = 0; c < candidates.size(); ++c)
    res.table[c].summary = summarize_outcomes(
        std::vector<ScenarioOutcome>(outcomes.begin() + static_cast<std::ptrdiff_t>(c * n_scenarios),
                                     outcomes.begin() + static_cast<std::ptrdiff_t>((c + 1) * n_scenarios)));
  res.winner = select_candidate(res.table, sys.cost.lambda);
  return res;
}

}  // namespace dosewise

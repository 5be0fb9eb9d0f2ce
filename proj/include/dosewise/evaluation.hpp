#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dosewise/config.hpp"
#include "dosewise/leukemia_problem.hpp"
#include "dosewise/planning.hpp"

namespace dosewise::leukemia {

// theta_hat_0 for a patient: nominal parameters, theta_p from the first
// measurement (ANC / WBC) when one exists at t = 0.
inline Params patient_theta0(const Params& theta, const std::optional<Output>& y0) {
  Params th = theta;
  if (y0 && (*y0)(0) > 0.0) th(kThetaP) = std::clamp((*y0)(1) / (*y0)(0), 1e-3, 1.0 - 1e-3);
  return th;
}

// Particle belief at t = 0 drawn from the prior p, conditioned on y0 when
// 0 is a measurement time.
inline Belief make_initial_belief(const Problem& prob, const Params& theta_hat0,
                                  const std::optional<Output>& y0, std::size_t particles,
                                  std::uint64_t seed, const FilterOptions& opt = {}) {
  Problem local = prob;
  local.theta0 = theta_hat0;
  CounterRng rng(seed, Stream::kPrior);
  return initial_belief(prob.kernel(), [&](CounterRng& r) { return local.sample_prior(r); },
                        particles, prob.sys.time.is_measurement(0) ? y0 : std::nullopt, rng, opt);
}

inline CandidateGrid candidate_grid(const OptimizerSettings& s) {
  return {s.levels, s.blocks, s.free_days, 1e5};
}

// Synthetic patient: every theta component scaled by U[1 - p, 1 + p].
inline Params sample_patient(const Params& theta, double perturbation, CounterRng& rng) {
  Params th = theta;
  for (int i = 0; i < 8; ++i) th(i) *= 1.0 + perturbation * (2.0 * rng.uniform() - 1.0);
  th(kThetaP) = std::min(th(kThetaP), 1.0 - 1e-6);
  return th;
}

struct PatientOutcome {
  std::size_t id = 0;
  Params theta_true;
  double violation_hours = 0.0;  // true ANC outside the band
  double total_cost = 0.0;       // controller-side cost C
  double total_dose = 0.0;       // mg over the horizon
  std::vector<double> daily;     // dose actually given per decision day
  std::size_t clamped = 0;
  std::size_t degenerate_updates = 0;
};

struct EvaluationReport {
  std::string policy;
  std::vector<PatientOutcome> patients;

  double mean_violation_hours() const {
    double s = 0.0;
    for (const auto& p : patients) s += p.violation_hours;
    return patients.empty() ? 0.0 : s / static_cast<double>(patients.size());
  }
  double mean_cost() const {
    double s = 0.0;
    for (const auto& p : patients) s += p.total_cost;
    return patients.empty() ? 0.0 : s / static_cast<double>(patients.size());
  }
};

enum class PolicyKind { kBaseline, kOptimized };

inline std::string policy_name(PolicyKind k) {
  return k == PolicyKind::kBaseline ? "baseline" : "optimized";
}

struct PatientSeeds {
  Params theta_true;
  std::uint64_t plant = 0;
  std::uint64_t plan = 0;
  std::uint64_t filter = 0;
};

inline PatientSeeds patient_seeds(const Params& theta, double perturbation, std::uint64_t seed,
                                  std::size_t id) {
  CounterRng rng(seed, Stream::kPatient, id);
  PatientSeeds s;
  s.theta_true = sample_patient(theta, perturbation, rng);
  s.plant = rng();
  s.plan = rng();
  s.filter = rng();
  return s;
}

// One closed-loop run. The baseline starts from the nominal daily dose and
// applies the +/-20% rule at every measurement that falls on a decision
// time. The optimized controller keeps a particle belief and re-solves the
// candidate search over the remaining days at each such measurement.
inline PatientOutcome run_patient(const Problem& prob, const Config& cfg, PolicyKind kind,
                                  std::uint64_t seed, std::size_t id) {
  const System& sys = prob.sys;
  const TimeStructure& time = sys.time;
  const PatientSeeds seeds = patient_seeds(prob.theta0, cfg.evaluation.perturbation, seed, id);
  const double nominal = sys.model.nominal_dose();
  const CandidateGrid grid = candidate_grid(cfg.optimizer);
  const Kernel kernel = prob.kernel();
  FilterOptions fopt;
  fopt.ess_fraction = cfg.filter.ess_fraction;

  PatientOutcome out;
  out.id = id;
  out.theta_true = seeds.theta_true;

  double dose = nominal;
  std::optional<Belief> belief;
  DoseRegimen committed = DoseRegimen::constant(time, nominal);
  double last_u = 0.0;
  CounterRng filter_rng(seeds.filter, Stream::kProcess);

  ClosedLoopPolicy<LeukemiaModel> policy =
      [&](int t, const Chi&, const std::optional<Output>& y) -> double {
    if (kind == PolicyKind::kBaseline) {
      if (y && time.is_decision(t))
        dose = baseline_reactive((*y)(1), dose, sys.cost.band_lo, sys.cost.band_hi, time.u_max);
      return time.is_decision(t) ? dose : time.u_default;
    }
    if (t == 0) {
      belief = make_initial_belief(prob, patient_theta0(prob.theta0, y), y,
                                   cfg.evaluation.particles, seeds.filter, fopt);
    } else {
      try {
        belief = advance(kernel, *belief, last_u, y, filter_rng, fopt);
      } catch (const DegenerateUpdate&) {
        // Keep the prediction; the measurement is not assimilated.
        ++out.degenerate_updates;
        Belief pred = detail::propagate_all(kernel, *belief, last_u, filter_rng, fopt);
        pred.observation = y;
        belief = std::move(pred);
      }
    }
    if (y && time.is_decision(t)) {
      const int day = DoseRegimen::day_of(time, t);
      const auto candidates = make_candidates(time, nominal, grid, &committed, day);
      const auto res = optimize_regimen(sys, *belief, candidates, cfg.evaluation.scenarios,
                                        seeds.plan ^ static_cast<std::uint64_t>(t), 1);
      committed = res.best().regimen;
    }
    last_u = committed.dose_at(time, t);
    return last_u;
  };

  const Params th0 = prob.theta0;
  // The controller's deterministic chi starts from theta_hat_0 built from y0,
  // which the harness only reveals inside the policy; start it from the
  // nominal guess and let the estimator correct theta_p at t = 0.
  const auto traj = simulate_closed_loop(sys, seeds.theta_true, prob.x0, Chi::initial(prob.x0, th0),
                                         policy, seeds.plant);
  out.clamped = traj.clamped_controls;
  out.total_cost = traj.total_cost();
  const double hours = 24.0 * time.delta;
  out.daily.assign(static_cast<std::size_t>(DoseRegimen::decision_days(time)), 0.0);
  for (const auto& r : traj.records) {
    if (r.t == time.N) break;
    const double anc = seeds.theta_true(kThetaP) * r.x_plant(7);
    if (anc < sys.cost.band_lo || anc > sys.cost.band_hi) out.violation_hours += hours;
    out.total_dose += r.u * time.delta;
    if (time.is_decision(r.t)) out.daily[static_cast<std::size_t>(DoseRegimen::day_of(time, r.t))] = r.u;
  }
  return out;
}

inline EvaluationReport evaluate_policy(const Problem& prob, const Config& cfg, PolicyKind kind,
                                        std::size_t patients, std::uint64_t seed,
                                        unsigned threads = 1) {
  EvaluationReport rep;
  rep.policy = policy_name(kind);
  rep.patients.resize(patients);
  parallel_for(patients, threads,
               [&](std::size_t i) { rep.patients[i] = run_patient(prob, cfg, kind, seed, i); });
  return rep;
}

}  // namespace dosewise::leukemia

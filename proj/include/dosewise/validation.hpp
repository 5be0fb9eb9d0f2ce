#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dosewise/config.hpp"
#include "dosewise/finite_pomdp.hpp"
#include "dosewise/leukemia_problem.hpp"
#include "dosewise/particle_filter.hpp"
#include "dosewise/policy_dp.hpp"

namespace dosewise::validation {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
  double seconds = 0.0;
};

template <class F>
CheckResult timed(const std::string& name, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r = body();
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

using namespace dosewise::leukemia;

// Max over columns of ||a_j - b_j||_inf / ||b_j||_inf; columns where both
// sides vanish exactly are skipped.
template <class A, class B>
double column_relative_error(const A& a, const B& b) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double diff = (a.col(j) - b.col(j)).cwiseAbs().maxCoeff();
    const double scale = b.col(j).cwiseAbs().maxCoeff();
    if (scale == 0.0) {
      if (diff != 0.0) worst = std::max(worst, std::numeric_limits<double>::infinity());
      continue;
    }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

// Random admissible point: WBC compartments within +/-50% of x0, drug
// compartments away from the projection floor, theta within +/-20%.
struct Point {
  State x;
  Params theta;
  double u;
};

inline Point random_point(const Problem& prob, CounterRng& rng) {
  Point p;
  p.x = prob.x0;
  for (int i = 0; i < 3; ++i) p.x(i) = 1.0 + 99.0 * rng.uniform();
  for (int i = 3; i < 8; ++i) p.x(i) = prob.x0(i) * (0.5 + rng.uniform());
  p.theta = prob.theta0;
  for (int i = 0; i < 8; ++i) p.theta(i) *= 0.8 + 0.4 * rng.uniform();
  p.theta(kThetaP) = std::min(p.theta(kThetaP), 0.99);
  p.u = prob.sys.model.u_max() * rng.uniform();
  return p;
}

// The four Jacobians against central differences at `points` random points.
inline CheckResult check_jacobians(const Problem& prob, std::size_t points, std::uint64_t seed,
                                   double tol = 1e-5) {
  const LeukemiaModel& m = prob.sys.model;
  CounterRng rng(seed, Stream::kToy, 11);
  double worst = 0.0;
  const State d = State::Zero();
  for (std::size_t k = 0; k < points; ++k) {
    const Point p = random_point(prob, rng);
    Types::StateJacobian fx;
    Types::ParamJacobian fth;
    m.step_jacobians(p.x, p.u, d, p.theta, fx, fth);
    Types::StateJacobian fx_fd;
    Types::OutputStateJacobian hx_fd;
    for (int i = 0; i < 8; ++i) {
      const double h = 1e-6 * std::max(std::abs(p.x(i)), 1.0);
      State xp = p.x, xm = p.x;
      xp(i) += h;
      xm(i) -= h;
      fx_fd.col(i) = (m.step(xp, p.u, d, p.theta) - m.step(xm, p.u, d, p.theta)) / (2 * h);
      hx_fd.col(i) = (m.output(xp, p.theta) - m.output(xm, p.theta)) / (2 * h);
    }
    Types::ParamJacobian fth_fd;
    Types::OutputParamJacobian hth_fd;
    for (int j = 0; j < 8; ++j) {
      const double h = 1e-6 * std::abs(p.theta(j));
      Params tp = p.theta, tm = p.theta;
      tp(j) += h;
      tm(j) -= h;
      fth_fd.col(j) = (m.step(p.x, p.u, d, tp) - m.step(p.x, p.u, d, tm)) / (2 * h);
      hth_fd.col(j) = (m.output(p.x, tp) - m.output(p.x, tm)) / (2 * h);
    }
    worst = std::max({worst, column_relative_error(fx, fx_fd), column_relative_error(fth, fth_fd),
                      column_relative_error(m.output_dx(p.x, p.theta), hx_fd),
                      column_relative_error(m.output_dtheta(p.x, p.theta), hth_fd)});
  }
  std::ostringstream msg;
  msg << points << " points, max column-relative error " << worst;
  return {"", worst < tol, worst, tol, msg.str()};
}

// Sensitivity recursion along a frozen-noise trajectory against central
// differences of the trajectory map in each parameter.
inline CheckResult check_sensitivity(const Problem& prob, int steps, std::uint64_t seed,
                                     double tol = 1e-4) {
  const LeukemiaModel& m = prob.sys.model;
  const TimeStructure& time = prob.sys.time;
  steps = std::min(steps, time.N);
  CounterRng rng(seed, Stream::kProcess, 17);
  std::vector<State> ds;
  for (int t = 0; t < steps; ++t) ds.push_back(prob.sys.noise.sample_process(rng));
  const DoseRegimen regimen = DoseRegimen::constant(time, m.nominal_dose());

  auto rollout = [&](const Params& th, std::vector<State>& xs, std::vector<Types::Sensitivity>* xis) {
    xs.assign(1, prob.x0);
    Types::Sensitivity xi = Types::Sensitivity::Zero();
    if (xis) xis->assign(1, xi);
    for (int t = 0; t < steps; ++t) {
      const double u = regimen.dose_at(time, t);
      if (xis) xi = propagate_sensitivity(m, xi, xs.back(), u, ds[t], th);
      xs.push_back(m.step(xs.back(), u, ds[t], th));
      if (xis) xis->push_back(xi);
    }
  };
  std::vector<State> xs;
  std::vector<Types::Sensitivity> xis;
  rollout(prob.theta0, xs, &xis);
  // Richardson-extrapolated central differences: x4..x8 are ~1e11 while
  // some sensitivities are ~1e2, so plain differences drown in roundoff
  // before truncation error becomes small.
  const double rel = 1e-3;
  std::vector<std::array<std::vector<State>, 4>> runs(8);
  for (int j = 0; j < 8; ++j) {
    const double h = rel * prob.theta0(j);
    const double offsets[4] = {h, -h, 0.5 * h, -0.5 * h};
    for (int k = 0; k < 4; ++k) {
      Params tp = prob.theta0;
      tp(j) += offsets[k];
      rollout(tp, runs[j][k], nullptr);
    }
  }
  double worst = 0.0;
  int worst_t = 0;
  for (int t = 1; t <= steps; ++t) {
    Types::Sensitivity fd;
    for (int j = 0; j < 8; ++j) {
      const double h = rel * prob.theta0(j);
      const State wide = (runs[j][0][t] - runs[j][1][t]) / (2 * h);
      const State narrow = (runs[j][2][t] - runs[j][3][t]) / h;
      fd.col(j) = (4.0 * narrow - wide) / 3.0;
    }
    const double e = column_relative_error(xis[t], fd);
    if (e > worst) {
      worst = e;
      worst_t = t;
    }
  }
  std::ostringstream msg;
  msg << steps << " steps, max column-relative error " << worst << " at t=" << worst_t;
  return {"", worst < tol, worst, tol, msg.str()};
}

inline CheckResult check_equilibrium(const Problem& prob, double tol = 1e-8) {
  const double r = prob.sys.model.drift(prob.x0, 0.0, prob.theta0).norm() / prob.x0.norm();
  std::ostringstream msg;
  msg << "||f_bar(x0, 0)|| / ||x0|| = " << r;
  return {"", r <= tol, r, tol, msg.str()};
}

// trace F_t = x8^2 with xi = 0, and PSD on random augmented states.
inline CheckResult check_fim(const Problem& prob, std::size_t states, std::uint64_t seed) {
  const auto& sys = prob.sys;
  const int t = sys.time.measurement_times.front();
  CounterRng rng(seed, Stream::kToy, 23);
  bool trace_exact = true;
  double worst_neg = 0.0;
  for (std::size_t k = 0; k < states; ++k) {
    const Point p = random_point(prob, rng);
    Chi chi = Chi::initial(p.x, p.theta);
    const double tr = fim_term(sys.model, sys.time, chi, t).trace();
    if (tr != p.x(7) * p.x(7)) trace_exact = false;
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) chi.xi(i, j) = (2.0 * rng.uniform() - 1.0) * p.x(i) / p.theta(j);
    const Types::Fim F = fim_term(sys.model, sys.time, chi, t);
    Eigen::SelfAdjointEigenSolver<Types::Fim> eig(F);
    const double rel = eig.eigenvalues().minCoeff() / std::max(1e-300, F.norm());
    worst_neg = std::min(worst_neg, rel);
  }
  const bool ok = trace_exact && worst_neg >= -1e-12;
  std::ostringstream msg;
  msg << "trace==x8^2 on all states: " << (trace_exact ? "yes" : "no")
      << ", min eigenvalue / ||F|| = " << worst_neg << " over " << states << " states";
  return {"", ok, worst_neg, -1e-12, msg.str()};
}

// Gradient vs FD, identity off the calendar, descent on noise-free data.
inline CheckResult check_estimator(const Problem& prob, std::size_t instances, std::uint64_t seed) {
  const auto& sys = prob.sys;
  const LeukemiaModel& m = sys.model;
  const int t = sys.time.measurement_times.front();
  int off = -1;
  for (int s = 0; s < sys.time.N; ++s)
    if (!sys.time.is_measurement(s)) {
      off = s;
      break;
    }
  CounterRng rng(seed, Stream::kToy, 29);
  double worst_grad = 0.0;
  bool identity_ok = true;
  std::size_t descents = 0;
  for (std::size_t k = 0; k < instances; ++k) {
    const Point p = random_point(prob, rng);
    Params truth = p.theta;
    for (int i = 0; i < 8; ++i) truth(i) *= 0.8 + 0.4 * rng.uniform();
    truth(kThetaP) = std::min(truth(kThetaP), 0.99);
    const Output y = m.output(p.x, truth);

    const Params g = residual_gradient(m, sys.time, y, p.x, p.theta, t);
    Params fd;
    for (int j = 0; j < 8; ++j) {
      const double h = 1e-6 * p.theta(j);
      Params tp = p.theta, tm = p.theta;
      tp(j) += h;
      tm(j) -= h;
      fd(j) = (squared_residual(m, y, p.x, tp) - squared_residual(m, y, p.x, tm)) / (2 * h);
    }
    const double scale = std::max(g.cwiseAbs().maxCoeff(), 1e-300);
    worst_grad = std::max(worst_grad, (g - fd).cwiseAbs().maxCoeff() / scale);

    if (off >= 0 && estimator_update(m, sys.time, y, p.x, p.theta, off, sys.estimator) != p.theta)
      identity_ok = false;

    // Some step on the grid 1e-8..1 strictly decreases the residual, and the
    // safeguarded update never increases it.
    const double before = squared_residual(m, y, p.x, p.theta);
    EstimatorConfig cfg = sys.estimator;
    cfg.backtracking = false;
    bool strict = false;
    for (int e = -8; e <= 0 && !strict; ++e) {
      cfg.alpha = std::pow(10.0, e);
      strict = squared_residual(m, y, p.x, estimator_update(m, sys.time, y, p.x, p.theta, t, cfg)) <
               before;
    }
    cfg.backtracking = true;
    cfg.alpha = 1e-3 + rng.uniform();
    const Params next = estimator_update(m, sys.time, y, p.x, p.theta, t, cfg);
    if (strict && squared_residual(m, y, p.x, next) <= before) ++descents;
  }
  const bool ok = worst_grad < 1e-6 && identity_ok && descents == instances;
  std::ostringstream msg;
  msg << "gradient rel error " << worst_grad << ", off-calendar identity "
      << (identity_ok ? "yes" : "no") << ", descent " << descents << "/" << instances;
  return {"", ok, worst_grad, 1e-6, msg.str()};
}

// ---------------------------------------------------------------------------
// Finite toys.

inline double total_variation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return 0.5 * (a - b).cwiseAbs().sum();
}

inline Eigen::VectorXd particle_histogram(const ParticleBelief<int, int>& z, int states) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(states);
  for (std::size_t i = 0; i < z.size(); ++i) h(z.particles[i]) += z.weights[i];
  return h;
}

// Randomized toy suite with mixed calendars: some steps predict only, some
// update, sometimes 0 is a measurement time and the decision calendar has
// gaps.
inline ToyShape random_shape(CounterRng& rng, int max_states, int max_horizon) {
  ToyShape s;
  s.n_states = 2 + static_cast<int>(rng.uniform() * (max_states - 1));
  s.n_actions = 2;
  s.n_observations = 2 + static_cast<int>(rng.uniform() * 2);
  s.horizon = 1 + static_cast<int>(rng.uniform() * max_horizon);
  for (int t = 0; t <= s.horizon; ++t)
    if (rng.uniform() < 0.5) s.measurement_times.push_back(t);
  if (s.measurement_times.empty()) s.measurement_times.push_back(s.horizon);
  for (int t = 0; t < s.horizon; ++t)
    if (rng.uniform() < 0.7) s.decision_times.push_back(t);
  if (s.decision_times.empty()) s.decision_times.push_back(0);
  s.default_action = static_cast<int>(rng.uniform() * s.n_actions);
  return s;
}

struct FilterSuite {
  std::size_t toys = 0;
  std::size_t predict_steps = 0;
  std::size_t update_steps = 0;
  std::size_t initial_updates = 0;
  double worst_tv = 0.0;
};

inline FilterSuite run_filter_suite(std::size_t toys, std::size_t particles, std::uint64_t seed,
                                    unsigned threads = 1) {
  FilterSuite out;
  for (std::size_t k = 0; k < toys; ++k) {
    CounterRng rng(seed, Stream::kToy, 1000 + k);
    ToyShape shape = random_shape(rng, 3, 5);
    // Force both branches to appear in every suite.
    if (k == 0) shape.measurement_times = {0, std::min(2, shape.horizon)};
    if (k == 1) shape.measurement_times = {shape.horizon};
    const FiniteToyPOMDP toy = random_toy(shape, rng);
    const ToyKernel kernel{&toy};
    FilterOptions opt;
    opt.threads = threads;

    int s = sample_index(toy.initial, rng);
    std::optional<int> y0;
    if (toy.time.is_measurement(0)) {
      y0 = kernel.sample_observation(s, rng);
      ++out.initial_updates;
    }
    auto z = initial_belief(kernel, [&](CounterRng& r) { return sample_index(toy.initial, r); },
                            particles, y0, rng, opt);
    BeliefVector exact = toy.initial;
    if (y0) exact = exact_condition(toy, exact, *y0);
    out.worst_tv = std::max(out.worst_tv, total_variation(particle_histogram(z, toy.n_states), exact));
    for (int t = 0; t < toy.time.N; ++t) {
      const int u = toy.time.is_decision(t) ? static_cast<int>(rng.uniform() * toy.n_actions)
                                            : toy.default_action();
      s = kernel.sample_transition(s, u, t, rng);
      std::optional<int> y;
      if (toy.time.is_measurement(t + 1)) {
        y = kernel.sample_observation(s, rng);
        ++out.update_steps;
      } else {
        ++out.predict_steps;
      }
      z = advance(kernel, z, u, y, rng, opt);
      exact = exact_filter_step(toy, exact, u, y, t);
      out.worst_tv =
          std::max(out.worst_tv, total_variation(particle_histogram(z, toy.n_states), exact));
    }
    ++out.toys;
  }
  return out;
}

inline CheckResult check_filter(std::size_t toys, std::size_t particles, std::uint64_t seed,
                                unsigned threads = 1, double tol = 0.02) {
  const FilterSuite s = run_filter_suite(toys, particles, seed, threads);
  std::ostringstream msg;
  msg << s.toys << " toys, " << particles << " particles, " << s.predict_steps
      << " prediction steps, " << s.update_steps << " update steps, " << s.initial_updates
      << " initial conditionings, max TV " << s.worst_tv;
  const bool ok = s.worst_tv < tol && s.predict_steps > 0 && s.update_steps > 0;
  return {"", ok, s.worst_tv, tol, msg.str()};
}

struct DpRow {
  int states = 0, horizon = 0;
  std::vector<int> measurement_times, decision_times;
  double exact = 0.0, grid = 0.0, enumeration = 0.0, bound = 0.0;
  std::size_t policies = 0;
};

// Toys with horizon <= 3 and 2-3 states, including a stage without a
// measurement and steps outside the decision calendar.
inline std::vector<ToyShape> dp_shapes() {
  std::vector<ToyShape> shapes;
  auto add = [&](int states, int horizon, std::vector<int> ty, std::vector<int> tu, int obs = 2) {
    ToyShape s;
    s.n_states = states;
    s.n_actions = 2;
    s.n_observations = obs;
    s.horizon = horizon;
    s.measurement_times = std::move(ty);
    s.decision_times = std::move(tu);
    shapes.push_back(s);
  };
  add(2, 3, {1, 3}, {0, 1, 2});
  add(2, 3, {0, 2}, {0, 2});
  add(3, 3, {1, 3}, {0, 1, 2});
  add(3, 2, {0, 1, 2}, {0, 1});
  add(3, 3, {2}, {1, 2});
  add(2, 1, {0}, {0});
  add(2, 3, {0, 1, 2, 3}, {0, 1, 2});
  add(3, 3, {0, 3}, {0, 1, 2}, 3);
  return shapes;
}

inline std::vector<DpRow> run_dp_suite(int grid_points, std::uint64_t seed) {
  std::vector<DpRow> rows;
  const auto shapes = dp_shapes();
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    CounterRng rng(seed, Stream::kToy, 2000 + k);
    const FiniteToyPOMDP toy = random_toy(shapes[k], rng);
    const auto sol = dp_solve_finite(toy, grid_points);
    const auto en = brute_force_policy_enum(toy);
    DpRow r;
    r.states = toy.n_states;
    r.horizon = toy.time.N;
    r.measurement_times = toy.time.measurement_times;
    r.decision_times = toy.time.decision_times;
    r.exact = sol.optimal_value();
    r.grid = sol.optimal_value_grid();
    r.enumeration = en.value;
    r.bound = sol.interpolation_bound();
    r.policies = en.policies;
    rows.push_back(r);
  }
  return rows;
}

inline CheckResult check_dp(int grid_points, std::uint64_t seed, double tol = 1e-6) {
  const auto rows = run_dp_suite(grid_points, seed);
  double worst_exact = 0.0;
  bool grid_ok = true;
  double worst_grid = 0.0;
  for (const auto& r : rows) {
    worst_exact = std::max(worst_exact, std::abs(r.exact - r.enumeration));
    worst_grid = std::max(worst_grid, std::abs(r.grid - r.enumeration));
    if (std::abs(r.grid - r.enumeration) > r.bound) grid_ok = false;
  }
  std::ostringstream msg;
  msg << rows.size() << " toys at grid " << grid_points << ": max |J0 - enum| = " << worst_exact
      << ", max |J0(grid interp) - enum| = " << worst_grid
      << (grid_ok ? " (within interpolation bound)" : " (EXCEEDS interpolation bound)");
  return {"", worst_exact <= tol && grid_ok, worst_exact, tol, msg.str()};
}

// The oracle suite behind `dosewise validate`.
inline std::vector<CheckResult> run_suite(const Problem& prob, std::uint64_t seed,
                                          std::size_t particles = 100000, unsigned threads = 1) {
  std::vector<CheckResult> out;
  out.push_back(timed("jacobians", [&] { return check_jacobians(prob, 100, seed); }));
  out.push_back(timed("sensitivity", [&] { return check_sensitivity(prob, prob.sys.time.N, seed); }));
  out.push_back(timed("equilibrium", [&] { return check_equilibrium(prob); }));
  out.push_back(timed("fim", [&] { return check_fim(prob, 1000, seed); }));
  out.push_back(timed("estimator", [&] { return check_estimator(prob, 100, seed); }));
  out.push_back(timed("filter", [&] { return check_filter(20, particles, seed, threads); }));
  out.push_back(timed("dp", [&] { return check_dp(201, seed); }));
  return out;
}

}  // namespace dosewise::validation

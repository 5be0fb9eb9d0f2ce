#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dosewise/errors.hpp"
#include "dosewise/model.hpp"
#include "dosewise/time_structure.hpp"

namespace dosewise {

// chi = (x, xi, theta_hat): model state, state sensitivity dx/dtheta, and
// the running parameter estimate.
template <Model M>
struct AugmentedState {
  typename M::State x;
  typename M::Sensitivity xi;
  typename M::Params theta_hat;

  static AugmentedState initial(const typename M::State& x0,
                                const typename M::Params& theta0) {
    return {x0, M::Sensitivity::Zero(), theta0};
  }

  bool all_finite() const { return x.allFinite() && xi.allFinite() && theta_hat.allFinite(); }
};

// Weights of the combined cost. `monitored_output` selects the output whose
// deviation from [band_lo, band_hi] is penalized (neutrophils for leukemia).
struct CostSpec {
  double lambda = 0.0;      // information cost weight
  double trace_cap = 1.0;   // b
  double lambda_hat = 0.0;  // dose reward weight
  double band_lo = 1e9;
  double band_hi = 2e9;
  int monitored_output = 1;

  void validate() const {
    if (!(band_lo < band_hi)) throw InvalidArgument("cost: band_lo must be < band_hi");
    if (!(trace_cap > 0.0)) throw InvalidArgument("cost: trace cap b must be > 0");
    if (!(lambda >= 0.0) || !(lambda_hat >= 0.0) || !std::isfinite(lambda) ||
        !std::isfinite(lambda_hat))
      throw InvalidArgument("cost: weights must be finite and non-negative");
  }
};

// xi' = df/dx * xi + df/dtheta, evaluated at the estimate.
template <Model M>
typename M::Sensitivity propagate_sensitivity(const M& model, const typename M::Sensitivity& xi,
                                              const typename M::State& x, double u,
                                              const typename M::State& d,
                                              const typename M::Params& theta_hat) {
  typename M::StateJacobian fx;
  typename M::ParamJacobian ftheta;
  model.step_jacobians(x, u, d, theta_hat, fx, ftheta);
  return fx * xi + ftheta;
}

// dh/dtheta (total derivative) = dh/dx * xi + dh/dtheta. Defined on T_y only.
template <Model M>
typename M::OutputSensitivity output_sensitivity(const M& model, const TimeStructure& time,
                                                 const AugmentedState<M>& chi, int t) {
  time.require_measurement(t, "output_sensitivity");
  return model.output_dx(chi.x, chi.theta_hat) * chi.xi +
         model.output_dtheta(chi.x, chi.theta_hat);
}

// Fisher information term: Gram matrix of the output sensitivity.
template <Model M>
typename M::Fim fim_term(const M& model, const TimeStructure& time, const AugmentedState<M>& chi,
                         int t) {
  const auto S = output_sensitivity(model, time, chi, t);
  typename M::Fim F = S.transpose() * S;
  return 0.5 * (F + F.transpose());
}

// Sum of FIM terms over the measurement calendar; traj[k] is chi at
// time.measurement_times[k].
template <Model M>
typename M::Fim total_fim(const M& model, const TimeStructure& time,
                          std::span<const AugmentedState<M>> traj) {
  if (traj.size() != time.measurement_times.size())
    throw InvalidArgument("total_fim: need exactly one augmented state per measurement time");
  typename M::Fim F = M::Fim::Zero();
  for (std::size_t k = 0; k < traj.size(); ++k)
    F += fim_term(model, time, traj[k], time.measurement_times[k]);
  return F;
}

// Trace of the FIM term without forming the Gram matrix.
template <Model M>
double fim_trace(const M& model, const TimeStructure& time, const AugmentedState<M>& chi, int t) {
  return output_sensitivity(model, time, chi, t).squaredNorm();
}

// -min(trace F_t, b).
template <Model M>
double info_cost(const M& model, const TimeStructure& time, const AugmentedState<M>& chi, int t,
                 const CostSpec& cost) {
  if (!(cost.trace_cap > 0.0)) throw InvalidArgument("info_cost: b must be > 0");
  return -std::min(fim_trace(model, time, chi, t), cost.trace_cap);
}

// zeta = (y_k - b_lo)(y_k - b_hi) for the monitored output y_k.
template <Model M>
double band_penalty(const M& model, const typename M::State& x, const typename M::Params& theta,
                    const CostSpec& cost) {
  const double y = model.output(x, theta)(cost.monitored_output);
  return (y - cost.band_lo) * (y - cost.band_hi);
}

template <Model M>
double performance_cost(const M& model, const TimeStructure& time, const typename M::State& x,
                        double u, const typename M::Params& theta, const CostSpec& cost) {
  return (band_penalty(model, x, theta, cost) - cost.lambda_hat * u * u) / (time.N + 1);
}

template <Model M>
double stage_cost(const M& model, const TimeStructure& time, const AugmentedState<M>& chi, double u,
                  int t, const CostSpec& cost) {
  if (t < 0 || t >= time.N) throw InvalidArgument("stage_cost: t must lie in {0..N-1}");
  if (u < 0.0 || u > model.u_max()) throw InvalidArgument("stage_cost: u outside [0, u_max]");
  double c = performance_cost(model, time, chi.x, u, chi.theta_hat, cost);
  if (time.is_measurement(t)) c += cost.lambda * info_cost(model, time, chi, t, cost);
  return c;
}

template <Model M>
double terminal_cost(const M& model, const TimeStructure& time, const AugmentedState<M>& chi,
                     const CostSpec& cost) {
  double c = band_penalty(model, chi.x, chi.theta_hat, cost) / (time.N + 1);
  if (time.is_measurement(time.N)) c += cost.lambda * info_cost(model, time, chi, time.N, cost);
  return c;
}

// Explicit lower bound on every stage cost.
inline double stage_cost_lower_bound(const TimeStructure& time, double u_max, const CostSpec& c) {
  const double half = 0.5 * (c.band_hi - c.band_lo);
  return (-half * half - c.lambda_hat * u_max * u_max) / (time.N + 1) - c.lambda * c.trace_cap;
}

}  // namespace dosewise

#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "dosewise/errors.hpp"
#include "dosewise/model.hpp"
#include "dosewise/projection.hpp"
#include "dosewise/time_structure.hpp"

namespace dosewise {

enum class ScalingMode { kIdentity, kGaussNewton };

struct EstimatorConfig {
  double alpha = 1.0;                  // default step size
  std::map<int, double> alpha_at;      // per-measurement-time overrides
  double gamma = 1e-8;                 // Gauss-Newton regularization
  double epsilon = 1e-6;               // projection floor
  ScalingMode mode = ScalingMode::kGaussNewton;
  bool backtracking = true;
  int max_halvings = 20;
  std::vector<bool> mask;              // empty = estimate every component

  double step_size(int t) const {
    auto it = alpha_at.find(t);
    return it == alpha_at.end() ? alpha : it->second;
  }

  void validate() const {
    if (!(alpha > 0.0)) throw InvalidArgument("estimator: alpha must be > 0");
    for (const auto& [t, a] : alpha_at)
      if (!(a > 0.0)) throw InvalidArgument("estimator: alpha schedule must be positive");
    if (!(gamma > 0.0) && mode == ScalingMode::kGaussNewton)
      throw InvalidArgument("estimator: gamma must be > 0 in Gauss-Newton mode");
    if (!(epsilon > 0.0)) throw InvalidArgument("estimator: epsilon must be > 0");
    if (max_halvings < 0) throw InvalidArgument("estimator: max_halvings must be >= 0");
  }
};

// ||y - h(x; theta)||^2
template <Model M>
double squared_residual(const M& model, const typename M::Output& y, const typename M::State& x,
                        const typename M::Params& theta) {
  return (y - model.output(x, theta)).squaredNorm();
}

// Gradient of ||y - h(x; theta)||^2 in theta: -2 (dh/dtheta)^T (y - h).
template <Model M>
typename M::Params residual_gradient(const M& model, const TimeStructure& time,
                                     const typename M::Output& y, const typename M::State& x,
                                     const typename M::Params& theta, int t) {
  time.require_measurement(t, "residual_gradient");
  const typename M::Output r = y - model.output(x, theta);
  return -2.0 * model.output_dtheta(x, theta).transpose() * r;
}

// Identity, or 2 J^T J + gamma I with J = dh/dtheta.
template <Model M>
typename M::Fim scaling_matrix(const M& model, const typename M::State& x,
                               const typename M::Params& theta, const EstimatorConfig& cfg) {
  if (cfg.mode == ScalingMode::kIdentity) return M::Fim::Identity();
  if (!(cfg.gamma > 0.0)) throw InvalidArgument("scaling_matrix: gamma must be > 0");
  const auto J = model.output_dtheta(x, theta);
  typename M::Fim L = 2.0 * J.transpose() * J;
  L.diagonal().array() += cfg.gamma;
  return 0.5 * (L + L.transpose());
}

// One measurement-driven update of the parameter estimate. Off the
// measurement calendar (and at the terminal index, which has no successor)
// the estimate is returned unchanged.
template <Model M>
typename M::Params estimator_update(const M& model, const TimeStructure& time,
                                    const typename M::Output& y, const typename M::State& x,
                                    const typename M::Params& theta, int t,
                                    const EstimatorConfig& cfg) {
  if (!time.measurement_transition(t)) return theta;
  if (!y.allFinite()) throw InvalidArgument("estimator update: non-finite measurement");
  const typename M::Params grad = residual_gradient(model, time, y, x, theta, t);
  if (grad.isZero(0.0)) return project_positive(theta, cfg.epsilon);

  const typename M::Fim L = scaling_matrix(model, x, theta, cfg);
  typename M::Params direction = L.llt().solve(grad);
  if (!cfg.mask.empty()) {
    if (static_cast<int>(cfg.mask.size()) != direction.size())
      throw InvalidArgument("estimator: mask length must equal p");
    for (int i = 0; i < direction.size(); ++i)
      if (!cfg.mask[i]) direction(i) = 0.0;
  }

  double alpha = cfg.step_size(t);
  typename M::Params next = project_positive(theta - alpha * direction, cfg.epsilon);
  if (!cfg.backtracking) return next;

  const double before = squared_residual(model, y, x, theta);
  for (int k = 0; k < cfg.max_halvings && squared_residual(model, y, x, next) > before; ++k) {
    alpha *= 0.5;
    next = project_positive(theta - alpha * direction, cfg.epsilon);
  }
  if (squared_residual(model, y, x, next) > before) return theta;
  return next;
}

}  // namespace dosewise

#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "dosewise/augmented_kernel.hpp"
#include "dosewise/leukemia.hpp"

namespace dosewise::leukemia {

using System = AugmentedSystem<LeukemiaModel>;
using Chi = AugmentedState<LeukemiaModel>;
using Kernel = AugmentedKernel<LeukemiaModel>;
using Belief = AugmentedBelief<LeukemiaModel>;
using Noise = System::Noise;

// Hourly grid over 21 days, measurements on days 0, 7, 14, decisions on the
// first 14 days.
inline TimeStructure default_time(double u_max, int days = 21, int steps_per_day = 24,
                                  std::vector<int> measurement_days = {0, 7, 14},
                                  int dosing_days = 14) {
  const int N = days * steps_per_day;
  std::vector<int> ty;
  for (int d : measurement_days) ty.push_back(d * steps_per_day);
  std::vector<int> tu;
  for (int t = 0; t < dosing_days * steps_per_day && t < N; ++t) tu.push_back(t);
  return TimeStructure(N, 1.0 / steps_per_day, ty, tu, 0.0, u_max);
}

// Diagonal noise: process sd a fraction of each equilibrium compartment per
// step, measurement sd a fraction of the nominal outputs.
inline Noise default_noise(const State& x0, const Params& theta0, double process_rel_sd = 1e-3,
                           double measurement_rel_sd = 0.05) {
  Types::StateCovariance sd = Types::StateCovariance::Zero();
  for (int i = 0; i < 8; ++i) sd(i, i) = std::pow(process_rel_sd * x0(i), 2);
  Types::OutputCovariance sw = Types::OutputCovariance::Zero();
  const Output y = LeukemiaModel().output(x0, theta0);
  for (int i = 0; i < 2; ++i) sw(i, i) = std::pow(measurement_rel_sd * y(i), 2);
  return Noise(sd, sw);
}

// Prior p over chi_0: x truncated-Gaussian around x0, xi_0 = 0, theta_hat_0
// fixed unless randomization is switched on.
struct PriorSpec {
  double x_rel_sd = 0.05;
  bool randomize_theta = false;
  double theta_rel_sd = 0.1;
};

struct Problem {
  System sys;
  State x0;
  Params theta0;
  PriorSpec prior;

  Chi initial_chi() const { return Chi::initial(x0, theta0); }

  Chi sample_prior(CounterRng& rng) const {
    Chi chi = initial_chi();
    for (int i = 0; i < 8; ++i) {
      const double sd = prior.x_rel_sd * x0(i);
      if (sd <= 0.0) continue;
      double v;
      do v = x0(i) + sd * rng.normal();
      while (!(v > 0.0));
      chi.x(i) = v;
    }
    if (prior.randomize_theta) {
      for (int i = 0; i < 8; ++i) {
        double v;
        do v = theta0(i) * (1.0 + prior.theta_rel_sd * rng.normal());
        while (!(v > 0.0) || (i == kThetaP && !(v < 1.0)));
        chi.theta_hat(i) = v;
      }
    }
    return chi;
  }

  Kernel kernel() const { return Kernel{&sys}; }
};

// Noise-free, drug-free augmented trajectory from chi_0 up to index t_stop.
inline Chi nominal_chi(const System& sys, const Chi& chi0, int t_stop) {
  Chi chi = chi0;
  const State zero = State::Zero();
  for (int t = 0; t < t_stop; ++t) chi = sys.step(chi, 0.0, zero, Output::Zero(), t);
  return chi;
}

struct DerivedWeights {
  double lambda;
  double lambda_hat;
  double trace_cap;
  double gamma;
};

// Defaults tied to the nominal drug-free day-7 state: lambda * trace and
// lambda_hat * u_nom^2 are each 10% of |zeta|, b is 1e3 x the trace, and
// gamma is 1e-8 x the Gauss-Newton Gram trace.
inline DerivedWeights derive_weights(const System& sys, const Chi& chi0, int day = 7) {
  const int t = std::min(sys.time.N, static_cast<int>(std::lround(day / sys.time.delta)));
  const Chi chi = nominal_chi(sys, chi0, t);
  const Types::OutputSensitivity S = sys.model.output_dx(chi.x, chi.theta_hat) * chi.xi +
                 sys.model.output_dtheta(chi.x, chi.theta_hat);
  const double trace = S.squaredNorm();
  const double zeta = std::abs(band_penalty(sys.model, chi.x, chi.theta_hat, sys.cost));
  const double u_nom = sys.model.nominal_dose();
  const auto J = sys.model.output_dtheta(chi.x, chi.theta_hat);
  const double gram = 2.0 * J.squaredNorm();
  if (!(trace > 0.0) || !(zeta > 0.0) || !(gram > 0.0))
    throw CalibrationFailure("derive_weights: nominal trace or band penalty vanished");
  return {0.1 * zeta / trace, 0.1 * zeta / (u_nom * u_nom), 1e3 * trace, 1e-8 * gram};
}

}  // namespace dosewise::leukemia

#pragma once

#include <array>
#include <cmath>
#include <string>

#include "dosewise/errors.hpp"
#include "dosewise/model.hpp"
#include "dosewise/projection.hpp"

namespace dosewise::leukemia {

// 8 compartments: 6-MP gut (x1), 6-MP plasma (x2), 6-TGN in RBCs (x3),
// proliferating WBCs (x4), three maturation stages (x5..x7), mature WBCs (x8).
// Outputs: mature WBC count and neutrophil count theta_p * x8.
// Parameters theta1..theta7 of the nonlinear terms plus theta_p.
using Types = ModelTypes<8, 2, 8>;
using State = Types::State;
using Output = Types::Output;
using Params = Types::Params;

inline constexpr int kThetaP = 7;

// Initial estimates of theta1..theta7. theta_p comes from the first
// measurement of a patient (ANC / WBC); 0.5 is a placeholder.
inline Params table1_theta(double theta_p = 0.5) {
  Params th;
  th << 39.4, 15.11, 0.3287, 0.4386, 8.2e9, 0.0782, 84.0, theta_p;
  return th;
}

// No-drug equilibrium state used as x0.
inline State table1_x0() {
  State x;
  x << 0.0, 0.0, 0.0, 1.2e11, 1.2e11, 1.2e11, 1.2e11, 2.85e9;
  return x;
}

inline const std::array<std::string, 8>& parameter_names() {
  static const std::array<std::string, 8> names = {
      "theta1", "theta2", "theta3", "theta4", "theta5", "theta6", "theta7", "theta_p"};
  return names;
}

// Linear part A(theta): rates that the nonlinear block leaves open.
// transit[k] is the outflow rate of compartment x4+k (k = 0..3).
struct RateBlock {
  double absorption = 12.0;        // gut -> plasma, 1/day
  double elimination_mp = 8.0;     // plasma 6-MP elimination, 1/day
  double elimination_tgn = 0.24;   // 6-TGN elimination, 1/day
  std::array<double, 4> transit{0.2, 0.2, 0.2, 0.2};  // 1/day
  double death = 2.3;              // mature WBC removal, 1/day
  double volume_factor = 1.0;      // cells/kg -> cells/L on the x7 -> x8 flux
};

// Literature-style rates for the drug compartments and the mature-cell
// removal rate; the calibration derives the rest.
struct CalibrationInputs {
  double absorption = 12.0;
  double elimination_mp = 8.0;
  double elimination_tgn = 0.24;
  double death = 2.3;
};

// Proliferation rate factor theta3 / (1 + (x8/theta5)^theta4) minus the drug
// effect theta6 x3 / (theta7 + x3).
inline double net_proliferation(const State& x, const Params& th) {
  const double feedback = std::pow(x(7) / th(4), th(3));
  return th(2) / (1.0 + feedback) - th(5) * x(2) / (th(6) + x(2));
}

inline double fhat2(const State& x, const Params& th) {
  return -th(0) * x(1) / (th(1) + x(1));
}

inline double fhat4(const State& x, const Params& th) { return net_proliferation(x, th) * x(3); }

// Solves for rates making x0 a fixed point of the drift with no drug input.
inline RateBlock calibrate_equilibrium(const State& x0, const Params& th,
                                       const CalibrationInputs& in = {}) {
  for (int i = 0; i < 8; ++i)
    if (!std::isfinite(x0(i))) throw InvalidArgument("calibrate_equilibrium: non-finite x0");
  for (int i = 3; i < 8; ++i)
    if (!(x0(i) > 0.0))
      throw CalibrationFailure("calibrate_equilibrium: WBC compartments must be positive");
  // Rows 1-3 carry no source without drug, so they balance only when empty.
  if (x0(0) != 0.0 || x0(1) != 0.0 || x0(2) != 0.0)
    throw CalibrationFailure(
        "calibrate_equilibrium: drug compartments must be empty at a no-drug equilibrium");
  if (!(in.absorption > 0 && in.elimination_mp > 0 && in.elimination_tgn > 0 && in.death > 0))
    throw InvalidArgument("calibrate_equilibrium: literature rates must be positive");

  RateBlock r;
  r.absorption = in.absorption;
  r.elimination_mp = in.elimination_mp;
  r.elimination_tgn = in.elimination_tgn;
  r.death = in.death;

  const double growth = net_proliferation(x0, th);
  if (!(growth > 0.0))
    throw CalibrationFailure("calibrate_equilibrium: net proliferation is not positive at x0");
  r.transit[0] = growth;
  for (int k = 1; k < 4; ++k) r.transit[k] = r.transit[k - 1] * x0(2 + k) / x0(3 + k);
  r.volume_factor = r.death * x0(7) / (r.transit[3] * x0(6));
  return r;
}

class LeukemiaModel : public Types {
 public:
  struct Settings {
    double delta = 1.0 / 24.0;   // days per step
    double epsilon = 1e-6;       // projection floor
    double beta = 50.0;          // smooth-max sharpness
    double dose_to_gut = 1.5;    // pmol delivered to the gut per mg of 6-MP
    double bsa = 1.7;            // m^2
    double nominal_dose_per_m2 = 50.0;  // mg / m^2 / day
  };

  LeukemiaModel() = default;
  LeukemiaModel(const RateBlock& rates, const Settings& settings)
      : rates_(rates), settings_(settings) {
    check_smooth_args(settings_.epsilon, settings_.beta);
    if (!(settings_.delta > 0.0)) throw InvalidArgument("leukemia: delta must be positive");
    if (!(settings_.bsa > 0.0)) throw InvalidArgument("leukemia: BSA must be positive");
  }

  const RateBlock& rates() const { return rates_; }
  const Settings& settings() const { return settings_; }
  double delta() const { return settings_.delta; }
  double nominal_dose() const { return settings_.nominal_dose_per_m2 * settings_.bsa; }
  double u_max() const { return 2.0 * nominal_dose(); }

  // f_bar(x, u; theta) = A x + B u + f_hat(x; theta), per day.
  State drift(const State& x, double u, const Params& th) const {
    const RateBlock& r = rates_;
    const double f2 = fhat2(x, th);
    State out;
    out(0) = -r.absorption * x(0) + settings_.dose_to_gut * u;
    out(1) = r.absorption * x(0) - r.elimination_mp * x(1) + f2;
    out(2) = -f2 - r.elimination_tgn * x(2);
    out(3) = fhat4(x, th) - r.transit[0] * x(3);
    out(4) = r.transit[0] * x(3) - r.transit[1] * x(4);
    out(5) = r.transit[1] * x(4) - r.transit[2] * x(5);
    out(6) = r.transit[2] * x(5) - r.transit[3] * x(6);
    out(7) = r.volume_factor * r.transit[3] * x(6) - r.death * x(7);
    return out;
  }

  // d f_bar / d x.
  StateJacobian drift_dx(const State& x, const Params& th) const {
    const RateBlock& r = rates_;
    StateJacobian J = StateJacobian::Zero();
    J(0, 0) = -r.absorption;
    const double d2 = -th(0) * th(1) / ((th(1) + x(1)) * (th(1) + x(1)));
    J(1, 0) = r.absorption;
    J(1, 1) = -r.elimination_mp + d2;
    J(2, 1) = -d2;
    J(2, 2) = -r.elimination_tgn;
    const double ratio = x(7) / th(4);
    const double feedback = std::pow(ratio, th(3));
    const double denom = 1.0 + feedback;
    J(3, 3) = net_proliferation(x, th) - r.transit[0];
    J(3, 2) = -th(5) * th(6) / ((th(6) + x(2)) * (th(6) + x(2))) * x(3);
    if (x(7) > 0.0)
      J(3, 7) = -th(2) * th(3) * feedback / (x(7) * denom * denom) * x(3);
    J(4, 3) = r.transit[0];
    J(4, 4) = -r.transit[1];
    J(5, 4) = r.transit[1];
    J(5, 5) = -r.transit[2];
    J(6, 5) = r.transit[2];
    J(6, 6) = -r.transit[3];
    J(7, 6) = r.volume_factor * r.transit[3];
    J(7, 7) = -r.death;
    return J;
  }

  // d f_bar / d theta. theta_p does not enter the dynamics.
  ParamJacobian drift_dtheta(const State& x, const Params& th) const {
    ParamJacobian J = ParamJacobian::Zero();
    const double s2 = th(1) + x(1);
    const double d_th1 = -x(1) / s2;
    const double d_th2 = th(0) * x(1) / (s2 * s2);
    J(1, 0) = d_th1;
    J(1, 1) = d_th2;
    J(2, 0) = -d_th1;
    J(2, 1) = -d_th2;

    const double ratio = x(7) / th(4);
    const double feedback = std::pow(ratio, th(3));
    const double denom = 1.0 + feedback;
    const double x4 = x(3);
    J(3, 2) = x4 / denom;
    if (x(7) > 0.0) {
      J(3, 3) = -th(2) * feedback * std::log(ratio) / (denom * denom) * x4;
      J(3, 4) = th(2) * th(3) * feedback / (th(4) * denom * denom) * x4;
    }
    const double s7 = th(6) + x(2);
    J(3, 5) = -x(2) / s7 * x4;
    J(3, 6) = th(5) * x(2) / (s7 * s7) * x4;
    return J;
  }

  State pre_projection(const State& x, double u, const State& d, const Params& th) const {
    return x + settings_.delta * drift(x, u, th) + d;
  }

  // f(x, u, d; theta) = smooth_project(x + delta * f_bar + d).
  State step(const State& x, double u, const State& d, const Params& th) const {
    check_inputs(x, u, d, th);
    return smooth_project(pre_projection(x, u, d, th), settings_.epsilon, settings_.beta);
  }

  // Returns f and fills df/dx, df/dtheta.
  State step_jacobians(const State& x, double u, const State& d, const Params& th,
                       StateJacobian& fx, ParamJacobian& ftheta) const {
    check_inputs(x, u, d, th);
    const State z = pre_projection(x, u, d, th);
    State out;
    State slope;
    for (int i = 0; i < n; ++i) {
      out(i) = smooth_max_scalar(z(i), settings_.epsilon, settings_.beta);
      slope(i) = smooth_max_slope(z(i), settings_.epsilon, settings_.beta);
    }
    fx = settings_.delta * drift_dx(x, th);
    fx.diagonal().array() += 1.0;
    fx = slope.asDiagonal() * fx;
    ftheta = slope.asDiagonal() * (settings_.delta * drift_dtheta(x, th));
    return out;
  }

  Output output(const State& x, const Params& th) const {
    Output y;
    y << x(7), th(kThetaP) * x(7);
    return y;
  }

  OutputStateJacobian output_dx(const State&, const Params& th) const {
    OutputStateJacobian C = OutputStateJacobian::Zero();
    C(0, 7) = 1.0;
    C(1, 7) = th(kThetaP);
    return C;
  }

  OutputParamJacobian output_dtheta(const State& x, const Params&) const {
    OutputParamJacobian J = OutputParamJacobian::Zero();
    J(1, kThetaP) = x(7);
    return J;
  }

 private:
  static void check_inputs(const State& x, double u, const State& d, const Params& th) {
    if (!x.allFinite() || !d.allFinite() || !th.allFinite() || !std::isfinite(u))
      throw InvalidArgument("leukemia_step: non-finite input");
  }

  RateBlock rates_{};
  Settings settings_{};
};

// Validates a parameter vector for this model: all positive, theta_p < 1.
inline void check_parameters(const Params& th) {
  for (int i = 0; i < th.size(); ++i)
    if (!(th(i) > 0.0) || !std::isfinite(th(i)))
      throw InvalidArgument("parameters must be finite and strictly positive");
  if (!(th(kThetaP) < 1.0)) throw InvalidArgument("theta_p must lie in (0, 1)");
}

}  // namespace dosewise::leukemia

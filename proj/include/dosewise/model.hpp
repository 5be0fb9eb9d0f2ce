#pragma once

#include <concepts>

#include <Eigen/Dense>

namespace dosewise {

// Fixed-size Eigen aliases shared by every model of dimension (n, m, p).
template <int Nx, int Ny, int Np>
struct ModelTypes {
  static constexpr int n = Nx;
  static constexpr int m = Ny;
  static constexpr int p = Np;
  using State = Eigen::Matrix<double, Nx, 1>;
  using Output = Eigen::Matrix<double, Ny, 1>;
  using Params = Eigen::Matrix<double, Np, 1>;
  using StateJacobian = Eigen::Matrix<double, Nx, Nx>;
  using ParamJacobian = Eigen::Matrix<double, Nx, Np>;
  using Sensitivity = ParamJacobian;
  using OutputStateJacobian = Eigen::Matrix<double, Ny, Nx>;
  using OutputParamJacobian = Eigen::Matrix<double, Ny, Np>;
  using OutputSensitivity = OutputParamJacobian;
  using Fim = Eigen::Matrix<double, Np, Np>;
  using StateCovariance = Eigen::Matrix<double, Nx, Nx>;
  using OutputCovariance = Eigen::Matrix<double, Ny, Ny>;
};

// A discrete-time model x' = f(x, u, d; theta), y = h(x; theta) with the four
// Jacobians needed for sensitivity propagation and parameter estimation.
// Controls are scalar doses in [0, u_max].
template <class M>
concept Model = requires(const M& model, const typename M::State& x,
                         const typename M::Params& theta, double u,
                         typename M::StateJacobian& fx, typename M::ParamJacobian& ftheta) {
  { M::n } -> std::convertible_to<int>;
  { M::m } -> std::convertible_to<int>;
  { M::p } -> std::convertible_to<int>;
  { model.step(x, u, x, theta) } -> std::convertible_to<typename M::State>;
  { model.step_jacobians(x, u, x, theta, fx, ftheta) } -> std::convertible_to<typename M::State>;
  { model.output(x, theta) } -> std::convertible_to<typename M::Output>;
  { model.output_dx(x, theta) } -> std::convertible_to<typename M::OutputStateJacobian>;
  { model.output_dtheta(x, theta) } -> std::convertible_to<typename M::OutputParamJacobian>;
  { model.u_max() } -> std::convertible_to<double>;
};

}  // namespace dosewise

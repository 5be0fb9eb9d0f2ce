#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <numbers>

#include <Eigen/Dense>

#include "dosewise/errors.hpp"
#include "dosewise/rng.hpp"

namespace dosewise {

namespace detail {

// Symmetric square root factor L with L L^T = S for a PSD matrix S.
template <class Matrix>
Matrix psd_factor(const Matrix& S, const char* who) {
  if (!S.allFinite()) throw InvalidArgument(std::string(who) + ": non-finite covariance");
  const double magnitude = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * magnitude)
    throw InvalidArgument(std::string(who) + ": covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-12 * scale)
    throw InvalidArgument(std::string(who) + ": covariance must be positive semidefinite");
  auto root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

// Zero-mean Gaussian process noise d ~ N(0, Sd) and measurement noise
// w ~ N(0, Sw), independent of each other, so the joint law of (d, w) is the
// product of its marginals.
template <int Nx, int Ny>
class NoiseModel {
 public:
  using StateVec = Eigen::Matrix<double, Nx, 1>;
  using OutputVec = Eigen::Matrix<double, Ny, 1>;
  using StateCov = Eigen::Matrix<double, Nx, Nx>;
  using OutputCov = Eigen::Matrix<double, Ny, Ny>;

  NoiseModel() : NoiseModel(StateCov::Zero(), OutputCov::Identity()) {}
  NoiseModel(const StateCov& process, const OutputCov& measurement)
      : process_(process), measurement_(measurement) {
    process_root_ = detail::psd_factor(process_, "process noise");
    measurement_root_ = detail::psd_factor(measurement_, "measurement noise");
    Eigen::LLT<OutputCov> llt(measurement_);
    measurement_pd_ = llt.info() == Eigen::Success &&
                      llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0;
    if (measurement_pd_) {
      measurement_llt_ = llt;
      log_det_ = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    }
  }

  const StateCov& process_covariance() const { return process_; }
  const OutputCov& measurement_covariance() const { return measurement_; }
  bool measurement_positive_definite() const { return measurement_pd_; }
  bool process_is_zero() const { return process_.isZero(0.0); }

  StateVec sample_process(CounterRng& rng) const {
    StateVec z;
    for (int i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return process_root_ * z;
  }

  OutputVec sample_measurement(CounterRng& rng) const {
    OutputVec z;
    for (int i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return measurement_root_ * z;
  }

  // log N(residual; 0, Sw).
  double measurement_logdensity(const OutputVec& residual) const {
    if (!measurement_pd_)
      throw InvalidArgument("measurement covariance must be positive definite for a density");
    const OutputVec solved = measurement_llt_.solve(residual);
    const double quad = residual.dot(solved);
    return -0.5 * (Ny * std::log(2.0 * std::numbers::pi) + log_det_ + quad);
  }

 private:
  StateCov process_;
  OutputCov measurement_;
  StateCov process_root_;
  OutputCov measurement_root_;
  Eigen::LLT<OutputCov> measurement_llt_;
  double log_det_ = 0.0;
  bool measurement_pd_ = false;
};

}  // namespace dosewise

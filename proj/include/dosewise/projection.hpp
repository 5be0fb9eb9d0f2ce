#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "dosewise/errors.hpp"

namespace dosewise {

// Componentwise max(v_i, epsilon).
template <class Derived>
auto project_positive(const Eigen::MatrixBase<Derived>& v, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("project_positive: epsilon must be > 0");
  using Plain = typename Derived::PlainObject;
  Plain out = v.cwiseMax(epsilon);
  return out;
}

// beta^-1 log(exp(beta v) + exp(beta eps)), evaluated as
// max + log1p(exp(-beta |v - eps|)) / beta.
inline double smooth_max_scalar(double v, double epsilon, double beta) {
  const double hi = std::max(v, epsilon);
  const double gap = std::abs(v - epsilon);
  return hi + std::log1p(std::exp(-beta * gap)) / beta;
}

// Derivative of smooth_max_scalar with respect to v: the logistic sigmoid
// of beta (v - eps).
inline double smooth_max_slope(double v, double epsilon, double beta) {
  const double z = beta * (v - epsilon);
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline void check_smooth_args(double epsilon, double beta) {
  if (!(epsilon > 0.0)) throw InvalidArgument("smooth_project: epsilon must be > 0");
  if (!(beta >= 1.0)) throw InvalidArgument("smooth_project: beta must be >= 1");
}

template <class Derived>
auto smooth_project(const Eigen::MatrixBase<Derived>& v, double epsilon, double beta) {
  check_smooth_args(epsilon, beta);
  using Plain = typename Derived::PlainObject;
  Plain out(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out(i) = smooth_max_scalar(v(i), epsilon, beta);
  return out;
}

}  // namespace dosewise

#pragma once

#include <stdexcept>
#include <string>

namespace dosewise {

// Precondition violated by the caller (bad shape, off-calendar index, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// No positive rate block reproduces the requested equilibrium.
class CalibrationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every particle received zero likelihood. Carries the largest log-likelihood
// seen so callers can widen the noise model or re-seed.
class DegenerateUpdate : public std::runtime_error {
 public:
  DegenerateUpdate(const std::string& what, double max_loglik)
      : std::runtime_error(what), max_loglik_(max_loglik) {}
  double max_loglik() const { return max_loglik_; }

 private:
  double max_loglik_;
};

// Exact filter normalizer vanished: the observation cannot occur.
class ImpossibleObservation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Brute-force enumeration would exceed its size guard.
class TooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dosewise

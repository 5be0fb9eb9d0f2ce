#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "dosewise/errors.hpp"

namespace dosewise {

// The three calendars of a multi-time-scale problem. States live on
// {0..N-1} (plus the terminal index N), measurements on a subset of {0..N},
// and decisions on a subset of {0..N-1}; off the decision calendar the
// control is pinned to u_default.
struct TimeStructure {
  int N = 0;
  double delta = 1.0;
  std::vector<int> measurement_times;  // sorted, unique
  std::vector<int> decision_times;     // sorted, unique
  double u_default = 0.0;
  double u_max = 0.0;

  TimeStructure() = default;
  TimeStructure(int horizon, double step, std::vector<int> ty, std::vector<int> tu,
                double u_def, double umax)
      : N(horizon),
        delta(step),
        measurement_times(std::move(ty)),
        decision_times(std::move(tu)),
        u_default(u_def),
        u_max(umax) {
    normalize();
    validate();
  }

  void normalize() {
    auto canon = [](std::vector<int>& v) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    canon(measurement_times);
    canon(decision_times);
  }

  void validate() const {
    if (N < 0) throw InvalidArgument("time structure: N must be non-negative");
    if (!(delta > 0.0)) throw InvalidArgument("time structure: delta must be positive");
    if (measurement_times.empty())
      throw InvalidArgument("time structure: measurement calendar is empty");
    if (decision_times.empty() && N > 0)
      throw InvalidArgument("time structure: decision calendar is empty");
    for (int t : measurement_times)
      if (t < 0 || t > N) throw InvalidArgument("time structure: T_y must lie in {0..N}");
    for (int t : decision_times)
      if (t < 0 || t >= N) throw InvalidArgument("time structure: T_u must lie in {0..N-1}");
    if (!(u_max >= 0.0) || u_default < 0.0 || u_default > u_max)
      throw InvalidArgument("time structure: u_default outside [0, u_max]");
  }

  bool is_measurement(int t) const {
    return std::binary_search(measurement_times.begin(), measurement_times.end(), t);
  }
  bool is_decision(int t) const {
    return std::binary_search(decision_times.begin(), decision_times.end(), t);
  }
  // t in T_y \ {N}: the transition out of t consumes measurement noise.
  bool measurement_transition(int t) const { return t < N && is_measurement(t); }

  double clamp_control(double u) const { return std::clamp(u, 0.0, u_max); }

  void require_measurement(int t, const char* who) const {
    if (!is_measurement(t))
      throw InvalidArgument(std::string(who) + ": t=" + std::to_string(t) +
                            " is not on the measurement calendar");
  }
};

}  // namespace dosewise

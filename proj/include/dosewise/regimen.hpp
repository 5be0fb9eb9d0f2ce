#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "dosewise/errors.hpp"
#include "dosewise/time_structure.hpp"

namespace dosewise {

// Daily doses held constant over every step of a calendar day. Day k covers
// the steps t with floor(t * delta) == k; steps off the decision calendar
// receive u_default regardless of the table.
struct DoseRegimen {
  std::vector<double> daily;  // mg/day, one entry per decision day

  static int day_of(const TimeStructure& time, int t) {
    return static_cast<int>(std::floor(t * time.delta + 1e-9));
  }

  // Number of calendar days touched by the decision calendar.
  static int decision_days(const TimeStructure& time) {
    if (time.decision_times.empty()) return 0;
    return day_of(time, time.decision_times.back()) + 1;
  }

  static DoseRegimen constant(const TimeStructure& time, double dose) {
    return {std::vector<double>(static_cast<std::size_t>(decision_days(time)), dose)};
  }

  double dose_at(const TimeStructure& time, int t) const {
    if (!time.is_decision(t)) return time.u_default;
    const int day = day_of(time, t);
    if (day < 0 || day >= static_cast<int>(daily.size()))
      throw InvalidArgument("regimen does not cover decision day " + std::to_string(day));
    return daily[static_cast<std::size_t>(day)];
  }

  double total() const { return std::accumulate(daily.begin(), daily.end(), 0.0); }

  void validate(const TimeStructure& time) const {
    if (static_cast<int>(daily.size()) < decision_days(time))
      throw InvalidArgument("regimen is shorter than the decision calendar");
    for (double d : daily)
      if (!(d >= 0.0) || d > time.u_max * (1.0 + 1e-12))
        throw InvalidArgument("regimen dose outside [0, u_max]");
  }

  bool operator==(const DoseRegimen&) const = default;
};

}  // namespace dosewise

#pragma once

#include <gtest/gtest.h>

#include "dosewise/config.hpp"

namespace dosewise::fixtures {

// Default leukemia problem, built once per binary.
inline const leukemia::Problem& default_problem() {
  static const leukemia::Problem prob = build_problem(default_config());
  return prob;
}

inline Config config_from(const nlohmann::json& j) {
  nlohmann::json full = j;
  full["schema_version"] = kSchemaVersion;
  return parse_config(full);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace dosewise::fixtures

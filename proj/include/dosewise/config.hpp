#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dosewise/leukemia_problem.hpp"

namespace dosewise {

inline constexpr int kSchemaVersion = 1;

// Malformed or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

struct FilterSettings {
  std::size_t particles = 500;
  double ess_fraction = 0.5;
};

struct OptimizerSettings {
  std::vector<double> levels{0.0, 0.25, 0.5, 1.0, 1.5, 2.0};  // multiples of the nominal dose
  std::vector<std::pair<int, int>> blocks{{0, 6}, {7, 13}};   // inclusive day ranges sharing a level
  bool free_days = false;  // one level per day instead of per block
  std::size_t scenarios = 500;
};

struct EvaluationSettings {
  std::size_t patients = 50;
  double perturbation = 0.2;   // theta_true = theta * U[1 - p, 1 + p]
  std::size_t scenarios = 64;  // per re-optimization
  std::size_t particles = 200;
};

struct Config {
  nlohmann::json raw;
  std::string hash;

  leukemia::Params theta = leukemia::table1_theta();
  leukemia::State x0 = leukemia::table1_x0();
  leukemia::LeukemiaModel::Settings model;
  leukemia::CalibrationInputs calibration;

  int days = 21;
  int steps_per_day = 24;
  std::vector<int> measurement_days{0, 7, 14};
  int dosing_days = 14;

  double process_rel_sd = 1e-3;
  double measurement_rel_sd = 0.05;

  std::optional<double> lambda, lambda_hat, trace_cap, gamma;  // empty = derived
  double band_lo = 1e9;
  double band_hi = 2e9;

  EstimatorConfig estimator;
  leukemia::PriorSpec prior;
  FilterSettings filter;
  OptimizerSettings optimizer;
  EvaluationSettings evaluation;
};

namespace detail {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!ok.count(it.key())) throw ConfigError(path_ + "." + it.key(), "unknown key");
  }

  bool has(const char* key) const { return j_.contains(key); }

  Reader child(const char* key) const { return Reader(j_.at(key), path_ + "." + key); }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(sub(key), "expected a number");
    return v.get<double>();
  }

  double positive(const char* key, double fallback) const {
    const double v = number(key, fallback);
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(sub(key), "must be finite and > 0");
    return v;
  }

  long long integer(const char* key, long long fallback, long long lo, long long hi) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(sub(key), "expected an integer");
    const auto x = v.get<long long>();
    if (x < lo || x > hi) throw ConfigError(sub(key), "out of range");
    return x;
  }

  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_boolean()) throw ConfigError(sub(key), "expected true or false");
    return j_.at(key).get<bool>();
  }

  std::string string(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_string()) throw ConfigError(sub(key), "expected a string");
    return j_.at(key).get<std::string>();
  }

  // Number, or the string "auto" (meaning: derive).
  std::optional<double> number_or_auto(const char* key) const {
    if (!has(key)) return std::nullopt;
    const auto& v = j_.at(key);
    if (v.is_string() && v.get<std::string>() == "auto") return std::nullopt;
    if (!v.is_number()) throw ConfigError(sub(key), "expected a number or \"auto\"");
    const double x = v.get<double>();
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError(sub(key), "must be finite and >= 0");
    return x;
  }

  std::vector<double> numbers(const char* key, std::size_t size) const {
    const auto& v = j_.at(key);
    if (!v.is_array() || (size && v.size() != size))
      throw ConfigError(sub(key), size ? "expected an array of " + std::to_string(size) + " numbers"
                                       : "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(sub(key), "expected numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<int> integers(const char* key) const {
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(sub(key), "expected an array of integers");
    std::vector<int> out;
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw ConfigError(sub(key), "expected integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  const json& value(const char* key) const { return j_.at(key); }
  std::string sub(const char* key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
};

}  // namespace detail

inline Config parse_config(const nlohmann::json& j) {
  using detail::Reader;
  Config c;
  c.raw = j;
  c.hash = hex64(fnv1a64(j.dump()));
  const Reader root(j, "$");
  root.allow({"schema_version", "model", "calendar", "noise", "cost", "estimator", "prior",
              "filter", "optimizer", "evaluation"});
  if (root.integer("schema_version", -1, 0, 1 << 30) != kSchemaVersion)
    throw ConfigError("$.schema_version", "must be " + std::to_string(kSchemaVersion));

  if (root.has("model")) {
    const Reader m = root.child("model");
    m.allow({"theta", "x0", "epsilon", "beta", "bsa", "dose_to_gut", "nominal_dose_per_m2",
             "rates"});
    if (m.has("theta")) {
      const auto v = m.numbers("theta", 8);
      for (int i = 0; i < 8; ++i) c.theta(i) = v[static_cast<std::size_t>(i)];
    }
    if (m.has("x0")) {
      const auto v = m.numbers("x0", 8);
      for (int i = 0; i < 8; ++i) c.x0(i) = v[static_cast<std::size_t>(i)];
    }
    c.model.epsilon = m.positive("epsilon", c.model.epsilon);
    c.model.beta = m.positive("beta", c.model.beta);
    c.model.bsa = m.positive("bsa", c.model.bsa);
    c.model.dose_to_gut = m.positive("dose_to_gut", c.model.dose_to_gut);
    c.model.nominal_dose_per_m2 = m.positive("nominal_dose_per_m2", c.model.nominal_dose_per_m2);
    if (m.has("rates")) {
      const Reader r = m.child("rates");
      r.allow({"absorption", "elimination_mp", "elimination_tgn", "death"});
      c.calibration.absorption = r.positive("absorption", c.calibration.absorption);
      c.calibration.elimination_mp = r.positive("elimination_mp", c.calibration.elimination_mp);
      c.calibration.elimination_tgn = r.positive("elimination_tgn", c.calibration.elimination_tgn);
      c.calibration.death = r.positive("death", c.calibration.death);
    }
  }

  if (root.has("calendar")) {
    const Reader k = root.child("calendar");
    k.allow({"days", "steps_per_day", "measurement_days", "dosing_days"});
    c.days = static_cast<int>(k.integer("days", c.days, 1, 3650));
    c.steps_per_day = static_cast<int>(k.integer("steps_per_day", c.steps_per_day, 1, 1440));
    if (k.has("measurement_days")) c.measurement_days = k.integers("measurement_days");
    c.dosing_days = static_cast<int>(k.integer("dosing_days", c.dosing_days, 1, c.days));
  }
  c.model.delta = 1.0 / c.steps_per_day;

  if (root.has("noise")) {
    const Reader n = root.child("noise");
    n.allow({"process_rel_sd", "measurement_rel_sd"});
    c.process_rel_sd = n.number("process_rel_sd", c.process_rel_sd);
    c.measurement_rel_sd = n.number("measurement_rel_sd", c.measurement_rel_sd);
    if (!(c.process_rel_sd >= 0.0) || !(c.measurement_rel_sd >= 0.0))
      throw ConfigError("$.noise", "standard deviations must be >= 0");
  }

  if (root.has("cost")) {
    const Reader k = root.child("cost");
    k.allow({"lambda", "lambda_hat", "trace_cap", "band"});
    c.lambda = k.number_or_auto("lambda");
    c.lambda_hat = k.number_or_auto("lambda_hat");
    c.trace_cap = k.number_or_auto("trace_cap");
    if (c.trace_cap && !(*c.trace_cap > 0.0)) throw ConfigError("$.cost.trace_cap", "must be > 0");
    if (k.has("band")) {
      const auto b = k.numbers("band", 2);
      c.band_lo = b[0];
      c.band_hi = b[1];
      if (!(c.band_lo < c.band_hi)) throw ConfigError("$.cost.band", "lower edge must be below upper");
    }
  }

  if (root.has("estimator")) {
    const Reader e = root.child("estimator");
    e.allow({"mode", "alpha", "alpha_schedule", "gamma", "backtracking", "max_halvings", "mask"});
    const std::string mode = e.string("mode", "gauss_newton");
    if (mode == "gauss_newton") c.estimator.mode = ScalingMode::kGaussNewton;
    else if (mode == "identity") c.estimator.mode = ScalingMode::kIdentity;
    else throw ConfigError("$.estimator.mode", "expected \"gauss_newton\" or \"identity\"");
    c.estimator.alpha = e.positive("alpha", c.estimator.alpha);
    if (e.has("alpha_schedule")) {
      const auto& s = e.value("alpha_schedule");
      if (!s.is_object()) throw ConfigError("$.estimator.alpha_schedule", "expected an object");
      for (auto it = s.begin(); it != s.end(); ++it) {
        int day = 0;
        try {
          day = std::stoi(it.key());
        } catch (const std::exception&) {
          throw ConfigError("$.estimator.alpha_schedule", "keys must be measurement days");
        }
        if (!it.value().is_number() || !(it.value().get<double>() > 0.0))
          throw ConfigError("$.estimator.alpha_schedule", "step sizes must be > 0");
        c.estimator.alpha_at[day * c.steps_per_day] = it.value().get<double>();
      }
    }
    c.gamma = e.number_or_auto("gamma");
    if (c.gamma && !(*c.gamma > 0.0)) throw ConfigError("$.estimator.gamma", "must be > 0");
    c.estimator.backtracking = e.boolean("backtracking", c.estimator.backtracking);
    c.estimator.max_halvings = static_cast<int>(e.integer("max_halvings", 20, 0, 1000));
    if (e.has("mask")) {
      const auto& m = e.value("mask");
      if (!m.is_array() || m.size() != 8) throw ConfigError("$.estimator.mask", "expected 8 booleans");
      for (const auto& b : m) {
        if (!b.is_boolean()) throw ConfigError("$.estimator.mask", "expected booleans");
        c.estimator.mask.push_back(b.get<bool>());
      }
    }
  }
  c.estimator.epsilon = c.model.epsilon;

  if (root.has("prior")) {
    const Reader p = root.child("prior");
    p.allow({"x_rel_sd", "randomize_theta", "theta_rel_sd"});
    c.prior.x_rel_sd = p.number("x_rel_sd", c.prior.x_rel_sd);
    c.prior.randomize_theta = p.boolean("randomize_theta", c.prior.randomize_theta);
    c.prior.theta_rel_sd = p.number("theta_rel_sd", c.prior.theta_rel_sd);
    if (!(c.prior.x_rel_sd >= 0.0) || !(c.prior.theta_rel_sd >= 0.0))
      throw ConfigError("$.prior", "standard deviations must be >= 0");
  }

  if (root.has("filter")) {
    const Reader f = root.child("filter");
    f.allow({"particles", "ess_fraction"});
    c.filter.particles = static_cast<std::size_t>(f.integer("particles", 500, 1, 10000000));
    c.filter.ess_fraction = f.number("ess_fraction", c.filter.ess_fraction);
    if (!(c.filter.ess_fraction >= 0.0 && c.filter.ess_fraction <= 1.0))
      throw ConfigError("$.filter.ess_fraction", "must lie in [0, 1]");
  }

  if (root.has("optimizer")) {
    const Reader o = root.child("optimizer");
    o.allow({"levels", "blocks", "free_days", "scenarios"});
    if (o.has("levels")) {
      c.optimizer.levels = o.numbers("levels", 0);
      for (double l : c.optimizer.levels)
        if (!(l >= 0.0 && l <= 2.0))
          throw ConfigError("$.optimizer.levels", "levels are multiples of the nominal dose in [0, 2]");
    }
    if (o.has("blocks")) {
      c.optimizer.blocks.clear();
      for (const auto& b : o.value("blocks")) {
        if (!b.is_array() || b.size() != 2 || !b[0].is_number_integer() || !b[1].is_number_integer())
          throw ConfigError("$.optimizer.blocks", "expected [first_day, last_day] pairs");
        c.optimizer.blocks.emplace_back(b[0].get<int>(), b[1].get<int>());
      }
    }
    c.optimizer.free_days = o.boolean("free_days", false);
    c.optimizer.scenarios = static_cast<std::size_t>(o.integer("scenarios", 500, 1, 100000000));
  }

  if (root.has("evaluation")) {
    const Reader e = root.child("evaluation");
    e.allow({"patients", "perturbation", "scenarios", "particles"});
    c.evaluation.patients = static_cast<std::size_t>(e.integer("patients", 50, 1, 100000));
    c.evaluation.perturbation = e.number("perturbation", 0.2);
    if (!(c.evaluation.perturbation >= 0.0 && c.evaluation.perturbation < 1.0))
      throw ConfigError("$.evaluation.perturbation", "must lie in [0, 1)");
    c.evaluation.scenarios = static_cast<std::size_t>(e.integer("scenarios", 64, 1, 10000000));
    c.evaluation.particles = static_cast<std::size_t>(e.integer("particles", 200, 1, 10000000));
  }

  try {
    leukemia::check_parameters(c.theta);
  } catch (const InvalidArgument& e) {
    throw ConfigError("$.model.theta", e.what());
  }
  for (int d : c.measurement_days)
    if (d < 0 || d > c.days) throw ConfigError("$.calendar.measurement_days", "day outside the horizon");
  return c;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline Config default_config() { return parse_config({{"schema_version", kSchemaVersion}}); }

// Builds the calibrated model, calendars, noise, costs and estimator, filling
// every "auto" weight from the nominal drug-free trajectory.
inline leukemia::Problem build_problem(const Config& c) {
  using namespace leukemia;
  Problem prob;
  prob.x0 = c.x0;
  prob.theta0 = c.theta;
  prob.prior = c.prior;
  try {
    const RateBlock rates = calibrate_equilibrium(c.x0, c.theta, c.calibration);
    prob.sys.model = LeukemiaModel(rates, c.model);
    prob.sys.time = default_time(prob.sys.model.u_max(), c.days, c.steps_per_day,
                                 c.measurement_days, c.dosing_days);
    prob.sys.noise = default_noise(c.x0, c.theta, c.process_rel_sd, c.measurement_rel_sd);
  } catch (const InvalidArgument& e) {
    throw ConfigError("$", e.what());
  }
  prob.sys.cost.band_lo = c.band_lo;
  prob.sys.cost.band_hi = c.band_hi;
  prob.sys.estimator = c.estimator;
  if (!c.lambda || !c.lambda_hat || !c.trace_cap || !c.gamma) {
    const DerivedWeights w = derive_weights(prob.sys, prob.initial_chi());
    prob.sys.cost.lambda = c.lambda.value_or(w.lambda);
    prob.sys.cost.lambda_hat = c.lambda_hat.value_or(w.lambda_hat);
    prob.sys.cost.trace_cap = c.trace_cap.value_or(w.trace_cap);
    prob.sys.estimator.gamma = c.gamma.value_or(w.gamma);
  } else {
    prob.sys.cost.lambda = *c.lambda;
    prob.sys.cost.lambda_hat = *c.lambda_hat;
    prob.sys.cost.trace_cap = *c.trace_cap;
    prob.sys.estimator.gamma = *c.gamma;
  }
  prob.sys.cost.validate();
  prob.sys.estimator.validate();
  return prob;
}

// Published schema for GET /schema and the docs.
inline nlohmann::json config_schema() {
  using nlohmann::json;
  const json num = {{"type", "number"}};
  const json num_or_auto = {{"oneOf", json::array({num, {{"const", "auto"}}})}};
  const json vec8 = {{"type", "array"}, {"items", num}, {"minItems", 8}, {"maxItems", 8}};
  return {
      {"$schema", "https://json-schema.org/draft/2020-12/schema"},
      {"title", "dosewise model configuration"},
      {"type", "object"},
      {"required", {"schema_version"}},
      {"additionalProperties", false},
      {"properties",
       {{"schema_version", {{"const", kSchemaVersion}}},
        {"model",
         {{"type", "object"},
          {"properties",
           {{"theta", vec8}, {"x0", vec8}, {"epsilon", num}, {"beta", num}, {"bsa", num},
            {"dose_to_gut", num}, {"nominal_dose_per_m2", num},
            {"rates",
             {{"type", "object"},
              {"properties",
               {{"absorption", num}, {"elimination_mp", num}, {"elimination_tgn", num},
                {"death", num}}}}}}}}},
        {"calendar",
         {{"type", "object"},
          {"properties",
           {{"days", {{"type", "integer"}}},
            {"steps_per_day", {{"type", "integer"}}},
            {"measurement_days", {{"type", "array"}, {"items", {{"type", "integer"}}}}},
            {"dosing_days", {{"type", "integer"}}}}}}},
        {"noise",
         {{"type", "object"},
          {"properties", {{"process_rel_sd", num}, {"measurement_rel_sd", num}}}}},
        {"cost",
         {{"type", "object"},
          {"properties",
           {{"lambda", num_or_auto},
            {"lambda_hat", num_or_auto},
            {"trace_cap", num_or_auto},
            {"band", {{"type", "array"}, {"items", num}, {"minItems", 2}, {"maxItems", 2}}}}}}},
        {"estimator",
         {{"type", "object"},
          {"properties",
           {{"mode", {{"enum", {"gauss_newton", "identity"}}}},
            {"alpha", num},
            {"alpha_schedule", {{"type", "object"}, {"additionalProperties", num}}},
            {"gamma", num_or_auto},
            {"backtracking", {{"type", "boolean"}}},
            {"max_halvings", {{"type", "integer"}}},
            {"mask", {{"type", "array"}, {"items", {{"type", "boolean"}}}}}}}}},
        {"prior",
         {{"type", "object"},
          {"properties",
           {{"x_rel_sd", num}, {"randomize_theta", {{"type", "boolean"}}}, {"theta_rel_sd", num}}}}},
        {"filter",
         {{"type", "object"},
          {"properties", {{"particles", {{"type", "integer"}}}, {"ess_fraction", num}}}}},
        {"optimizer",
         {{"type", "object"},
          {"properties",
           {{"levels", {{"type", "array"}, {"items", num}}},
            {"blocks", {{"type", "array"}}},
            {"free_days", {{"type", "boolean"}}},
            {"scenarios", {{"type", "integer"}}}}}}},
        {"evaluation",
         {{"type", "object"},
          {"properties",
           {{"patients", {{"type", "integer"}}},
            {"perturbation", num},
            {"scenarios", {{"type", "integer"}}},
            {"particles", {{"type", "integer"}}}}}}}}}};
}

}  // namespace dosewise

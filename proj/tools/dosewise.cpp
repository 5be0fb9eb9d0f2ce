// dosewise: batch entry point (simulate, calibrate, fit, filter, optimize,
// evaluate, toy-dp, validate).
//
// Exit status: 0 ok, 1 validation failure or I/O error, 2 bad config or
// input, 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dosewise/config.hpp"
#include "dosewise/evaluation.hpp"
#include "dosewise/io.hpp"
#include "dosewise/service.hpp"
#include "dosewise/validation.hpp"

namespace {

using namespace dosewise;
using namespace dosewise::leukemia;
using nlohmann::json;

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

Level log_level() {
  const char* env = std::getenv("DOSEWISE_LOG");
  const std::string v = env ? env : "warn";
  if (v == "error") return Level::kError;
  if (v == "info") return Level::kInfo;
  if (v == "debug") return Level::kDebug;
  return Level::kWarn;
}

void log(Level level, const std::string& msg) {
  static const Level threshold = log_level();
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= threshold) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

struct Options {
  std::string config;
  std::uint64_t seed = 1;
  std::string out = ".";
  std::string format = "csv";
  std::optional<std::size_t> particles;
  std::optional<std::size_t> scenarios;
  unsigned threads = default_threads();
  std::string regimen;
  std::string measurements;
  std::string session;
  std::string policy = "both";
  std::optional<std::size_t> patients;
  int grid = 201;
};

struct Context {
  Config cfg;
  Problem prob;
};

Context load(const Options& o) {
  Context c;
  c.cfg = o.config.empty() ? default_config() : load_config(o.config);
  c.prob = build_problem(c.cfg);
  log(Level::kInfo, "config hash " + c.cfg.hash + ", lambda " + fmt(c.prob.sys.cost.lambda));
  return c;
}

std::string out_path(const Options& o, const std::string& stem) {
  std::filesystem::create_directories(o.out);
  return (std::filesystem::path(o.out) / (stem + "." + o.format)).string();
}

void emit(const Options& o, const std::string& stem, const std::string& bytes) {
  const std::string path = out_path(o, stem);
  write_file(path, bytes);
  std::cout << "wrote " << path << "\n";
}

std::string stamp_line(const ArtifactStamp& s) {
  return "# command=" + s.command + " config_hash=" + s.config_hash + " seed=" + std::to_string(s.seed) + "\n";
}

DoseRegimen load_regimen(const Options& o, const Problem& prob) {
  if (o.regimen.empty()) return DoseRegimen::constant(prob.sys.time, prob.sys.model.nominal_dose());
  json j;
  try {
    j = json::parse(read_file(o.regimen));
  } catch (const json::parse_error& e) {
    throw InvalidArgument(o.regimen + ": " + e.what());
  }
  if (j.is_object() && j.contains("regimen")) j = j["regimen"];
  return regimen_from_json(j, prob.sys.time);
}

std::vector<service::Measurement> load_measurements(const Options& o, const Problem& prob,
                                                    const DoseRegimen& regimen) {
  const auto rows = parse_measurements_csv(read_file(o.measurements));
  std::vector<service::Measurement> log;
  for (const auto& r : rows) {
    const int t = service::day_to_step(prob.sys.time, r.day);
    if (r.day < 0 || t > prob.sys.time.N || !prob.sys.time.is_measurement(t))
      throw InvalidArgument("measurements: day " + std::to_string(r.day) +
                            " is not on the measurement calendar");
    log.push_back({r.day, r.wbc, r.anc, regimen.daily});
  }
  return log;
}

std::size_t filter_particles(const Options& o, const Config& cfg) {
  return o.particles.value_or(cfg.filter.particles);
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Options& o) {
  const Context c = load(o);
  const DoseRegimen regimen = load_regimen(o, c.prob);
  const auto traj = simulate_augmented(c.prob.sys, c.prob.initial_chi(), regimen, o.seed);
  const ArtifactStamp stamp{c.cfg.hash, o.seed, "simulate"};
  emit(o, "trajectory",
       o.format == "csv" ? trajectory_csv(traj, stamp) : trajectory_json(traj, stamp).dump(1) + "\n");
  std::cout << "steps " << c.prob.sys.time.N << ", total cost " << fmt(traj.total_cost()) << "\n";
  return 0;
}

int cmd_calibrate(const Options& o) {
  const Context c = load(o);
  const auto& model = c.prob.sys.model;
  const RateBlock& r = model.rates();
  const double residual = model.drift(c.prob.x0, 0.0, c.prob.theta0).norm() / c.prob.x0.norm();
  const auto& cost = c.prob.sys.cost;
  std::vector<std::pair<std::string, double>> rows{
      {"absorption", r.absorption},
      {"elimination_mp", r.elimination_mp},
      {"elimination_tgn", r.elimination_tgn},
      {"transit_1", r.transit[0]},
      {"transit_2", r.transit[1]},
      {"transit_3", r.transit[2]},
      {"transit_4", r.transit[3]},
      {"death", r.death},
      {"volume_factor", r.volume_factor},
      {"equilibrium_relative_residual", residual},
      {"nominal_daily_dose", model.nominal_dose()},
      {"u_max", model.u_max()},
      {"lambda", cost.lambda},
      {"lambda_hat", cost.lambda_hat},
      {"trace_cap", cost.trace_cap},
      {"gamma", c.prob.sys.estimator.gamma}};
  const ArtifactStamp stamp{c.cfg.hash, o.seed, "calibrate"};
  if (o.format == "csv") {
    std::string s = stamp_line(stamp) + "quantity,value\n";
    for (const auto& [k, v] : rows) s += k + "," + fmt(v) + "\n";
    emit(o, "calibration", s);
  } else {
    json j = stamp_json(stamp);
    for (const auto& [k, v] : rows) j["values"][k] = v;
    emit(o, "calibration", j.dump(1) + "\n");
  }
  std::cout << "equilibrium relative residual " << fmt(residual) << "\n";
  return 0;
}

// Deterministic estimator pass: chi advances with zero process noise and the
// measured outputs drive theta_hat. Calendar days without a supplied
// measurement see the model's own prediction (zero residual).
int cmd_fit(const Options& o) {
  const Context c = load(o);
  const System& sys = c.prob.sys;
  const TimeStructure& time = sys.time;
  const DoseRegimen regimen = load_regimen(o, c.prob);

  std::vector<MeasurementRow> rows;
  std::optional<Params> theta_true;
  if (!o.measurements.empty()) {
    for (const auto& m : load_measurements(o, c.prob, regimen)) rows.push_back({m.day, m.wbc, m.anc});
  } else {
    // Synthetic patient 0 of the evaluation cohort.
    const auto seeds = patient_seeds(c.prob.theta0, c.cfg.evaluation.perturbation, o.seed, 0);
    theta_true = seeds.theta_true;
    const auto traj = simulate_closed_loop(sys, seeds.theta_true, c.prob.x0, c.prob.initial_chi(),
                                           regimen_policy<LeukemiaModel>(time, regimen), seeds.plant);
    for (const auto& r : traj.records)
      if (r.y) rows.push_back({DoseRegimen::day_of(time, r.t), (*r.y)(0), (*r.y)(1)});
  }
  std::map<int, Output> by_step;
  for (const auto& r : rows) {
    Output y;
    y << r.wbc, r.anc;
    by_step[service::day_to_step(time, r.day)] = y;
  }
  const std::optional<Output> y0 =
      by_step.count(0) ? std::optional<Output>(by_step.at(0)) : std::nullopt;
  Chi chi = Chi::initial(c.prob.x0, patient_theta0(c.prob.theta0, y0));
  const State zero = State::Zero();

  struct FitRow {
    int day;
    Output y, predicted;
    Params theta_hat;
  };
  std::vector<FitRow> fit;
  for (int t = 0; t < time.N; ++t) {
    const double u = regimen.dose_at(time, t);
    Output y = sys.model.output(chi.x, chi.theta_hat);
    const bool measured = by_step.count(t) > 0;
    if (measured) y = by_step.at(t);
    const Output predicted = sys.model.output(chi.x, chi.theta_hat);
    chi = sys.step_with_measurement(chi, u, zero, y, t);
    if (measured) fit.push_back({DoseRegimen::day_of(time, t), y, predicted, chi.theta_hat});
  }

  const ArtifactStamp stamp{c.cfg.hash, o.seed, o.measurements.empty() ? "fit synthetic" : "fit"};
  const auto& names = parameter_names();
  if (o.format == "csv") {
    std::string s = stamp_line(stamp) + "day,wbc,anc,predicted_wbc,predicted_anc";
    for (const auto& n : names) s += "," + n;
    s += "\n";
    for (const auto& r : fit) {
      s += std::to_string(r.day) + "," + fmt(r.y(0)) + "," + fmt(r.y(1)) + "," + fmt(r.predicted(0)) +
           "," + fmt(r.predicted(1));
      for (int i = 0; i < 8; ++i) s += "," + fmt(r.theta_hat(i));
      s += "\n";
    }
    emit(o, "fit", s);
  } else {
    json j = stamp_json(stamp);
    j["parameters"] = names;
    j["rows"] = json::array();
    for (const auto& r : fit)
      j["rows"].push_back({{"day", r.day},
                           {"y", vector_json(r.y)},
                           {"predicted", vector_json(r.predicted)},
                           {"theta_hat", vector_json(r.theta_hat)}});
    if (theta_true) j["theta_true"] = vector_json(*theta_true);
    emit(o, "fit", j.dump(1) + "\n");
  }
  if (!fit.empty())
    std::cout << "theta_p after day " << fit.back().day << ": " << fmt(fit.back().theta_hat(kThetaP))
              << (theta_true ? " (true " + fmt((*theta_true)(kThetaP)) + ")" : "") << "\n";
  return 0;
}

Belief belief_from_inputs(const Options& o, const Context& c, const DoseRegimen& regimen) {
  const std::size_t n = filter_particles(o, c.cfg);
  if (!o.measurements.empty())
    return service::replay(c.prob, load_measurements(o, c.prob, regimen), o.seed, n);
  // No data: condition on the nominal output at day 0 when it is on the calendar.
  const Output y0 = c.prob.sys.model.output(c.prob.x0, c.prob.theta0);
  return make_initial_belief(c.prob, c.prob.theta0, y0, n, o.seed);
}

std::string particles_csv(const Belief& z, const ArtifactStamp& stamp) {
  std::string s = stamp_line(stamp) + "weight";
  for (int i = 1; i <= 8; ++i) s += ",x" + std::to_string(i);
  for (int i = 1; i <= 8; ++i) s += ",theta_hat_" + std::to_string(i);
  s += "\n";
  for (std::size_t k = 0; k < z.size(); ++k) {
    s += fmt(z.weights[k]);
    for (int i = 0; i < 8; ++i) s += "," + fmt(z.particles[k].x(i));
    for (int i = 0; i < 8; ++i) s += "," + fmt(z.particles[k].theta_hat(i));
    s += "\n";
  }
  return s;
}

int cmd_filter(const Options& o) {
  Context c;
  Belief z;
  std::uint64_t seed = o.seed;
  if (!o.session.empty()) {
    json ex;
    try {
      ex = json::parse(read_file(o.session));
    } catch (const json::parse_error& e) {
      throw InvalidArgument(o.session + ": " + e.what());
    }
    c.cfg = parse_config(ex.at("config"));
    c.prob = build_problem(c.cfg);
    seed = ex.at("seed").get<std::uint64_t>();
    z = service::replay(c.prob, service::measurement_log(ex), seed, ex.at("particles").get<std::size_t>());
  } else {
    if (o.measurements.empty()) throw InvalidArgument("filter: --measurements or --session required");
    c = load(o);
    z = belief_from_inputs(o, c, load_regimen(o, c.prob));
  }
  const ArtifactStamp stamp{c.cfg.hash, seed, o.session.empty() ? "filter" : "filter session"};
  if (o.format == "csv") {
    emit(o, "belief", particles_csv(z, stamp));
  } else {
    json j = stamp_json(stamp);
    j["belief"] = belief_json(c.prob.sys, z);
    emit(o, "belief", j.dump(1) + "\n");
  }
  std::cout << "belief at t=" << z.t << ", ESS " << fmt(z.effective_sample_size()) << "\n";
  return 0;
}

int cmd_optimize(const Options& o) {
  const Context c = load(o);
  const System& sys = c.prob.sys;
  const DoseRegimen committed = load_regimen(o, c.prob);
  const Belief z = belief_from_inputs(o, c, committed);
  const int day = DoseRegimen::day_of(sys.time, z.t);
  if (day >= DoseRegimen::decision_days(sys.time))
    throw InvalidArgument("optimize: no decision days remain after the last measurement");
  const double nominal = sys.model.nominal_dose();
  const auto candidates =
      make_candidates(sys.time, nominal, candidate_grid(c.cfg.optimizer), &committed, day);
  const std::size_t n = o.scenarios.value_or(c.cfg.optimizer.scenarios);
  log(Level::kInfo, std::to_string(candidates.size()) + " candidates x " + std::to_string(n) + " scenarios");
  const auto res = optimize_regimen(sys, z, candidates, n, o.seed, o.threads);
  const ArtifactStamp stamp{c.cfg.hash, o.seed, "optimize scenarios=" + std::to_string(n)};
  if (o.format == "csv") {
    std::string s = stamp_line(stamp) + "index,total_dose,objective,mean_cost,se,mean_performance,"
                                        "mean_trace_fim,band_violation_hours";
    for (std::size_t d = 0; d < committed.daily.size(); ++d) s += ",day" + std::to_string(d);
    s += "\n";
    for (std::size_t i = 0; i < res.table.size(); ++i) {
      const auto& r = res.table[i];
      s += std::to_string(i) + "," + fmt(r.regimen.total()) + "," + fmt(r.objective) + "," +
           fmt(r.summary.cost.value) + "," + fmt(r.summary.cost.standard_error) + "," +
           fmt(r.summary.mean_performance) + "," + fmt(r.summary.mean_trace) + "," +
           fmt(r.summary.mean_violation_hours);
      for (double d : r.regimen.daily) s += "," + fmt(d);
      s += "\n";
    }
    emit(o, "optimization", s);
  } else {
    json j = stamp_json(stamp);
    j["result"] = optimization_json(res, nominal);
    j["from_day"] = day;
    emit(o, "optimization", j.dump(1) + "\n");
  }
  std::cout << "winner " << res.winner << ": " << regimen_json(res.best().regimen).dump()
            << " objective " << fmt(res.best().objective) << "\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  Context c = load(o);
  if (o.scenarios) c.cfg.evaluation.scenarios = *o.scenarios;
  if (o.particles) c.cfg.evaluation.particles = *o.particles;
  const std::size_t patients = o.patients.value_or(c.cfg.evaluation.patients);
  std::vector<PolicyKind> kinds;
  if (o.policy == "baseline" || o.policy == "both") kinds.push_back(PolicyKind::kBaseline);
  if (o.policy == "optimized" || o.policy == "both") kinds.push_back(PolicyKind::kOptimized);

  std::vector<EvaluationReport> reports;
  for (auto k : kinds) {
    log(Level::kInfo, "evaluating " + policy_name(k) + " on " + std::to_string(patients) + " patients");
    reports.push_back(evaluate_policy(c.prob, c.cfg, k, patients, o.seed, o.threads));
  }

  const ArtifactStamp stamp{c.cfg.hash, o.seed,
                            "evaluate policy=" + o.policy + " patients=" + std::to_string(patients) +
                                " scenarios=" + std::to_string(c.cfg.evaluation.scenarios) +
                                " particles=" + std::to_string(c.cfg.evaluation.particles)};
  if (o.format == "csv") {
    std::string s = stamp_line(stamp) +
                    "policy,patient,band_violation_hours,total_cost,total_dose_mg,theta_p_true,"
                    "clamped,degenerate_updates\n";
    for (const auto& rep : reports)
      for (const auto& p : rep.patients)
        s += rep.policy + "," + std::to_string(p.id) + "," + fmt(p.violation_hours) + "," +
             fmt(p.total_cost) + "," + fmt(p.total_dose) + "," + fmt(p.theta_true(kThetaP)) + "," +
             std::to_string(p.clamped) + "," + std::to_string(p.degenerate_updates) + "\n";
    emit(o, "evaluation", s);
  } else {
    json j = stamp_json(stamp);
    j["policies"] = json::array();
    for (const auto& rep : reports) {
      json pj = {{"policy", rep.policy},
                 {"mean_band_violation_hours", rep.mean_violation_hours()},
                 {"mean_cost", rep.mean_cost()},
                 {"patients", json::array()}};
      for (const auto& p : rep.patients)
        pj["patients"].push_back({{"patient", p.id},
                                  {"band_violation_hours", p.violation_hours},
                                  {"total_cost", p.total_cost},
                                  {"total_dose_mg", p.total_dose},
                                  {"daily_dose", p.daily},
                                  {"theta_true", vector_json(p.theta_true)},
                                  {"clamped", p.clamped},
                                  {"degenerate_updates", p.degenerate_updates}});
      j["policies"].push_back(std::move(pj));
    }
    emit(o, "evaluation", j.dump(1) + "\n");
  }

  std::cout << std::left << std::setw(10) << "policy" << std::setw(9) << "patient" << std::setw(16)
            << "violation_h" << "cost\n";
  for (const auto& rep : reports)
    for (const auto& p : rep.patients)
      std::cout << std::setw(10) << rep.policy << std::setw(9) << p.id << std::setw(16)
                << fmt(p.violation_hours) << fmt(p.total_cost) << "\n";
  for (const auto& rep : reports)
    std::cout << "mean " << rep.policy << ": violation hours " << fmt(rep.mean_violation_hours())
              << ", cost " << fmt(rep.mean_cost()) << "\n";
  return 0;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

int cmd_toy_dp(const Options& o) {
  if (o.grid < 2) throw InvalidArgument("toy-dp: --grid must be >= 2");
  const auto rows = validation::run_dp_suite(o.grid, o.seed);
  const ArtifactStamp stamp{"none", o.seed, "toy-dp grid=" + std::to_string(o.grid)};
  bool ok = true;
  if (o.format == "csv") {
    std::string s = stamp_line(stamp) +
                    "toy,states,horizon,measurement_times,decision_times,j0_dp,j0_grid,j0_enum,"
                    "abs_diff,grid_abs_diff,interpolation_bound,policies\n";
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& r = rows[k];
      s += std::to_string(k) + "," + std::to_string(r.states) + "," + std::to_string(r.horizon) + "," +
           join(r.measurement_times) + "," + join(r.decision_times) + "," + fmt(r.exact) + "," +
           fmt(r.grid) + "," + fmt(r.enumeration) + "," + fmt(std::abs(r.exact - r.enumeration)) +
           "," + fmt(std::abs(r.grid - r.enumeration)) + "," + fmt(r.bound) + "," +
           std::to_string(r.policies) + "\n";
    }
    emit(o, "toy_dp", s);
  } else {
    json j = stamp_json(stamp);
    j["grid"] = o.grid;
    j["toys"] = json::array();
    for (const auto& r : rows)
      j["toys"].push_back({{"states", r.states},
                           {"horizon", r.horizon},
                           {"measurement_times", r.measurement_times},
                           {"decision_times", r.decision_times},
                           {"j0_dp", r.exact},
                           {"j0_grid", r.grid},
                           {"j0_enum", r.enumeration},
                           {"interpolation_bound", r.bound},
                           {"policies", r.policies}});
    emit(o, "toy_dp", j.dump(1) + "\n");
  }
  auto cell = [](const std::string& v, int w) {
    std::ostringstream c;
    c << std::left << std::setw(w) << v << " ";
    return c.str();
  };
  std::cout << cell("toy", 4) << cell("states", 6) << cell("horizon", 7) << cell("T_y", 8)
            << cell("T_u", 6) << cell("J0 dp", 22) << cell("J0 enum", 22) << cell("|diff|", 22)
            << cell("|grid diff|", 22) << "bound\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const double diff = std::abs(r.exact - r.enumeration);
    const double gdiff = std::abs(r.grid - r.enumeration);
    ok = ok && diff <= 1e-6 && gdiff <= r.bound;
    std::cout << cell(std::to_string(k), 4) << cell(std::to_string(r.states), 6)
              << cell(std::to_string(r.horizon), 7) << cell(join(r.measurement_times), 8)
              << cell(join(r.decision_times), 6) << cell(fmt(r.exact), 22)
              << cell(fmt(r.enumeration), 22) << cell(fmt(diff), 22) << cell(fmt(gdiff), 22)
              << fmt(r.bound) << "\n";
  }
  std::cout << (ok ? "all toys within tolerance" : "MISMATCH") << "\n";
  return ok ? 0 : 1;
}

int cmd_validate(const Options& o) {
  const Context c = load(o);
  const auto results =
      validation::run_suite(c.prob, o.seed, o.particles.value_or(100000), o.threads);
  const ArtifactStamp stamp{c.cfg.hash, o.seed, "validate"};
  bool ok = true;
  for (const auto& r : results) {
    ok = ok && r.passed;
    log(Level::kInfo, r.name + " took " + fmt(r.seconds) + " s");
    std::cout << std::left << std::setw(12) << r.name << (r.passed ? "PASS  " : "FAIL  ") << r.detail
              << "\n";
  }
  if (o.format == "csv") {
    std::string s = stamp_line(stamp) + "check,passed,measured,threshold\n";
    for (const auto& r : results)
      s += r.name + "," + (r.passed ? "1" : "0") + "," + fmt(r.measured) + "," + fmt(r.threshold) + "\n";
    emit(o, "validation", s);
  } else {
    json j = stamp_json(stamp);
    j["checks"] = json::array();
    for (const auto& r : results)
      j["checks"].push_back({{"check", r.name},
                             {"passed", r.passed},
                             {"measured", r.measured},
                             {"threshold", r.threshold},
                             {"detail", r.detail}});
    emit(o, "validation", j.dump(1) + "\n");
  }
  return ok ? 0 : 1;
}

void error_json(const std::string& kind, const std::string& message, const std::string& path = "") {
  json e = {{"error", {{"kind", kind}, {"message", message}}}};
  if (!path.empty()) e["error"]["path"] = path;
  std::cerr << e.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dosewise: dose scheduling with information-aware control"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "model configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "64-bit seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--format", o.format, "artifact format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--particles", o.particles, "filter particles")->check(CLI::PositiveNumber);
    sub->add_option("--scenarios", o.scenarios, "Monte-Carlo scenarios")->check(CLI::PositiveNumber);
    sub->add_option("--threads", o.threads, "worker cap")->check(CLI::PositiveNumber);
  };
  auto regimen_opt = [&](CLI::App* sub) {
    sub->add_option("--regimen", o.regimen, "JSON array of daily doses (mg/day)")
        ->check(CLI::ExistingFile);
  };
  auto measurement_opt = [&](CLI::App* sub) {
    sub->add_option("--measurements", o.measurements, "CSV with day,wbc,anc")->check(CLI::ExistingFile);
  };

  auto* simulate = app.add_subcommand("simulate", "seeded run of the augmented system");
  common(simulate);
  regimen_opt(simulate);
  auto* calibrate = app.add_subcommand("calibrate", "equilibrium rates and derived weights");
  common(calibrate);
  auto* fit = app.add_subcommand("fit", "estimator pass over measurements");
  common(fit);
  regimen_opt(fit);
  measurement_opt(fit);
  auto* filter = app.add_subcommand("filter", "particle belief from measurements or a session export");
  common(filter);
  regimen_opt(filter);
  measurement_opt(filter);
  filter->add_option("--session", o.session, "exported session JSON")->check(CLI::ExistingFile);
  auto* optimize = app.add_subcommand("optimize", "candidate regimen search");
  common(optimize);
  regimen_opt(optimize);
  measurement_opt(optimize);
  auto* evaluate = app.add_subcommand("evaluate", "closed-loop evaluation on synthetic patients");
  common(evaluate);
  evaluate->add_option("--policy", o.policy, "policy")->check(CLI::IsMember({"baseline", "optimized", "both"}));
  evaluate->add_option("--patients", o.patients, "number of patients")->check(CLI::PositiveNumber);
  auto* toy_dp = app.add_subcommand("toy-dp", "belief DP versus policy enumeration on toys");
  common(toy_dp);
  toy_dp->add_option("--grid", o.grid, "grid points per simplex edge");
  auto* validate = app.add_subcommand("validate", "full oracle suite");
  common(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*calibrate) return cmd_calibrate(o);
    if (*fit) return cmd_fit(o);
    if (*filter) return cmd_filter(o);
    if (*optimize) return cmd_optimize(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*toy_dp) return cmd_toy_dp(o);
    if (*validate) return cmd_validate(o);
  } catch (const ConfigError& e) {
    error_json("config", e.what(), e.path());
    return 2;
  } catch (const InvalidArgument& e) {
    error_json("input", e.what());
    return 2;
  } catch (const TooLarge& e) {
    error_json("input", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    error_json("input", e.what());
    return 2;
  } catch (const DegenerateUpdate& e) {
    error_json("numerical", e.what());
    return 3;
  } catch (const CalibrationFailure& e) {
    error_json("numerical", e.what());
    return 3;
  } catch (const ImpossibleObservation& e) {
    error_json("numerical", e.what());
    return 3;
  } catch (const std::exception& e) {
    error_json("runtime", e.what());
    return 1;
  }
  return 0;
}

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dosewise/config.hpp"
#include "dosewise/evaluation.hpp"
#include "dosewise/io.hpp"
#include "dosewise/planning.hpp"

namespace dosewise::service {

using nlohmann::json;
using namespace dosewise::leukemia;

inline constexpr int kApiVersion = 1;

class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& msg) : std::runtime_error(msg), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

inline ServiceError not_found(const std::string& m) { return {404, m}; }
inline ServiceError conflict(const std::string& m) { return {409, m}; }
inline ServiceError unprocessable(const std::string& m) { return {422, m}; }

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Measurement {
  int day = 0;
  double wbc = 0.0;
  double anc = 0.0;
  std::vector<double> doses_assumed;  // regimen in force while the belief moved to this day
};

struct Job {
  std::string id;
  std::string status = "pending";  // pending | running | done | failed
  json result;
  std::string error;
};

struct Session {
  std::string id;
  json patient;
  Config config;
  Problem problem;
  std::uint64_t seed = 0;
  std::size_t particles = 0;
  std::vector<Measurement> measurements;
  std::optional<Belief> belief;
  json theta_hat;  // estimate after re-fitting to the latest measurement
  std::vector<json> decisions;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::string created, updated;
  std::mutex mutex;  // serializes every mutation of this session
};

// ---------------------------------------------------------------------------
// Pipeline pieces shared with the CLI replay.

// Re-fit preview: weighted mean of g_t(y, x, theta_hat) over the belief.
inline Params refit_theta(const Problem& prob, const Belief& z, const Output& y) {
  Params acc = Params::Zero();
  for (std::size_t i = 0; i < z.size(); ++i)
    acc += z.weights[i] * estimator_update(prob.sys.model, prob.sys.time, y, z.particles[i].x,
                                           z.particles[i].theta_hat, z.t, prob.sys.estimator);
  return acc;
}

inline int day_to_step(const TimeStructure& time, int day) {
  return static_cast<int>(std::lround(day / time.delta));
}

// Moves the belief to the measurement day and assimilates (wbc, anc). The
// random stream depends only on (seed, measurement index).
inline Belief assimilate(const Problem& prob, const std::optional<Belief>& current,
                         const Measurement& m, std::size_t index, std::uint64_t seed,
                         std::size_t particles) {
  const TimeStructure& time = prob.sys.time;
  const int t = day_to_step(time, m.day);
  Output y;
  y << m.wbc, m.anc;
  if (!current) {
    if (t == 0) return make_initial_belief(prob, patient_theta0(prob.theta0, y), y, particles, seed);
    Belief z = make_initial_belief(prob, prob.theta0, std::nullopt, particles, seed);
    return assimilate(prob, z, m, index, seed, particles);
  }
  DoseRegimen regimen{m.doses_assumed};
  const Kernel kernel = prob.kernel();
  CounterRng rng(seed, Stream::kProcess, 1000 + index);
  Belief z = *current;
  while (z.t < t) {
    const double u = regimen.dose_at(time, z.t);
    const std::optional<Output> obs = (z.t + 1 == t) ? std::optional<Output>(y) : std::nullopt;
    z = advance(kernel, z, u, obs, rng);
  }
  return z;
}

// Replays a measurement log; used by the service and by `dosewise filter
// --session`.
inline Belief replay(const Problem& prob, const std::vector<Measurement>& log, std::uint64_t seed,
                     std::size_t particles) {
  std::optional<Belief> z;
  for (std::size_t k = 0; k < log.size(); ++k) z = assimilate(prob, z, log[k], k, seed, particles);
  if (!z) return make_initial_belief(prob, prob.theta0, std::nullopt, particles, seed);
  return *z;
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const std::size_t idx =
      std::min(v.size() - 1, static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) -
                                 (q > 0.0 ? 1 : 0));
  return v[idx];
}

// Per-day 10/50/90% bands of mature WBC and ANC from belief z under a
// regimen, from z's day to the end of the horizon.
inline json forecast_bands(const Problem& prob, const Belief& z, const DoseRegimen& regimen,
                           std::size_t scenarios, std::uint64_t seed) {
  const auto& sys = prob.sys;
  const TimeStructure& time = sys.time;
  const int steps_per_day = static_cast<int>(std::lround(1.0 / time.delta));
  const int first_day = (z.t + steps_per_day - 1) / steps_per_day;
  const int last_day = time.N / steps_per_day;
  const int days = last_day - first_day + 1;
  std::vector<std::vector<double>> wbc(static_cast<std::size_t>(days), std::vector<double>(scenarios));
  auto anc = wbc;
  const Kernel kernel = prob.kernel();
  for (std::size_t k = 0; k < scenarios; ++k) {
    CounterRng rng(seed, Stream::kScenario, k);
    Chi chi = z.particles[static_cast<std::size_t>(sample_weighted(z.weights, rng))];
    for (int t = z.t;; ++t) {
      if (t % steps_per_day == 0) {
        const int d = t / steps_per_day - first_day;
        const Output y = sys.model.output(chi.x, chi.theta_hat);
        wbc[static_cast<std::size_t>(d)][k] = y(0);
        anc[static_cast<std::size_t>(d)][k] = y(1);
      }
      if (t == time.N) break;
      chi = propagate_particle(kernel, chi, regimen.dose_at(time, t), t,
                               t == z.t ? z.observation : std::optional<Output>{}, rng);
    }
  }
  json out = {{"days", json::array()},
              {"wbc", {{"p10", json::array()}, {"p50", json::array()}, {"p90", json::array()}}},
              {"anc", {{"p10", json::array()}, {"p50", json::array()}, {"p90", json::array()}}}};
  for (int d = 0; d < days; ++d) {
    out["days"].push_back(first_day + d);
    for (const char* q : {"p10", "p50", "p90"}) {
      const double level = q[1] == '1' ? 0.1 : (q[1] == '5' ? 0.5 : 0.9);
      out["wbc"][q].push_back(quantile(wbc[static_cast<std::size_t>(d)], level));
      out["anc"][q].push_back(quantile(anc[static_cast<std::size_t>(d)], level));
    }
  }
  out["band"] = {sys.cost.band_lo, sys.cost.band_hi};
  out["scenarios"] = scenarios;
  return out;
}

// ---------------------------------------------------------------------------

class SessionService {
 public:
  explicit SessionService(Config base, std::string snapshot_dir = "")
      : base_(std::move(base)), snapshot_dir_(std::move(snapshot_dir)) {
    if (!snapshot_dir_.empty()) std::filesystem::create_directories(snapshot_dir_);
  }

  ~SessionService() { wait_for_jobs(); }

  void wait_for_jobs() {
    std::vector<std::thread> pending;
    {
      std::lock_guard lock(jobs_mutex_);
      pending.swap(workers_);
    }
    for (auto& t : pending) t.join();
  }

  const Config& base_config() const { return base_; }

  // POST /sessions
  json create_session(const json& body) {
    if (!body.is_object()) throw unprocessable("body must be a JSON object");
    for (auto it = body.begin(); it != body.end(); ++it)
      if (it.key() != "bsa" && it.key() != "theta" && it.key() != "seed" && it.key() != "particles")
        throw unprocessable("unknown field '" + it.key() + "'");
    json cfg_json = base_.raw;
    if (body.contains("bsa")) {
      if (!body["bsa"].is_number() || !(body["bsa"].get<double>() > 0.0))
        throw unprocessable("bsa must be a positive number");
      cfg_json["model"]["bsa"] = body["bsa"];
    }
    if (body.contains("theta")) {
      const json& th = body["theta"];
      if (!th.is_object()) throw unprocessable("theta must be an object of named overrides");
      json values = cfg_json.contains("model") && cfg_json["model"].contains("theta")
                        ? cfg_json["model"]["theta"]
                        : json(std::vector<double>(base_.theta.data(), base_.theta.data() + 8));
      const auto& names = parameter_names();
      for (auto it = th.begin(); it != th.end(); ++it) {
        auto pos = std::find(names.begin(), names.end(), it.key());
        if (pos == names.end()) throw unprocessable("unknown parameter '" + it.key() + "'");
        if (!it.value().is_number()) throw unprocessable("parameter overrides must be numbers");
        values[static_cast<std::size_t>(pos - names.begin())] = it.value();
      }
      cfg_json["model"]["theta"] = values;
    }
    auto s = std::make_shared<Session>();
    try {
      s->config = parse_config(cfg_json);
      s->problem = build_problem(s->config);
    } catch (const ConfigError& e) {
      throw unprocessable(e.what());
    }
    if (body.contains("seed") && !non_negative_integer(body["seed"]))
      throw unprocessable("seed must be a non-negative integer");
    s->patient = body;
    s->seed = body.contains("seed") ? body["seed"].get<std::uint64_t>() : 1;
    s->particles = positive_count(body, "particles", s->config.filter.particles);
    s->created = s->updated = utc_now();
    {
      std::lock_guard lock(store_mutex_);
      s->id = "s" + std::to_string(++next_id_);
      sessions_[s->id] = s;
    }
    snapshot(*s);
    return summary(*s);
  }

  // POST /sessions/{id}/measurements
  json post_measurement(const std::string& id, const json& body) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (!body.is_object() || !body.contains("day") || !body["day"].is_number_integer() ||
        !body.contains("wbc") || !body["wbc"].is_number() || !body.contains("anc") ||
        !body["anc"].is_number())
      throw unprocessable("expected {\"day\": int, \"wbc\": number, \"anc\": number}");
    Measurement m;
    m.day = body["day"].get<int>();
    m.wbc = body["wbc"].get<double>();
    m.anc = body["anc"].get<double>();
    if (!(m.wbc > 0.0) || !(m.anc > 0.0) || !std::isfinite(m.wbc) || !std::isfinite(m.anc))
      throw unprocessable("wbc and anc must be positive cells per litre");
    const TimeStructure& time = s->problem.sys.time;
    const int t = day_to_step(time, m.day);
    if (m.day < 0 || t > time.N || !time.is_measurement(t))
      throw unprocessable("day " + std::to_string(m.day) + " is not on the measurement calendar");
    if (!s->measurements.empty() && m.day <= s->measurements.back().day)
      throw conflict("measurement days must be strictly increasing");
    if (s->measurements.empty() && time.is_measurement(0) && t != 0)
      throw conflict("the day-0 measurement must be posted first");
    m.doses_assumed = current_regimen(*s).daily;
    try {
      s->belief = assimilate(s->problem, s->belief, m, s->measurements.size(), s->seed, s->particles);
    } catch (const InvalidArgument& e) {
      throw unprocessable(std::string("cannot assimilate: ") + e.what());
    } catch (const DegenerateUpdate& e) {
      throw ServiceError(500, std::string(e.what()) + " (max log-likelihood " +
                                  std::to_string(e.max_loglik()) + ")");
    }
    s->measurements.push_back(m);
    Output y;
    y << m.wbc, m.anc;
    s->theta_hat = vector_json(refit_theta(s->problem, *s->belief, y));
    s->updated = utc_now();
    snapshot(*s);
    return summary(*s);
  }

  // POST /sessions/{id}/forecast
  json forecast(const std::string& id, const json& body) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (!body.is_object()) throw unprocessable("body must be a JSON object");
    DoseRegimen regimen = current_regimen(*s);
    if (body.contains("regimen")) regimen = parse_regimen(*s, body["regimen"]);
    const std::size_t scenarios = positive_count(body, "scenarios", 200);
    const Belief z = belief_or_prior(*s);
    json out = forecast_bands(s->problem, z, regimen, scenarios, s->seed ^ 0x5eedULL);
    out["regimen"] = regimen_json(regimen);
    out["session"] = s->id;
    return out;
  }

  // POST /sessions/{id}/optimize: starts a job and returns its handle.
  json optimize(const std::string& id, const json& body) {
    auto s = find(id);
    if (!body.is_object()) throw unprocessable("body must be a JSON object");
    const std::size_t scenarios = positive_count(body, "scenarios", s->config.optimizer.scenarios);
    auto job = std::make_shared<Job>();
    Belief z;
    DoseRegimen committed;
    {
      std::lock_guard lock(s->mutex);
      job->id = "j" + std::to_string(s->jobs.size() + 1);
      s->jobs[job->id] = job;
      z = belief_or_prior(*s);
      committed = current_regimen(*s);
    }
    auto work = [this, s, job, z, committed, scenarios] {
      {
        std::lock_guard lock(jobs_mutex_);
        job->status = "running";
      }
      json result;
      std::string error;
      try {
        result = run_optimization(*s, z, committed, scenarios);
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::lock_guard lock(jobs_mutex_);
      if (error.empty()) {
        job->result = std::move(result);
        job->status = "done";
      } else {
        job->error = error;
        job->status = "failed";
      }
      jobs_cv_.notify_all();
    };
    {
      std::lock_guard lock(jobs_mutex_);
      workers_.emplace_back(work);
    }
    return {{"job", job->id}, {"status", "pending"}, {"session", s->id}};
  }

  // GET /sessions/{id}/jobs/{job}
  json job_status(const std::string& id, const std::string& job_id) {
    auto s = find(id);
    std::shared_ptr<Job> job;
    {
      std::lock_guard lock(s->mutex);
      auto it = s->jobs.find(job_id);
      if (it == s->jobs.end()) throw not_found("unknown job " + job_id);
      job = it->second;
    }
    std::lock_guard lock(jobs_mutex_);
    json out = {{"job", job->id}, {"status", job->status}};
    if (job->status == "done") out["result"] = job->result;
    if (job->status == "failed") out["error"] = job->error;
    return out;
  }

  // Blocks until the job leaves pending/running.
  json wait_job(const std::string& id, const std::string& job_id) {
    auto s = find(id);
    std::shared_ptr<Job> job;
    {
      std::lock_guard lock(s->mutex);
      job = s->jobs.at(job_id);
    }
    std::unique_lock lock(jobs_mutex_);
    jobs_cv_.wait(lock, [&] { return job->status == "done" || job->status == "failed"; });
    lock.unlock();
    return job_status(id, job_id);
  }

  // POST /sessions/{id}/decisions
  json record_decision(const std::string& id, const json& body) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (!body.is_object() || !body.contains("regimen"))
      throw unprocessable("expected {\"regimen\": [daily doses]}");
    const DoseRegimen r = parse_regimen(*s, body["regimen"]);
    json entry = {{"index", s->decisions.size()},
                  {"regimen", regimen_json(r)},
                  {"after_measurements", s->measurements.size()}};
    if (body.contains("note")) {
      if (!body["note"].is_string()) throw unprocessable("note must be a string");
      entry["note"] = body["note"];
    }
    s->decisions.push_back(entry);
    s->updated = utc_now();
    snapshot(*s);
    return {{"session", s->id}, {"decision", entry}, {"acknowledged", true}};
  }

  // GET /sessions/{id}
  json get_session(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return summary(*s);
  }

  // GET /sessions/{id}/export
  json export_session(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return export_json(*s);
  }

  static json schema() {
    return {{"api_version", kApiVersion},
            {"config", config_schema()},
            {"requests",
             {{"POST /sessions",
               {{"type", "object"},
                {"properties",
                 {{"bsa", {{"type", "number"}}},
                  {"theta", {{"type", "object"}}},
                  {"seed", {{"type", "integer"}}},
                  {"particles", {{"type", "integer"}}}}}}},
              {"POST /sessions/{id}/measurements",
               {{"type", "object"},
                {"required", {"day", "wbc", "anc"}},
                {"properties",
                 {{"day", {{"type", "integer"}}},
                  {"wbc", {{"type", "number"}}},
                  {"anc", {{"type", "number"}}}}}}},
              {"POST /sessions/{id}/forecast",
               {{"type", "object"},
                {"properties",
                 {{"regimen", {{"type", "array"}, {"items", {{"type", "number"}}}}},
                  {"scenarios", {{"type", "integer"}}}}}}},
              {"POST /sessions/{id}/optimize",
               {{"type", "object"}, {"properties", {{"scenarios", {{"type", "integer"}}}}}}},
              {"POST /sessions/{id}/decisions",
               {{"type", "object"},
                {"required", {"regimen"}},
                {"properties",
                 {{"regimen", {{"type", "array"}, {"items", {{"type", "number"}}}}},
                  {"note", {{"type", "string"}}}}}}}}}};
  }

  // Idempotency: a retried request with the same key gets the first answer.
  std::optional<std::pair<int, std::string>> lookup_idempotent(const std::string& key) {
    std::lock_guard lock(store_mutex_);
    auto it = idempotent_.find(key);
    if (it == idempotent_.end()) return std::nullopt;
    return it->second;
  }
  void remember_idempotent(const std::string& key, int status, const std::string& body) {
    std::lock_guard lock(store_mutex_);
    idempotent_.emplace(key, std::make_pair(status, body));
  }

 private:
  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lock(store_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw not_found("unknown session " + id);
    return it->second;
  }

  static bool non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
  }

  static std::size_t positive_count(const json& body, const char* key, std::size_t fallback) {
    if (!body.contains(key)) return fallback;
    if (!non_negative_integer(body[key]) || body[key].get<std::size_t>() == 0)
      throw unprocessable(std::string(key) + " must be a positive integer");
    return body[key].get<std::size_t>();
  }

  static DoseRegimen parse_regimen(const Session& s, const json& j) {
    try {
      return regimen_from_json(j, s.problem.sys.time);
    } catch (const InvalidArgument& e) {
      throw unprocessable(e.what());
    }
  }

  static DoseRegimen nominal_regimen(const Session& s) {
    return DoseRegimen::constant(s.problem.sys.time, s.problem.sys.model.nominal_dose());
  }

  static DoseRegimen current_regimen(const Session& s) {
    if (s.decisions.empty()) return nominal_regimen(s);
    DoseRegimen r;
    r.daily = s.decisions.back()["regimen"].get<std::vector<double>>();
    return r;
  }

  static Belief belief_or_prior(const Session& s) {
    if (s.belief) return *s.belief;
    if (s.problem.sys.time.is_measurement(0))
      throw conflict("post the day-0 measurement before forecasting or optimizing");
    return make_initial_belief(s.problem, s.problem.theta0, std::nullopt, s.particles, s.seed);
  }

  static json run_optimization(const Session& s, const Belief& z, const DoseRegimen& committed,
                               std::size_t scenarios) {
    const auto& time = s.problem.sys.time;
    const double nominal = s.problem.sys.model.nominal_dose();
    int day = DoseRegimen::day_of(time, z.t);
    const int days = DoseRegimen::decision_days(time);
    if (day >= days) throw conflict("no decision days remain");
    const auto candidates =
        make_candidates(time, nominal, candidate_grid(s.config.optimizer), &committed, day);
    const std::uint64_t seed = s.seed ^ 0x0b7ULL;
    const auto res = optimize_regimen(s.problem.sys, z, candidates, scenarios, seed, 1);
    json out = optimization_json(res, nominal);
    DoseRegimen nominal_plan = committed;
    for (int d = day; d < days; ++d) nominal_plan.daily[static_cast<std::size_t>(d)] = nominal;
    const auto base = rollout_value(s.problem.sys, z, nominal_plan, scenarios, seed, 1);
    out["nominal"] = {{"regimen", regimen_json(nominal_plan)},
                      {"mean_cost", base.cost.value},
                      {"se", base.cost.standard_error},
                      {"mean_trace_fim", base.mean_trace},
                      {"band_violation_hours", base.mean_violation_hours}};
    out["from_day"] = day;
    return out;
  }

  json summary(const Session& s) const {
    json j = {{"session", s.id},
              {"api_version", kApiVersion},
              {"config_hash", s.config.hash},
              {"seed", s.seed},
              {"particles", s.particles},
              {"patient", s.patient},
              {"measurements", json::array()},
              {"decisions", s.decisions},
              {"u_max", s.problem.sys.model.u_max()},
              {"nominal_daily_dose", s.problem.sys.model.nominal_dose()},
              {"band", {s.problem.sys.cost.band_lo, s.problem.sys.cost.band_hi}},
              {"measurement_days", json::array()},
              {"created", s.created},
              {"updated", s.updated}};
    const int steps_per_day = static_cast<int>(std::lround(1.0 / s.problem.sys.time.delta));
    for (int t : s.problem.sys.time.measurement_times) j["measurement_days"].push_back(t / steps_per_day);
    for (const auto& m : s.measurements)
      j["measurements"].push_back({{"day", m.day}, {"wbc", m.wbc}, {"anc", m.anc}});
    if (s.belief) {
      j["belief"] = belief_json(s.problem.sys, *s.belief);
      j["theta_hat"] = s.theta_hat;
    } else {
      j["belief"] = nullptr;
      j["theta_hat"] = vector_json(s.problem.theta0);
    }
    return j;
  }

  json export_json(const Session& s) const {
    json j = summary(s);
    j["config"] = s.config.raw;
    json log = json::array();
    for (const auto& m : s.measurements)
      log.push_back({{"day", m.day}, {"wbc", m.wbc}, {"anc", m.anc}, {"doses_assumed", m.doses_assumed}});
    j["measurement_log"] = std::move(log);
    return j;
  }

  void snapshot(const Session& s) const {
    if (snapshot_dir_.empty()) return;
    write_file((std::filesystem::path(snapshot_dir_) / (s.id + ".json")).string(),
               export_json(s).dump(2));
  }

  Config base_;
  std::string snapshot_dir_;
  std::mutex store_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::pair<int, std::string>> idempotent_;
  std::size_t next_id_ = 0;

  std::mutex jobs_mutex_;
  std::condition_variable jobs_cv_;
  std::vector<std::thread> workers_;
};

// Measurement log from an exported session.
inline std::vector<Measurement> measurement_log(const json& exported) {
  std::vector<Measurement> log;
  for (const auto& e : exported.at("measurement_log")) {
    Measurement m;
    m.day = e.at("day").get<int>();
    m.wbc = e.at("wbc").get<double>();
    m.anc = e.at("anc").get<double>();
    m.doses_assumed = e.at("doses_assumed").get<std::vector<double>>();
    log.push_back(m);
  }
  return log;
}

}  // namespace dosewise::service

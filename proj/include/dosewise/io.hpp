#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dosewise/augmented.hpp"
#include "dosewise/config.hpp"
#include "dosewise/planning.hpp"

namespace dosewise {

// Shortest round-trip decimal form; identical bytes on every run.
inline std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct ArtifactStamp {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string command;
};

inline nlohmann::json stamp_json(const ArtifactStamp& s) {
  return {{"schema_version", kSchemaVersion},
          {"command", s.command},
          {"config_hash", s.config_hash},
          {"seed", s.seed}};
}

// Column order of every trajectory export.
template <Model M>
std::vector<std::string> trajectory_columns() {
  std::vector<std::string> cols{"t_hours"};
  for (int i = 1; i <= M::n; ++i) cols.push_back("x" + std::to_string(i));
  for (int i = 1; i <= M::p; ++i) cols.push_back("theta_hat_" + std::to_string(i));
  cols.push_back("u");
  for (int i = 1; i <= M::m; ++i) cols.push_back("y" + std::to_string(i));
  cols.push_back("stage_cost");
  return cols;
}

// CSV: one comment line with the stamp, a header, then one row per t.
// y cells are empty off the measurement calendar; the t = N row carries the
// terminal cost and an empty u.
template <Model M>
std::string trajectory_csv(const Trajectory<M>& traj, const ArtifactStamp& stamp) {
  std::ostringstream out;
  out << "# command=" << stamp.command << " config_hash=" << stamp.config_hash
      << " seed=" << stamp.seed << "\n";
  const auto cols = trajectory_columns<M>();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  const int N = traj.records.empty() ? 0 : traj.records.back().t;
  for (const auto& r : traj.records) {
    out << fmt(r.t * traj.delta * 24.0);
    for (int i = 0; i < M::n; ++i) out << "," << fmt(r.chi.x(i));
    for (int i = 0; i < M::p; ++i) out << "," << fmt(r.chi.theta_hat(i));
    out << "," << (r.t < N ? fmt(r.u) : "");
    for (int i = 0; i < M::m; ++i) out << "," << (r.y ? fmt((*r.y)(i)) : "");
    out << "," << fmt(r.cost) << "\n";
  }
  return out.str();
}

template <Model M>
nlohmann::json trajectory_json(const Trajectory<M>& traj, const ArtifactStamp& stamp) {
  nlohmann::json j = stamp_json(stamp);
  j["columns"] = trajectory_columns<M>();
  nlohmann::json rows = nlohmann::json::array();
  const int N = traj.records.empty() ? 0 : traj.records.back().t;
  for (const auto& r : traj.records) {
    nlohmann::json row = nlohmann::json::array();
    row.push_back(r.t * traj.delta * 24.0);
    for (int i = 0; i < M::n; ++i) row.push_back(r.chi.x(i));
    for (int i = 0; i < M::p; ++i) row.push_back(r.chi.theta_hat(i));
    row.push_back(r.t < N ? nlohmann::json(r.u) : nlohmann::json(nullptr));
    for (int i = 0; i < M::m; ++i)
      row.push_back(r.y ? nlohmann::json((*r.y)(i)) : nlohmann::json(nullptr));
    row.push_back(r.cost);
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  j["total_cost"] = traj.total_cost();
  j["clamped_controls"] = traj.clamped_controls;
  return j;
}

template <class Vec>
nlohmann::json vector_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline nlohmann::json regimen_json(const DoseRegimen& r) { return r.daily; }

inline DoseRegimen regimen_from_json(const nlohmann::json& j, const TimeStructure& time) {
  if (!j.is_array()) throw InvalidArgument("regimen: expected an array of daily doses");
  DoseRegimen r;
  for (const auto& v : j) {
    if (!v.is_number()) throw InvalidArgument("regimen: doses must be numbers");
    r.daily.push_back(v.get<double>());
  }
  r.validate(time);
  return r;
}

inline nlohmann::json optimization_json(const OptimizationResult& res, double nominal) {
  nlohmann::json table = nlohmann::json::array();
  for (std::size_t i = 0; i < res.table.size(); ++i) {
    const auto& c = res.table[i];
    table.push_back({{"index", i},
                     {"daily_dose", regimen_json(c.regimen)},
                     {"total_dose", c.regimen.total()},
                     {"objective", c.objective},
                     {"mean_cost", c.summary.cost.value},
                     {"se", c.summary.cost.standard_error},
                     {"mean_performance", c.summary.mean_performance},
                     {"mean_trace_fim", c.summary.mean_trace},
                     {"band_violation_hours", c.summary.mean_violation_hours}});
  }
  return {{"winner", res.winner},
          {"regimen", regimen_json(res.best().regimen)},
          {"lambda", res.lambda},
          {"scenarios", res.scenarios},
          {"scenario_seed", res.seed},
          {"nominal_daily_dose", nominal},
          {"candidates", std::move(table)}};
}

// Belief summary: weighted moments plus the heaviest particles.
template <Model M>
nlohmann::json belief_json(const AugmentedSystem<M>& sys, const AugmentedBelief<M>& z,
                           std::size_t top_k = 5) {
  const auto mean_x = belief_mean<M>(z, [](const auto& c) { return c.x; });
  const auto mean_th = belief_mean<M>(z, [](const auto& c) { return c.theta_hat; });
  const auto mean_y = belief_mean<M>(z, [&](const auto& c) {
    return typename M::Output(sys.model.output(c.x, c.theta_hat));
  });
  typename M::State var_x = M::State::Zero();
  for (std::size_t i = 0; i < z.size(); ++i)
    var_x += z.weights[i] * (z.particles[i].x - mean_x).cwiseAbs2();
  std::vector<std::size_t> order(z.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return z.weights[a] > z.weights[b]; });
  nlohmann::json top = nlohmann::json::array();
  for (std::size_t k = 0; k < std::min(top_k, order.size()); ++k) {
    const auto& c = z.particles[order[k]];
    top.push_back({{"weight", z.weights[order[k]]},
                   {"x", vector_json(c.x)},
                   {"theta_hat", vector_json(c.theta_hat)}});
  }
  return {{"t", z.t},
          {"particles", z.size()},
          {"ess", z.effective_sample_size()},
          {"mean_x", vector_json(mean_x)},
          {"sd_x", vector_json(var_x.cwiseSqrt())},
          {"mean_theta_hat", vector_json(mean_th)},
          {"mean_output", vector_json(mean_y)},
          {"top", std::move(top)}};
}

struct MeasurementRow {
  int day = 0;
  double wbc = 0.0;
  double anc = 0.0;
};

// "day,wbc,anc" with a header line; '#' lines and blank lines are skipped.
inline std::vector<MeasurementRow> parse_measurements_csv(const std::string& text) {
  std::vector<MeasurementRow> rows;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      if (line != "day,wbc,anc")
        throw InvalidArgument("measurements: expected header 'day,wbc,anc'");
      header = false;
      continue;
    }
    MeasurementRow r;
    char c1 = 0, c2 = 0;
    std::istringstream fields(line);
    if (!(fields >> r.day >> c1 >> r.wbc >> c2 >> r.anc) || c1 != ',' || c2 != ',')
      throw InvalidArgument("measurements: malformed line " + std::to_string(lineno));
    if (!(r.wbc > 0.0) || !(r.anc > 0.0))
      throw InvalidArgument("measurements: counts must be positive (line " +
                            std::to_string(lineno) + ")");
    if (!rows.empty() && r.day <= rows.back().day)
      throw InvalidArgument("measurements: days must be strictly increasing");
    rows.push_back(r);
  }
  return rows;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << bytes;
}

}  // namespace dosewise

// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dosewise/config.hpp"
#include "dosewise/evaluation.hpp"
#include "dosewise/io.hpp"
#include "dosewise/validation.hpp"

namespace fs = std::filesystem;
using namespace dosewise;
using namespace dosewise::leukemia;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double budget_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool ok = o.passed;
  if (budget_seconds > 0 && secs > budget_seconds) {
    ok = false;
    o.detail += " (over time budget)";
  }
  if (!ok) ++failures;
  std::printf("%s  %-24s %s [%.1fs]\n", ok ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

Outcome from(const validation::CheckResult& r) { return {r.passed, r.detail}; }

int shell(const std::string& cmd) {
  const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

// Runs a CLI command twice into separate directories and compares every
// artifact byte for byte.
Outcome reproducible(const fs::path& root, const std::vector<std::string>& commands) {
  std::ostringstream msg;
  bool ok = true;
  std::size_t files = 0;
  for (std::size_t k = 0; k < commands.size(); ++k) {
    for (const char* format : {"csv", "json"}) {
      const fs::path a = root / (std::to_string(k) + format + "a");
      const fs::path b = root / (std::to_string(k) + format + "b");
      const std::string base = std::string(DOSEWISE_CLI) + " " + commands[k] + " --format " + format;
      const int ca = shell(base + " --out " + a.string());
      const int cb = shell(base + " --out " + b.string());
      if (ca != cb || !fs::exists(a)) {
        ok = false;
        msg << "'" << commands[k] << "' exit " << ca << "/" << cb << "; ";
        continue;
      }
      for (const auto& entry : fs::directory_iterator(a)) {
        const fs::path other = b / entry.path().filename();
        ++files;
        if (!fs::exists(other) || read_file(entry.path().string()) != read_file(other.string())) {
          ok = false;
          msg << entry.path().filename().string() << " differs; ";
        }
      }
    }
  }
  msg << commands.size() << " commands x 2 formats, " << files << " artifacts compared";
  return {ok, msg.str()};
}

}  // namespace

int main() {
  const std::string config_path = DOSEWISE_CONFIG_DIR "/leukemia.json";
  const Config cfg = load_config(config_path);
  const Problem prob = build_problem(cfg);
  const std::uint64_t seed = 1;

  criterion("sensitivity-504", 60, [&] {
    return from(validation::check_sensitivity(prob, prob.sys.time.N, seed));
  });
  criterion("equilibrium", 0, [&] { return from(validation::check_equilibrium(prob)); });
  criterion("fim-structure", 0, [&] { return from(validation::check_fim(prob, 1000, seed)); });
  criterion("estimator", 0, [&] { return from(validation::check_estimator(prob, 100, seed)); });
  criterion("filter-equivalence", 300, [&] {
    return from(validation::check_filter(20, 100000, seed, default_threads()));
  });
  criterion("dp-vs-enumeration", 0, [&] { return from(validation::check_dp(201, seed)); });

  criterion("dual-control", 0, [&] {
    const Output y0 = prob.sys.model.output(prob.x0, prob.theta0);
    const Belief z = make_initial_belief(prob, prob.theta0, y0, cfg.filter.particles, seed);
    const auto candidates = make_candidates(prob.sys.time, prob.sys.model.nominal_dose(),
                                            candidate_grid(cfg.optimizer));
    auto res = optimize_regimen(prob.sys, z, candidates, 500, seed, default_threads());
    const std::size_t with_info = res.winner;
    const std::size_t without = select_candidate(res.table, 0.0);
    const double tr_info = res.table[with_info].summary.mean_trace;
    const double tr_plain = res.table[without].summary.mean_trace;
    std::ostringstream msg;
    msg << candidates.size() << " candidates x 500 scenarios, lambda " << prob.sys.cost.lambda
        << ": trace " << tr_info << " (#" << with_info << ") vs " << tr_plain << " at lambda 0 (#"
        << without << ")";
    return Outcome{candidates.size() == 36 && tr_info >= tr_plain, msg.str()};
  });

  criterion("closed-loop", 1800, [&] {
    const std::size_t patients = cfg.evaluation.patients;
    const auto base = evaluate_policy(prob, cfg, PolicyKind::kBaseline, patients, seed, default_threads());
    const auto opt = evaluate_policy(prob, cfg, PolicyKind::kOptimized, patients, seed, default_threads());
    std::ostringstream msg;
    msg << patients << " patients: optimized " << opt.mean_violation_hours() << " h vs baseline "
        << base.mean_violation_hours() << " h band violation";
    return Outcome{patients == 50 && opt.mean_violation_hours() <= base.mean_violation_hours(),
                   msg.str()};
  });

  criterion("cli-reproducibility", 0, [&] {
    const fs::path root = fs::temp_directory_path() / "dosewise_acceptance_repro";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string m = (root / "m.csv").string();
    write_file(m, "day,wbc,anc\n0,2.9e9,1.4e9\n7,2.4e9,1.1e9\n");
    const std::string c = " --config " + config_path + " --seed 11";
    const Outcome o = reproducible(root, {
        "simulate" + c,
        "calibrate" + c,
        "fit" + c + " --measurements " + m,
        "filter" + c + " --measurements " + m + " --particles 200",
        "optimize" + c + " --measurements " + m + " --particles 200 --scenarios 50",
        "evaluate" + c + " --patients 2",
        "toy-dp" + c + " --grid 51",
        "validate" + c + " --particles 20000",
    });
    fs::remove_all(root);
    return o;
  });

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}

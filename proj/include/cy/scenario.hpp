#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cy/problem.hpp"

namespace cy {

/// A scenario file: problem source, solver selection and post-hoc checks.
///
///   {
///     "name": "negative-basic", "seed": 1,
///     "problem": {"n": 1, "grid": {"points": 64}, "params": {"a": 0.1},
///                 "scal": "-1 + a*cos(x1)", "lee": ["0.1*cos(x2)", "0"]},
///     "initial": "0",
///     "solver": {"kind": "flow", "lambda": -1, "t_max": 100},
///     "checks": ["converged", {"name": "residual", "max": 1e-9}]
///   }
///
/// Field data may come from {"file": "stem"} (binary + sidecar) or
/// {"csv": "path"} instead of an expression; paths resolve against the
/// scenario file's directory.
struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  nlohmann::json config;  // full document after overrides
  std::filesystem::path base_dir;

  static Scenario from_json(nlohmann::json doc, std::filesystem::path base_dir = {});
  static Scenario load(const std::filesystem::path& file);

  /// Overrides used by the CLI flags.
  void set_seed(std::uint64_t seed);
  void set_grid_points(int points);
  /// Sets a dot-separated path such as "solver.lambda" or "problem.params.a".
  void set_param(const std::string& dot_path, const nlohmann::json& value);

  ProblemSpec build_problem() const;
};

struct CheckOutcome {
  std::string name;
  std::string outcome;  // pass, fail or skipped
  double measured = 0.0;
  std::string detail;
};

struct ScenarioResult {
  std::string name;
  std::string solver;
  std::string status;  // solver status, "Refused" or "Error"
  std::optional<SolverReport> report;
  std::string error_kind;
  std::string error_message;
  std::vector<CheckOutcome> checks;
  /// Pairwise sup differences for the cross solver, keyed "a|b".
  nlohmann::json agreement;
  double wall_time = 0.0;
  bool config_error = false;
  bool solver_error = false;

  bool checks_passed() const;
  /// 0 all checks pass, 1 check failure, 2 config error, 3 solver error.
  int exit_code() const;
};

/// Runs gates, the solver and every declared check, writing report.json,
/// checks.json, timing.json and solver-specific CSV/field files to out_dir.
ScenarioResult run_scenario(const Scenario& s, const std::filesystem::path& out_dir);

struct SweepResult {
  std::vector<ScenarioResult> entries;
  int exit_code() const;
};

/// One run per value, each in out_dir/<index>; summary.csv holds
/// param,converged,lambda_star,residual,rate.
SweepResult sweep(const Scenario& base, const std::string& param, const std::vector<nlohmann::json>& values,
                  const std::filesystem::path& out_dir);

struct SuiteResult {
  std::vector<ScenarioResult> entries;
  int exit_code() const;
};

/// Every *.json in dir, run in parallel (CY_THREADS caps the worker count),
/// each into out_dir/<name>; writes summary.csv and agreement.json at the end.
SuiteResult run_suite(const std::filesystem::path& dir, const std::filesystem::path& out_dir,
                      std::optional<std::uint64_t> seed = std::nullopt, std::optional<int> grid_points = std::nullopt);

/// Worker count from CY_THREADS, else the hardware concurrency.
int suite_threads();

}  // namespace cy

// cyamabe: run scenarios, sweeps and suites; render trace plots.
#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "cy/error.hpp"
#include "cy/plots.hpp"
#include "cy/scenario.hpp"

namespace fs = std::filesystem;

namespace {

void print_entry(const cy::ScenarioResult& r, bool quiet) {
  if (quiet) return;
  std::cout << r.name << ": " << r.status;
  if (!r.error_message.empty()) std::cout << " (" << r.error_message << ")";
  std::cout << "\n";
  for (const auto& c : r.checks)
    std::cout << "  " << c.outcome << "  " << c.name << "  " << c.measured << (c.detail.empty() ? "" : "  ")
              << c.detail << "\n";
}

std::vector<nlohmann::json> parse_values(const std::string& csv) {
  std::vector<nlohmann::json> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(item));
    } catch (const nlohmann::json::exception&) {
      out.push_back(item);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chern-Yamabe solver suite"};
  app.require_subcommand(1);
  std::string out = "results";
  std::optional<std::uint64_t> seed;
  std::optional<int> grid;
  bool quiet = false;
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "override the scenario seed");
  app.add_option("--grid", grid, "override grid points per axis");
  app.add_flag("--quiet", quiet, "only report through the exit code");

  std::string scenario_file, param, values, dir;
  auto* run = app.add_subcommand("run", "run one scenario");
  run->add_option("scenario", scenario_file)->required();
  auto* sw = app.add_subcommand("sweep", "run a scenario once per parameter value");
  sw->add_option("scenario", scenario_file)->required();
  sw->add_option("--param", param, "dot path into the scenario, e.g. solver.lambda")->required();
  sw->add_option("--values", values, "comma separated values")->required();
  auto* suite = app.add_subcommand("suite", "run every scenario in a directory");
  suite->add_option("dir", dir)->required();
  auto* plots = app.add_subcommand("plots", "write SVG charts for every trace under a result directory");
  plots->add_option("dir", dir)->required();
  for (auto* sub : {run, sw, suite, plots}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    auto load = [&]() {
      auto s = cy::Scenario::load(scenario_file);
      if (seed) s.set_seed(*seed);
      if (grid) s.set_grid_points(*grid);
      return s;
    };
    if (*run) {
      auto s = load();
      auto r = cy::run_scenario(s, fs::path(out) / s.name);
      print_entry(r, quiet);
      return r.exit_code();
    }
    if (*sw) {
      auto s = load();
      auto r = cy::sweep(s, param, parse_values(values), fs::path(out) / s.name);
      for (const auto& e : r.entries) print_entry(e, quiet);
      return r.exit_code();
    }
    if (*suite) {
      auto r = cy::run_suite(dir, out, seed, grid);
      for (const auto& e : r.entries) print_entry(e, quiet);
      if (!quiet) std::cout << "summary: " << (fs::path(out) / "summary.csv").string() << "\n";
      return r.exit_code();
    }
    auto files = cy::emit_plots(dir, app.get_option("--out")->count() ? fs::path(out) : fs::path(dir));
    if (!quiet)
      for (const auto& f : files) std::cout << f.string() << "\n";
    return 0;
  } catch (const cy::Error& e) {
    std::cerr << e.what() << "\n";
    const auto k = e.kind();
    return k == cy::ErrorKind::ConfigError || k == cy::ErrorKind::InvalidArgument || k == cy::ErrorKind::IoError ? 2 : 3;
  }
}

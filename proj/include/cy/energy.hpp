#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "cy/grid.hpp"
#include "cy/problem.hpp"

namespace cy {

/// E(u) = int (|grad u|^2 / 2 + s^C u) - (n/2)(int s^C) ln int e^{2u/n}.
/// Needs theta = 0 and a unit-volume grid.
double energy(const ProblemSpec& p, const ScalarField& u);

/// E(u + d) - E(u) without cancellation against the absolute energy level.
double energy_difference(const ProblemSpec& p, const ScalarField& u, const ScalarField& d);

/// L2 gradient Delta u + s^C - (int s^C / int e^{2u/n}) e^{2u/n}; zero mean.
ScalarField energy_gradient(const ProblemSpec& p, const ScalarField& u);

/// 1/2 - C/(4 n^2 pi).
double coercivity_margin(const ProblemSpec& p);

struct MinimizerConfig {
  double grad_tol = 1e-10;
  int max_iter = 5000;
  int memory = 8;
  /// Preconditioned steepest descent until the gradient norm drops below this.
  double switch_grad = 1e-2;
};

struct MinimizerLogRow {
  int iter = 0;
  double energy = 0.0;
  double grad_norm = 0.0;
  double step_size = 0.0;
};

struct EnergyReport {
  ScalarField u;  // zero-mean minimizer
  double energy = 0.0;
  double grad_norm = 0.0;
  double coercivity_margin = 0.0;
  double beckner_constant_estimate = 0.0;  // NaN unless a probe was attached
};

struct MinimizerResult {
  SolverReport report;  // u normalized so that int e^{2u/n} = 1
  EnergyReport energy;
  std::vector<MinimizerLogRow> log;

  static constexpr const char* kCsvHeader = "iter,energy,grad_norm,step_size";
  void write_log_csv(std::ostream& os) const;
};

/// Refuses with CoercivityGateFail when int s^C >= 2 pi n^2.
GateOutcome coercivity_gate(const ProblemSpec& p);

/// Descent on the zero-mean subspace with an H^1 preconditioner, switching to
/// L-BFGS once the gradient is small. The energy history never increases.
MinimizerResult minimize_energy(const ProblemSpec& p, const MinimizerConfig& cfg = {});

struct BecknerProbe {
  double max_value = 0.0;
  double random_max = 0.0;
  std::vector<double> cosine_values;  // u = t cos x1, t = 1..10
  std::vector<double> bubble_values;  // concentrating bubbles, widest first
  std::vector<double> bubble_widths;
  /// Last bubble value <= M + |M|/2 with M the max over the first half, i.e.
  /// no upward drift within 1.5x as the width reaches the grid scale.
  bool non_divergent = false;
};

/// ln mean(e^{u - mean u}) - (1/16 pi) int |grad u|^2 dx with the physical
/// Dirichlet integral, which is the scale-invariant form in two dimensions.
double beckner_functional(const ScalarField& u);

/// Needs a unit-volume 2D grid.
BecknerProbe beckner_probe_detailed(const PeriodicGrid& grid, int trials, std::uint64_t seed);
double beckner_probe(const PeriodicGrid& grid, int trials, std::uint64_t seed);

struct CoercivityCheck {
  double margin = 0.0;
  double slack = 0.05;
  double K = 0.0;           // calibrated constant
  double worst_gap = 0.0;   // min over probes of E(u) - ((margin - slack) D(u) - K)
  int probes = 0;
  bool passed = false;
};

/// K is the max of (margin - slack) D(u) - E(u) over a calibration set; the
/// inequality is then tested on `probe_trials` fresh fields.
CoercivityCheck check_coercivity(const ProblemSpec& p, int calibration_trials, int probe_trials,
                                 std::uint64_t seed, double slack = 0.05);

}  // namespace cy

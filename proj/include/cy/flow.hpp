#pragma once

#include <iosfwd>
#include <vector>

#include "cy/grid.hpp"
#include "cy/problem.hpp"

namespace cy {

enum class LambdaMode { Constant, Normalized };
enum class Stepper { Etd1, Etd2rk };

struct FlowConfig {
  LambdaMode lambda_mode = LambdaMode::Constant;
  double lambda = -1.0;  // used in constant mode
  double dt = 1e-2;
  double t_max = 200.0;
  /// Stop once sup |du/dt| < stop_tol. Non-positive values run the full horizon.
  double stop_tol = 1e-10;
  Stepper stepper = Stepper::Etd2rk;
  int record_every = 1;
  int hk_order = 2;
  bool barriers = true;

  void validate() const;
};

struct FlowState {
  double t = 0.0;
  ScalarField u;
  ScalarField v;  // du/dt at u
  double lambda_t = 0.0;
};

struct TraceRow {
  double t = 0.0;
  double lambda = 0.0;
  double mean_u = 0.0;
  double sup_u = 0.0;
  double hk_u = 0.0;
  double sup_v = 0.0;
  double l2_v = 0.0;
  double sup_grad_v = 0.0;
  double barrier_lo = 0.0;  // NaN when no barrier applies
  double barrier_hi = 0.0;
  // Not part of the CSV schema; kept for containment and decay checks.
  double min_u = 0.0;
  double max_u = 0.0;
};

class FlowTrace {
 public:
  /// Rows must have strictly increasing t.
  void append(const TraceRow& row);
  const std::vector<TraceRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }
  std::size_t size() const { return rows_.size(); }

  static constexpr const char* kCsvHeader =
      "t,lambda,mean_u,sup_u,hk_u,sup_v,l2_v,sup_grad_v,barrier_lo,barrier_hi";
  void write_csv(std::ostream& os) const;

 private:
  std::vector<TraceRow> rows_;
};

/// Comparison-ODE barriers for the negative case, with -b < s^C < -a < 0.
struct BarrierParams {
  double a = 0.0;
  double b = 0.0;
  double c0 = 0.0;
  double lambda = 0.0;
  int n = 1;
  double c1 = 0.0;
  double c2 = 0.0;

  /// Validates signs and that the c1, c2 denominators stay away from zero.
  static BarrierParams make(double a, double b, double c0, double lambda, int n);
};

struct Envelope {
  double lo = 0.0;
  double hi = 0.0;
};

/// (lo, hi) = (-y2(t), y1(t)).
Envelope barrier_envelope(const BarrierParams& params, double t);
/// a, b bracketing s^C with a relative margin, c0 = ||u0||_sup + 1.
BarrierParams barrier_params_for(const ProblemSpec& p, double lambda, const ScalarField& u0);

/// int s^C / int e^{2u/n}.
double normalized_lambda(const ProblemSpec& p, const ScalarField& u);

/// -Delta u - s^C - g(theta, du) + lambda e^{2u/n}.
ScalarField rhs(const ProblemSpec& p, const ScalarField& u, double lambda);

/// Exponential integrator: exact on -Delta, phi-function quadrature for the rest.
class EtdStepper {
 public:
  EtdStepper(const ProblemSpec& p, const FlowConfig& cfg);

  FlowState initial_state(const ScalarField& u0) const;
  FlowState step(const FlowState& state) const;

 private:
  double lambda_for(const ScalarField& u) const;
  ScalarField nonlinear(const ScalarField& u, double lambda) const;

  const ProblemSpec& p_;
  FlowConfig cfg_;
  std::vector<double> decay_, phi1_, phi2_;
};

FlowState step_etd(const ProblemSpec& p, const FlowState& state, const FlowConfig& cfg);

struct FlowResult {
  SolverReport report;
  FlowTrace trace;
};

FlowResult run_flow(const ProblemSpec& p, const FlowConfig& cfg, const ScalarField& u0);

enum class DecayColumn { SupV, L2VSq, SupGradV };

struct DecayFit {
  double rate = 0.0;
  double prefactor = 0.0;
  double r2 = 0.0;
};

/// Least-squares fit of log(column) against t over the second half of the trace.
DecayFit fit_decay(const FlowTrace& trace, DecayColumn column);

/// max over rows of |mean(u)|.
double mean_drift(const FlowTrace& trace);

/// Largest amount any recorded u leaves its barrier envelope (0 if contained).
double envelope_violation(const FlowTrace& trace);

/// m = min over the trace of e^{2u/n}.
double min_conformal_factor(const FlowTrace& trace, int n);

}  // namespace cy

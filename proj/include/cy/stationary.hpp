#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "cy/grid.hpp"
#include "cy/problem.hpp"

namespace cy {

struct FixedPointConfig {
  double target_constant = 0.0;
  /// Norm for the pinching distance ||s^C - C||: holder(alpha) or lp(p) with p > n.
  NormKind gate_norm = NormKind::holder(0.5);
  /// The ball B_eps and the step norms always use the Holder proxy.
  double holder_alpha = 0.5;
  double ball_radius = 0.5;
  int max_iter = 200;
  double tol = 1e-12;
  /// Calibrated epsilon_0; when set the pinching gate is judged against it.
  std::optional<double> pinching_threshold;

  void validate(int n) const;
};

/// T(u) = (Delta + g(theta,d.) - 2C/n)^{-1} (C - s^C + C(e^{2u/n} - 1 - 2u/n)).
/// Construction runs the spectral gate and throws SingularOperator on failure.
class FixedPointOperator {
 public:
  FixedPointOperator(const ProblemSpec& p, const FixedPointConfig& cfg);

  ScalarField operator()(const ScalarField& u) const;
  /// Solves (Delta + g(theta,d.) - 2C/n) w = f.
  ScalarField solve(const ScalarField& f) const;
  const SpectralGateResult& gate() const { return gate_; }

 private:
  const ProblemSpec& p_;
  FixedPointConfig cfg_;
  SpectralGateResult gate_;
  double shift_;
};

ScalarField fixed_point_map(const ProblemSpec& p, const FixedPointConfig& cfg, const ScalarField& u);

struct ContractionLogRow {
  int iter = 0;
  double step_norm = 0.0;
  double contraction_factor = 0.0;  // NaN on the first iteration
  double ball_norm = 0.0;
};

struct ContractionResult {
  SolverReport report;
  std::vector<ContractionLogRow> log;
  double pinching_distance = 0.0;
  /// Largest factor over steps above round-off (0 if there are none).
  double max_contraction_factor = 0.0;

  static constexpr const char* kCsvHeader = "iter,step_norm,contraction_factor,ball_norm";
  void write_log_csv(std::ostream& os) const;
};

/// Iterates u_{k+1} = T(u_k) from u_0 = 0. EscapedBall and NoConvergence are
/// reported through report.status; on success the result is normalized.
ContractionResult run_contraction(const ProblemSpec& p, const FixedPointConfig& cfg);

struct Epsilon0Calibration {
  double amplitude = 0.0;        // largest converging amplitude found
  double failing_amplitude = 0.0;  // smallest failing amplitude found (inf if none)
  double epsilon0 = 0.0;          // gate-norm distance at `amplitude`
  int evaluations = 0;
};

/// Bisection on A for s^C = C + A * shape until contraction stops converging.
Epsilon0Calibration calibrate_epsilon0(const ProblemSpec& base, const ScalarField& shape,
                                       const FixedPointConfig& cfg, double max_amplitude,
                                       int bisection_steps = 20);

enum class OracleMode { Fixed, Normalized };

struct OracleConfig {
  OracleMode mode = OracleMode::Fixed;
  double lambda = -1.0;  // fixed mode only
  double tol = 1e-12;    // on sup |G(u)|
  int max_iter = 60;
  /// Dense LU up to this many unknowns, matrix-free Newton-Krylov beyond.
  std::size_t dense_limit = 1024;
};

struct OracleResult {
  SolverReport report;
  std::vector<double> residual_history;  // sup |G| per iterate
  /// Observed order from the last three residuals above round-off (NaN if too few).
  double observed_order = 0.0;
  bool dense = false;
};

/// Newton iteration on G(u) = Delta u + g(theta,du) + s^C - lambda(u) e^{2u/n}.
/// Normalized mode works on zero-mean u with lambda(u) = int s^C / int e^{2u/n}.
OracleResult newton_galerkin_oracle(const ProblemSpec& p, const OracleConfig& cfg, const ScalarField& u0);

}  // namespace cy

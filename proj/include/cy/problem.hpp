#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cy/grid.hpp"
#include "json.hpp"

namespace cy {

/// A Chern-Yamabe instance at PDE level: complex dimension n on a flat
/// 2n-torus, the Chern scalar curvature s^C and the Lee form theta.
class ProblemSpec {
 public:
  static constexpr double kDefaultGauduchonTolerance = 1e-8;

  /// Throws NotGauduchon when `declared_gauduchon` is set but
  /// sup |delta theta| >= gauduchon_tol.
  ProblemSpec(int n, ScalarField scal, OneFormField lee, bool declared_gauduchon = true,
              double gauduchon_tol = kDefaultGauduchonTolerance);

  /// Balanced instance (theta = 0).
  static ProblemSpec balanced(int n, ScalarField scal);

  int n() const { return n_; }
  const PeriodicGrid& grid() const { return scal_.grid(); }
  const ScalarField& scal() const { return scal_; }
  const OneFormField& lee() const { return lee_; }
  bool declared_gauduchon() const { return declared_gauduchon_; }
  bool is_balanced() const { return lee_.is_zero(); }
  double codifferential_sup() const { return codifferential_sup_; }

  ProblemSpec with_scal(ScalarField scal) const;

 private:
  int n_;
  ScalarField scal_;
  OneFormField lee_;
  bool declared_gauduchon_;
  double codifferential_sup_;
};

struct GateOutcome {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  std::string detail;
};

enum class Method { Flow, FlowNormalized, FixedPoint, Minimizer, Oracle };
std::string to_string(Method m);

struct SolverReport {
  std::optional<ScalarField> u;
  double lambda_star = 0.0;
  double residual_sup = 0.0;
  double residual_l2 = 0.0;
  Method method = Method::Oracle;
  long iterations_or_steps = 0;
  std::vector<GateOutcome> gate_outcomes;
  double wall_time = 0.0;
  bool converged = false;
  std::string status;
};

struct FundamentalConstant {
  double value = 0.0;
  double spectral_distance = 0.0;
};

enum class SignExpectation { Negative, ZeroMean, Positive };

struct SpectralGateResult {
  /// Distance used for pass/fail: sigma_min(Delta + g(theta,d.) - 2c/n).
  double distance = 0.0;
  /// Same quantity for the shift c itself, i.e. c against sigma(Delta + g(theta,d.)).
  double constant_distance = 0.0;
  bool passed = false;
  std::string method;
};

struct SpectralGateOptions {
  double tolerance = 1e-6;
  int max_iterations = 400;
  double convergence = 1e-10;
  /// Dense SVD up to this many unknowns when theta != 0.
  std::size_t dense_limit = 1024;
  int block = 8;
};

/// Rejects u with sup |2u/n| > 700.
void check_exponent_range(const ScalarField& u, int n, const char* where);

/// s~ = e^{-2u/n} (Delta u + g(theta,du) + s^C).
ScalarField conformal_scalar_curvature(const ProblemSpec& p, const ScalarField& u);
/// Delta u + g(theta,du) + s^C - lambda e^{2u/n}.
ScalarField residual(const ProblemSpec& p, const ScalarField& u, double lambda);

FundamentalConstant fundamental_constant(const ProblemSpec& p);

GateOutcome sign_gate(const ProblemSpec& p, SignExpectation expected, double zero_tol = 1e-10);

/// sigma_min(Delta + g(theta, d.) - shift). Exact on the Fourier symbol when
/// theta = 0; otherwise a dense SVD on small grids and subspace inverse
/// iteration on A^T A beyond.
double shifted_operator_distance(const ProblemSpec& p, double shift, const SpectralGateOptions& opts = {},
                                 std::string* method = nullptr);

SpectralGateResult spectral_gate(const ProblemSpec& p, double c, const SpectralGateOptions& opts = {});

struct NormalizedSolution {
  ScalarField u;
  double lambda;
};

/// Shifts u so that int e^{2u/n} vol = 1 and rescales lambda so the residual
/// is unchanged pointwise.
NormalizedSolution normalize_solution(const ProblemSpec& p, const ScalarField& u, double lambda);

/// Fills residual_sup / residual_l2 from (u, lambda).
SolverReport make_report(const ProblemSpec& p, ScalarField u, double lambda, Method method);

/// Adjoint of f -> g(theta, df) for the flat inner product: -sum_i d_i(theta_i f).
ScalarField lee_adjoint(const OneFormField& theta, const ScalarField& f);

nlohmann::json to_json(const GateOutcome& g);
/// Versioned report schema; the field itself is written separately.
nlohmann::json to_json(const SolverReport& r);

}  // namespace cy

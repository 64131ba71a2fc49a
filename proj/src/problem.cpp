#include "cy/problem.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "cy/error.hpp"
#include "cy/krylov.hpp"

namespace cy {

ProblemSpec::ProblemSpec(int n, ScalarField scal, OneFormField lee, bool declared_gauduchon,
                         double gauduchon_tol)
    : n_(n), scal_(std::move(scal)), lee_(std::move(lee)), declared_gauduchon_(declared_gauduchon) {
  if (n_ < 1) throw Error(ErrorKind::InvalidArgument, "complex dimension n must be >= 1");
  if (scal_.grid().dim() != 2 * n_) {
    std::ostringstream os;
    os << "grid dimension " << scal_.grid().dim() << " != 2n = " << 2 * n_;
    throw Error(ErrorKind::InvalidArgument, os.str());
  }
  require_same_grid(scal_.grid(), lee_.grid(), "ProblemSpec");
  codifferential_sup_ = lee_.is_zero() ? 0.0 : norm(codifferential(lee_), NormKind::sup());
  if (declared_gauduchon_ && !(codifferential_sup_ < gauduchon_tol)) {
    std::ostringstream os;
    os << "declared Gauduchon but sup|delta theta| = " << codifferential_sup_;
    throw Error(ErrorKind::NotGauduchon, os.str());
  }
}

ProblemSpec ProblemSpec::balanced(int n, ScalarField scal) {
  auto lee = OneFormField::zero(scal.grid());
  return ProblemSpec(n, std::move(scal), std::move(lee), true);
}

ProblemSpec ProblemSpec::with_scal(ScalarField scal) const {
  return ProblemSpec(n_, std::move(scal), lee_, declared_gauduchon_, INFINITY);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Flow: return "flow";
    case Method::FlowNormalized: return "flow_normalized";
    case Method::FixedPoint: return "fixed_point";
    case Method::Minimizer: return "minimizer";
    case Method::Oracle: return "oracle";
  }
  return "unknown";
}

void check_exponent_range(const ScalarField& u, int n, const char* where) {
  const double bound = 700.0 * n / 2.0;
  const double sup = norm(u, NormKind::sup());
  if (sup > bound) {
    std::ostringstream os;
    os << where << ": sup|2u/n| = " << 2.0 * sup / n << " exceeds 700";
    throw Error(ErrorKind::Overflow, os.str());
  }
}

namespace {

ScalarField exp_factor(const ScalarField& u, int n) {
  const double s = 2.0 / n;
  return u.map([s](double v) { return std::exp(s * v); });
}

}  // namespace

ScalarField conformal_scalar_curvature(const ProblemSpec& p, const ScalarField& u) {
  require_same_grid(p.grid(), u.grid(), "conformal_scalar_curvature");
  check_exponent_range(u, p.n(), "conformal_scalar_curvature");
  auto lhs = laplacian(u) + lee_term(p.lee(), u) + p.scal();
  const double s = -2.0 / p.n();
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(s * u[i]) * lhs[i];
  return ScalarField(u.grid(), std::move(out));
}

ScalarField residual(const ProblemSpec& p, const ScalarField& u, double lambda) {
  require_same_grid(p.grid(), u.grid(), "residual");
  check_exponent_range(u, p.n(), "residual");
  auto r = laplacian(u) + lee_term(p.lee(), u) + p.scal();
  const auto e = exp_factor(u, p.n());
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r[i] - lambda * e[i];
  return ScalarField(u.grid(), std::move(out));
}

FundamentalConstant fundamental_constant(const ProblemSpec& p) {
  if (!p.declared_gauduchon())
    throw Error(ErrorKind::NotGauduchon, "fundamental constant needs a declared Gauduchon metric");
  if (!p.grid().normalized())
    throw Error(ErrorKind::NotGauduchon, "fundamental constant needs the unit-volume representative");
  FundamentalConstant fc;
  fc.value = integrate(p.scal());
  fc.spectral_distance = spectral_gate(p, fc.value).distance;
  return fc;
}

GateOutcome sign_gate(const ProblemSpec& p, SignExpectation expected, double zero_tol) {
  GateOutcome g;
  switch (expected) {
    case SignExpectation::Negative:
      g.name = "sign-negative";
      g.measured = p.scal().max();
      g.passed = g.measured < 0.0;
      g.detail = "max s^C";
      break;
    case SignExpectation::ZeroMean:
      g.name = "sign-zero-mean";
      g.measured = integrate(p.scal());
      g.passed = std::abs(g.measured) < zero_tol;
      g.detail = "int s^C vol";
      break;
    case SignExpectation::Positive:
      g.name = "sign-positive";
      g.measured = p.scal().min();
      g.passed = g.measured > 0.0;
      g.detail = "min s^C";
      break;
  }
  return g;
}

ScalarField lee_adjoint(const OneFormField& theta, const ScalarField& f) {
  require_same_grid(theta.grid(), f.grid(), "lee_adjoint");
  std::vector<ScalarField> parts;
  parts.reserve(theta.dim());
  for (const auto& c : theta.components()) parts.push_back(c * f);
  return codifferential(OneFormField(std::move(parts)));
}

namespace {

std::vector<double> to_vec(const ScalarField& f) { return {f.values().begin(), f.values().end()}; }

}  // namespace

double shifted_operator_distance(const ProblemSpec& p, double shift, const SpectralGateOptions& opts,
                                 std::string* method) {
  const auto& g = p.grid();
  const auto lap = g.laplacian_symbol();
  if (p.is_balanced()) {
    if (method) *method = "fourier-symbol";
    double d = INFINITY;
    for (double ev : lap) d = std::min(d, std::abs(ev - shift));
    return d;
  }

  const auto& theta = p.lee();
  const std::size_t M = g.size();
  auto apply_a = [&](std::span<const double> x) {
    ScalarField f(g, {x.begin(), x.end()});
    return to_vec(laplacian(f) + lee_term(theta, f) - shift * f);
  };

  if (M <= opts.dense_limit) {
    if (method) *method = "dense-svd";
    Eigen::MatrixXd A(M, M);
    std::vector<double> e(M, 0.0);
    for (std::size_t j = 0; j < M; ++j) {
      e[j] = 1.0;
      const auto col = apply_a(e);
      e[j] = 0.0;
      for (std::size_t i = 0; i < M; ++i) A(i, j) = col[i];
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(A);
    return svd.singularValues().minCoeff();
  }

  if (method) *method = "inverse-subspace";
  LinearOperator A = apply_a;
  LinearOperator At = [&](std::span<const double> x) {
    ScalarField f(g, {x.begin(), x.end()});
    return to_vec(laplacian(f) + lee_adjoint(theta, f) - shift * f);
  };
  // Fourier preconditioner on the theta = 0 symbol, clamped away from zero so
  // that near-resonant modes do not dominate.
  constexpr double kClamp = 0.25;
  LinearOperator P = [&](std::span<const double> x) {
    auto c = g.forward(x);
    for (std::size_t i = 0; i < c.size(); ++i) {
      double d = lap[i] - shift;
      if (std::abs(d) < kClamp) d = d < 0 ? -kClamp : kClamp;
      c[i] /= d;
    }
    return g.inverse(c);
  };

  // Subspace inverse iteration on A^T A with Rayleigh-Ritz, so clustered
  // singular values near the shift do not stall convergence. Inner solves only
  // shape the subspace; the Ritz values use exact products with A.
  GmresOptions gopt;
  gopt.relative_tolerance = 1e-10;
  const int b = std::max(1, opts.block);
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd X(M, b);
  for (Eigen::Index j = 0; j < b; ++j)
    for (std::size_t i = 0; i < M; ++i) X(i, j) = normal(rng);
  // Seed part of the block with the theta = 0 modes closest to the shift; an
  // exactly singular direction is then visible before any inner solve.
  {
    std::vector<std::size_t> order(M);
    for (std::size_t i = 0; i < M; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
      return std::abs(lap[a] - shift) < std::abs(lap[c] - shift);
    });
    std::vector<Complex> coeff(M);
    for (int j = 0; j + 2 < b && j / 2 < static_cast<int>(M); j += 2) {
      coeff.assign(M, Complex(0.0, 0.0));
      coeff[order[j / 2]] = Complex(1.0, 0.0);
      const auto c = g.inverse(coeff);
      coeff[order[j / 2]] = Complex(0.0, -1.0);
      const auto s = g.inverse(coeff);
      for (std::size_t i = 0; i < M; ++i) {
        X(i, j) = c[i];
        X(i, j + 1) = s[i];
      }
    }
  }

  double estimate = INFINITY;
  for (int it = 0; it < opts.max_iterations; ++it) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(M, b);
    Eigen::MatrixXd W(M, b);
    for (Eigen::Index j = 0; j < b; ++j) {
      const auto w = A(std::span<const double>(Q.col(j).data(), M));
      W.col(j) = Eigen::Map<const Eigen::VectorXd>(w.data(), M);
    }
    // SVD of A Q rather than eigenvalues of Q^T A^T A Q keeps small values accurate.
    Eigen::JacobiSVD<Eigen::MatrixXd> ritz(W, Eigen::ComputeThinV);
    const double next = ritz.singularValues()(b - 1);
    if (std::abs(next - estimate) <= opts.convergence * std::max(next, 1e-300)) return next;
    estimate = next;
    Q = Q * ritz.matrixV();
    for (Eigen::Index j = 0; j < b; ++j) {
      auto y = gmres(At, P, std::span<const double>(Q.col(j).data(), M), gopt);
      auto z = gmres(A, P, y.x, gopt);
      const bool bad = !std::isfinite(y.relative_residual) || y.relative_residual > 1e-3 ||
                       !std::isfinite(z.relative_residual) || z.relative_residual > 1e-3;
      // A failed solve near a resolved null direction just confirms singularity.
      if (bad && estimate <= opts.tolerance) return estimate;
      if (bad) throw Error(ErrorKind::IndeterminateGate, "inner solve failed in the gate iteration");
      X.col(j) = Eigen::Map<const Eigen::VectorXd>(z.x.data(), M);
    }
  }
  throw Error(ErrorKind::IndeterminateGate, "inverse subspace iteration did not converge");
}

SpectralGateResult spectral_gate(const ProblemSpec& p, double c, const SpectralGateOptions& opts) {
  SpectralGateResult r;
  r.distance = shifted_operator_distance(p, 2.0 * c / p.n(), opts, &r.method);
  r.constant_distance = shifted_operator_distance(p, c, opts);
  r.passed = r.distance > opts.tolerance;
  return r;
}

NormalizedSolution normalize_solution(const ProblemSpec& p, const ScalarField& u, double lambda) {
  require_same_grid(p.grid(), u.grid(), "normalize_solution");
  check_exponent_range(u, p.n(), "normalize_solution");
  const double volume_integral = integrate(exp_factor(u, p.n()));
  const double shift = -0.5 * p.n() * std::log(volume_integral);
  return {u + shift, lambda * volume_integral};
}

SolverReport make_report(const ProblemSpec& p, ScalarField u, double lambda, Method method) {
  SolverReport r;
  const auto res = residual(p, u, lambda);
  r.residual_sup = norm(res, NormKind::sup());
  r.residual_l2 = norm(res, NormKind::l2());
  r.lambda_star = lambda;
  r.method = method;
  r.u = std::move(u);
  return r;
}

nlohmann::json to_json(const GateOutcome& g) {
  return {{"name", g.name}, {"passed", g.passed}, {"measured", g.measured}, {"detail", g.detail}};
}

nlohmann::json to_json(const SolverReport& r) {
  nlohmann::json gates = nlohmann::json::array();
  for (const auto& g : r.gate_outcomes) gates.push_back(to_json(g));
  nlohmann::json j = {
      {"schema", "cy.solver_report/1"},
      {"method", to_string(r.method)},
      {"status", r.status},
      {"converged", r.converged},
      {"lambda_star", r.lambda_star},
      {"residual_sup", r.residual_sup},
      {"residual_L2", r.residual_l2},
      {"iterations_or_steps", r.iterations_or_steps},
      {"gate_outcomes", gates},
  };
  if (r.u) {
    j["u_summary"] = {{"min", r.u->min()}, {"max", r.u->max()}, {"mean", mean(*r.u)},
                      {"grid", {{"points_per_axis", r.u->grid().points_per_axis()},
                                {"lengths", r.u->grid().lengths()},
                                {"normalized", r.u->grid().normalized()}}}};
  }
  return j;
}

}  // namespace cy

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <sstream>

#include "cy/error.hpp"
#include "cy/flow.hpp"
#include "cy/stationary.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace cy;
using cy::testing::random_band_limited;
using cy::testing::sup_diff;

namespace {

ScalarField cos1(const PeriodicGrid& g, double a = 1.0) {
  return ScalarField::sample(g, [a](auto x) { return a * std::cos(x[0]); });
}

FixedPointConfig fp(double C) {
  FixedPointConfig cfg;
  cfg.target_constant = C;
  return cfg;
}

OneFormField lee_cos2(const PeriodicGrid& g, double a) {
  return OneFormField({ScalarField::sample(g, [a](auto x) { return a * std::cos(x[1]); }), ScalarField::zero(g)});
}

}  // namespace

TEST_CASE("fixed point map examples") {
  auto g = PeriodicGrid::cube(2, 32);
  auto p0 = ProblemSpec::balanced(1, ScalarField::constant(g, 0.25));
  CHECK(norm(fixed_point_map(p0, fp(0.25), ScalarField::zero(g)), NormKind::sup()) < 1e-15);

  const double eps = 0.01, C = 0.25;
  auto p = ProblemSpec::balanced(1, ScalarField::constant(g, C) + cos1(g, eps));
  auto t0 = fixed_point_map(p, fp(C), ScalarField::zero(g));
  CHECK(sup_diff(t0, cos1(g, -eps / (1.0 - 2.0 * C))) < 1e-15);
}

TEST_CASE("fixed point map respects the operator norm bound") {
  auto g = PeriodicGrid::cube(2, 32);
  std::mt19937_64 rng(17);
  const double C = 0.25, eps = 0.05;
  auto p = ProblemSpec::balanced(1, ScalarField::constant(g, C) + random_band_limited(g, 3, rng, 0.02));
  const double dist = shifted_operator_distance(p, 2.0 * C);
  const double pinch = norm(p.scal() - C, NormKind::l2());
  for (int trial = 0; trial < 10; ++trial) {
    auto u = random_band_limited(g, 3, rng, 1.0);
    u = (eps / norm(u, NormKind::sup())) * u;
    // |e^z - 1 - z| <= z^2/2 e^{|z|} with |z| <= 2 eps.
    const double cprime = C * 2.0 * std::exp(2.0 * eps);
    CHECK(norm(fixed_point_map(p, fp(C), u), NormKind::l2()) <= (pinch + cprime * eps * eps) / dist * (1 + 1e-12));
  }
}

TEST_CASE("spectral gate refuses near-resonant constants") {
  auto g = PeriodicGrid::cube(2, 16);
  const double C = 0.5 + 2.5e-9;  // 2C/n sits 5e-9 from the eigenvalue 1
  auto p = ProblemSpec::balanced(1, ScalarField::constant(g, C) + cos1(g, 0.01));
  auto gate = spectral_gate(p, C);
  CHECK_FALSE(gate.passed);
  CHECK(gate.distance == doctest::Approx(5e-9).epsilon(1e-4));
  try {
    run_contraction(p, fp(C));
    FAIL("expected refusal");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularOperator);
  }
}

TEST_CASE("spectral gate with a Lee form matches a dense SVD") {
  auto g = PeriodicGrid::cube(2, 8);
  ProblemSpec p(1, ScalarField::constant(g, 0.3), lee_cos2(g, 0.4));
  const std::size_t M = g.size();
  for (double shift : {0.5, 1.0, 1.7, 3.2}) {
    Eigen::MatrixXd A(M, M);
    std::vector<double> e(M, 0.0);
    for (std::size_t j = 0; j < M; ++j) {
      e[j] = 1.0;
      ScalarField f(g, e);
      auto col = laplacian(f) + lee_term(p.lee(), f) - shift * f;
      e[j] = 0.0;
      for (std::size_t i = 0; i < M; ++i) A(i, j) = col[i];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    const double smin = svd.singularValues().minCoeff();
    SpectralGateOptions iterative;
    iterative.dense_limit = 0;
    std::string method;
    const double d = shifted_operator_distance(p, shift, iterative, &method);
    CHECK(method == "inverse-subspace");
    CHECK(d == doctest::Approx(smin).epsilon(1e-7));
    CHECK(shifted_operator_distance(p, shift, {}, &method) == doctest::Approx(smin).epsilon(1e-12));
    CHECK(method == "dense-svd");
  }
}

TEST_CASE("contraction on constant data") {
  auto g = PeriodicGrid::cube(2, 16);
  auto p = ProblemSpec::balanced(1, ScalarField::constant(g, 0.25));
  auto r = run_contraction(p, fp(0.25));
  CHECK(r.report.converged);
  CHECK(r.report.iterations_or_steps == 1);
  CHECK(norm(*r.report.u, NormKind::sup()) < 1e-15);
}

TEST_CASE("contraction small-oscillation instance") {
  auto g = PeriodicGrid::cube(2, 32);
  const double C = 0.25;
  auto p = ProblemSpec::balanced(1, ScalarField::constant(g, C) + cos1(g, 0.01));
  auto r = run_contraction(p, fp(C));
  REQUIRE(r.report.converged);
  CHECK(r.report.status == "Converged");
  CHECK(r.max_contraction_factor < 0.2);
  CHECK(r.report.residual_sup < 1e-9);
  const auto& u = *r.report.u;
  CHECK(std::abs(integrate(u.map([](double v) { return std::exp(2 * v); })) - 1.0) < 1e-10);
  CHECK(std::abs(r.report.lambda_star - integrate(p.scal())) < 1e-8);

  OracleConfig oc;
  oc.mode = OracleMode::Normalized;
  auto o = newton_galerkin_oracle(p, oc, ScalarField::zero(g));
  REQUIRE(o.report.converged);
  auto ns = normalize_solution(p, *o.report.u, o.report.lambda_star);
  CHECK(sup_diff(ns.u, u) < 1e-9);

  auto lp = fp(C);
  lp.gate_norm = NormKind::lp(2.0);
  auto r2 = run_contraction(p, lp);
  REQUIRE(r2.report.converged);
  CHECK(sup_diff(*r2.report.u, u) < 1e-14);
  CHECK(r2.pinching_distance == doctest::Approx(0.01 / std::sqrt(2.0)).epsilon(1e-12));

  std::ostringstream os;
  r.write_log_csv(os);
  CHECK(os.str().rfind("iter,step_norm,contraction_factor,ball_norm\n", 0) == 0);
}

TEST_CASE("contraction with a Lee form") {
  auto g = PeriodicGrid::cube(2, 32);
  const double C = 0.25;
  ProblemSpec p(1, ScalarField::constant(g, C) + cos1(g, 0.01), lee_cos2(g, 0.1));
  auto r = run_contraction(p, fp(C));
  REQUIRE(r.report.converged);
  CHECK(r.report.residual_sup < 1e-9);
  CHECK(std::abs(r.report.lambda_star - integrate(p.scal())) < 1e-8);
}

TEST_CASE("large oscillation escapes the ball") {
  auto g = PeriodicGrid::cube(2, 32);
  auto p = ProblemSpec::balanced(1, ScalarField::constant(g, 0.25) + cos1(g, 5.0));
  auto r = run_contraction(p, fp(0.25));
  CHECK_FALSE(r.report.converged);
  CHECK((r.report.status == "EscapedBall" || r.report.status == "NoConvergence"));
  CHECK_FALSE(r.report.u.has_value());
}

TEST_CASE("lp gate needs p > n") {
  auto cfg = fp(0.25);
  cfg.gate_norm = NormKind::lp(1.5);
  CHECK_THROWS_AS(cfg.validate(2), Error);
  CHECK_NOTHROW(cfg.validate(1));
  cfg.gate_norm = NormKind::sup();
  CHECK_THROWS_AS(cfg.validate(1), Error);
}

TEST_CASE("contraction factor scales with the perturbation") {
  auto g = PeriodicGrid::cube(2, 32);
  const double C = 0.25;
  std::vector<double> ratios;
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    auto p = ProblemSpec::balanced(1, ScalarField::constant(g, C) + cos1(g, eps));
    auto r = run_contraction(p, fp(C));
    REQUIRE(r.report.converged);
    ratios.push_back(r.max_contraction_factor / eps);
  }
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  CHECK(*hi / *lo < 2.0);
}

TEST_CASE("epsilon0 calibration brackets the transition") {
  auto g = PeriodicGrid::cube(2, 16);
  const double C = 0.25;
  auto base = ProblemSpec::balanced(1, ScalarField::constant(g, C));
  auto cal = calibrate_epsilon0(base, cos1(g), fp(C), 5.0, 12);
  CHECK(cal.amplitude > 0.0);
  CHECK(cal.failing_amplitude > cal.amplitude);
  CHECK(cal.failing_amplitude - cal.amplitude < 5.0 / 4000.0);
  CHECK(run_contraction(base.with_scal(ScalarField::constant(g, C) + cos1(g, cal.amplitude)), fp(C)).report.converged);
  CHECK_FALSE(
      run_contraction(base.with_scal(ScalarField::constant(g, C) + cos1(g, cal.failing_amplitude)), fp(C)).report.converged);
  MESSAGE("eps0 = " << cal.epsilon0 << " at amplitude " << cal.amplitude);
}

TEST_CASE("oracle on constant data and singular systems") {
  auto g = PeriodicGrid::cube(2, 16);
  auto p = ProblemSpec::balanced(1, ScalarField::constant(g, -1.0));
  auto o = newton_galerkin_oracle(p, {}, ScalarField::zero(g));
  CHECK(o.report.converged);
  CHECK(o.report.iterations_or_steps == 0);

  OracleConfig oc;
  oc.lambda = 0.5;
  auto q = ProblemSpec::balanced(1, ScalarField::constant(g, 0.5) + cos1(g, 0.01));
  try {
    newton_galerkin_oracle(q, oc, ScalarField::zero(g));
    FAIL("expected JacobianSingular");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::JacobianSingular);
  }
}

TEST_CASE("oracle dense and Krylov paths agree and converge quadratically") {
  auto g = PeriodicGrid::cube(2, 32);
  ProblemSpec p(1, ScalarField::constant(g, -1.0) + cos1(g, 0.3), lee_cos2(g, 0.1));
  OracleConfig oc;
  auto dense = newton_galerkin_oracle(p, oc, ScalarField::zero(g));
  oc.dense_limit = 0;
  auto kry = newton_galerkin_oracle(p, oc, ScalarField::zero(g));
  REQUIRE(dense.report.converged);
  REQUIRE(kry.report.converged);
  CHECK(dense.dense);
  CHECK_FALSE(kry.dense);
  CHECK(sup_diff(*dense.report.u, *kry.report.u) < 1e-11);
  CHECK(dense.report.residual_sup < 1e-10);
  CHECK(dense.observed_order > 1.5);
  CHECK(kry.observed_order > 1.5);
}

TEST_CASE("oracle matches the negative flow") {
  auto g = PeriodicGrid::cube(2, 32);
  auto p = ProblemSpec::balanced(1, ScalarField::constant(g, -1.0) + cos1(g, 0.1));
  FlowConfig fc;
  fc.lambda = -1.0;
  fc.dt = 0.05;
  auto flow = run_flow(p, fc, ScalarField::zero(g));
  auto o = newton_galerkin_oracle(p, {}, ScalarField::zero(g));
  REQUIRE(flow.report.converged);
  REQUIRE(o.report.converged);
  CHECK(sup_diff(*flow.report.u, *o.report.u) < 1e-8);
}

TEST_CASE("normalized oracle with the rank-one term converges quadratically") {
  auto g = PeriodicGrid::cube(2, 16);
  auto p = ProblemSpec::balanced(1, ScalarField::constant(g, 1.0) + cos1(g, 0.3));
  OracleConfig oc;
  oc.mode = OracleMode::Normalized;
  std::mt19937_64 rng(2);
  // u = 0 is a singular point of the Jacobian here (2C/n = 2 is an eigenvalue).
  CHECK_THROWS_AS(newton_galerkin_oracle(p, oc, ScalarField::zero(g)), Error);
  auto o = newton_galerkin_oracle(p, oc, cos1(g, 0.3) + random_band_limited(g, 2, rng, 0.01));
  REQUIRE(o.report.converged);
  CHECK(std::abs(mean(*o.report.u)) < 1e-14);
  CHECK(o.observed_order > 1.5);
  CHECK(o.report.lambda_star ==
        doctest::Approx(integrate(p.scal()) / integrate(o.report.u->map([](double v) { return std::exp(2 * v); }))));
}

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "cy/energy.hpp"
#include "cy/error.hpp"
#include "cy/stationary.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace cy;
using cy::testing::sup_diff;

namespace {

ScalarField cos1(const PeriodicGrid& g, double a = 1.0) {
  return ScalarField::sample(g, [a](auto x) { return a * std::cos(x[0]); });
}

ProblemSpec coercive_instance(const PeriodicGrid& g) {
  return ProblemSpec::balanced(1, ScalarField::constant(g, 1.0) + cos1(g, 0.3));
}

}  // namespace

TEST_CASE("energy examples") {
  auto g = PeriodicGrid::cube(2, 64);
  auto p1 = ProblemSpec::balanced(1, ScalarField::constant(g, 1.0));
  CHECK(energy(p1, ScalarField::zero(g)) == 0.0);
  auto p = coercive_instance(g);
  for (double c : {-2.0, -0.5, 1.3, 2.0}) CHECK(std::abs(energy(p, ScalarField::constant(g, c))) < 1e-12);

  // int e^{2 cos x1} over the unit torus is I0(2).
  const double expected = 0.25 - 0.5 * std::log(std::cyl_bessel_i(0.0, 2.0));
  CHECK(energy(p1, cos1(g)) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("energy needs the balanced unit-volume setting") {
  auto g = PeriodicGrid::cube(2, 16);
  auto theta = OneFormField({ScalarField::constant(g, 0.1), ScalarField::zero(g)});
  ProblemSpec p(1, ScalarField::constant(g, 1.0), theta);
  CHECK_THROWS_AS(energy(p, ScalarField::zero(g)), Error);
  auto phys = PeriodicGrid::cube(2, 16, 2 * std::numbers::pi, false);
  CHECK_THROWS_AS(energy(ProblemSpec::balanced(1, ScalarField::constant(phys, 1.0)), ScalarField::zero(phys)), Error);
}

TEST_CASE("energy difference agrees with direct evaluation") {
  auto g = PeriodicGrid::cube(2, 32);
  auto p = coercive_instance(g);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5; ++i) {
    auto u = random_band_limited_field(g, 3, rng, 1.0);
    auto d = random_band_limited_field(g, 3, rng, 0.3);
    CHECK(energy_difference(p, u, d) == doctest::Approx(energy(p, u + d) - energy(p, u)).epsilon(1e-11));
  }
}

TEST_CASE("energy gradient examples") {
  auto g = PeriodicGrid::cube(2, 32);
  auto p = ProblemSpec::balanced(1, ScalarField::constant(g, 0.7));
  CHECK(norm(energy_gradient(p, ScalarField::zero(g)), NormKind::sup()) < 1e-13);
  std::mt19937_64 rng(9);
  auto q = coercive_instance(g);
  for (int i = 0; i < 5; ++i)
    CHECK(std::abs(mean(energy_gradient(q, random_band_limited_field(g, 4, rng, 2.0, false)))) < 1e-14);
}

TEST_CASE("energy gradient matches central differences at second order") {
  auto g = PeriodicGrid::cube(2, 32);
  auto p = coercive_instance(g);
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto u = random_band_limited_field(g, 3, rng, 1.0);
    auto phi = random_band_limited_field(g, 3, rng, 1.0);
    const double exact = inner(energy_gradient(p, u), phi);
    auto cd = [&](double h) { return (energy_difference(p, u, h * phi) - energy_difference(p, u, -h * phi)) / (2 * h); };
    const double e1 = std::abs(cd(1e-2) - exact);
    const double e2 = std::abs(cd(1e-3) - exact);
    const double order = std::log10(e1 / e2);
    CHECK(order >= 1.8);
    CHECK(order <= 2.2);
  }
}

TEST_CASE("minimizer on constant data and the gate") {
  auto g = PeriodicGrid::cube(2, 16);
  auto p = ProblemSpec::balanced(1, ScalarField::constant(g, 3.0));
  auto r = minimize_energy(p);
  CHECK(r.report.converged);
  CHECK(r.energy.energy == 0.0);
  CHECK(norm(*r.report.u, NormKind::sup()) == 0.0);

  CHECK(coercivity_gate(ProblemSpec::balanced(1, ScalarField::constant(g, 6.28))).passed);
  CHECK_FALSE(coercivity_gate(ProblemSpec::balanced(1, ScalarField::constant(g, 6.28318))).passed);
  CHECK_FALSE(coercivity_gate(ProblemSpec::balanced(1, ScalarField::constant(g, 2 * std::numbers::pi))).passed);
  auto above = ProblemSpec::balanced(1, ScalarField::constant(g, 2 * std::numbers::pi + 0.1) + cos1(g, 0.1));
  try {
    minimize_energy(above);
    FAIL("expected refusal");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CoercivityGateFail);
  }
}

TEST_CASE("minimizer matches the normalized oracle") {
  auto g = PeriodicGrid::cube(2, 32);
  auto p = coercive_instance(g);
  auto r = minimize_energy(p);
  REQUIRE(r.report.converged);
  CHECK(r.energy.grad_norm < 1e-10);
  CHECK(std::abs(mean(r.energy.u)) < 1e-14);
  for (std::size_t i = 1; i < r.log.size(); ++i) CHECK(r.log[i].energy <= r.log[i - 1].energy);
  CHECK(r.energy.energy == doctest::Approx(energy(p, r.energy.u)).epsilon(1e-10));
  CHECK(r.energy.coercivity_margin == doctest::Approx(0.5 - 1.0 / (4 * std::numbers::pi)));

  OracleConfig oc;
  oc.mode = OracleMode::Normalized;
  auto o = newton_galerkin_oracle(p, oc, r.energy.u + cos1(g, 1e-3));
  REQUIRE(o.report.converged);
  auto ns = normalize_solution(p, *o.report.u, o.report.lambda_star);
  CHECK(sup_diff(ns.u, *r.report.u) < 1e-8);
  CHECK(r.report.residual_sup < 1e-9);

  std::ostringstream os;
  r.write_log_csv(os);
  CHECK(os.str().rfind("iter,energy,grad_norm,step_size\n", 0) == 0);
}

TEST_CASE("coercivity inequality on probe fields") {
  auto g = PeriodicGrid::cube(2, 32);
  auto p = coercive_instance(g);
  auto c = check_coercivity(p, 100, 100, 7);
  MESSAGE("K = " << c.K << " worst gap " << c.worst_gap);
  CHECK(std::isfinite(c.K));
  CHECK(c.passed);
  CHECK(c.probes == 100);
}

TEST_CASE("beckner probe") {
  auto g = PeriodicGrid::cube(2, 64);
  CHECK(beckner_functional(ScalarField::zero(g)) == 0.0);
  auto b = beckner_probe_detailed(g, 50, 3);
  CHECK(std::isfinite(b.max_value));
  REQUIRE(b.cosine_values.size() == 10);
  // t cos x1: ln I0(t) - t^2 pi / 8, bounded above in t.
  for (std::size_t i = 0; i < 10; ++i) {
    const double t = i + 1.0;
    CHECK(b.cosine_values[i] == doctest::Approx(std::log(std::cyl_bessel_i(0.0, t)) - t * t * std::numbers::pi / 8.0).epsilon(1e-10));
  }
  REQUIRE(b.bubble_values.size() == 12);
  CHECK(b.non_divergent);
  for (double v : b.bubble_values) CHECK(v <= b.max_value);
  CHECK(b.max_value >= 0.0);
  CHECK_THROWS_AS(beckner_probe(PeriodicGrid::cube(4, 8), 1, 1), Error);
}

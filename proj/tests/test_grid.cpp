#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cy/error.hpp"
#include "cy/expression.hpp"
#include "cy/field_io.hpp"
#include "cy/grid.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace cy;
using cy::testing::fd4_partial;
using cy::testing::random_band_limited;
using cy::testing::sup_diff;

namespace {

ScalarField wave(const PeriodicGrid& g, std::function<double(std::span<const double>)> fn) {
  return ScalarField::sample(g, fn);
}

}  // namespace

TEST_CASE("grid construction enforces invariants") {
  CHECK_THROWS_AS(PeriodicGrid({6, 8}, {1.0, 1.0}), Error);
  CHECK_THROWS_AS(PeriodicGrid({9, 8}, {1.0, 1.0}), Error);
  CHECK_THROWS_AS(PeriodicGrid({8, 8}, {1.0, -1.0}), Error);
  auto g = PeriodicGrid::cube(2, 16);
  CHECK(g.size() == 256);
  CHECK(g.total_volume() == doctest::Approx(1.0));
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g.weight();
  CHECK(s == doctest::Approx(1.0).epsilon(1e-14));

  auto phys = PeriodicGrid::cube(2, 16, 2 * M_PI, false);
  CHECK(phys.total_volume() == doctest::Approx(4 * M_PI * M_PI));
  CHECK(integrate(ScalarField::constant(phys, 1.0)) == doctest::Approx(4 * M_PI * M_PI));
}

TEST_CASE("fields reject non-finite samples") {
  auto g = PeriodicGrid::cube(2, 8);
  std::vector<double> v(g.size(), 0.0);
  v[5] = NAN;
  CHECK_THROWS_AS(ScalarField(g, v), Error);
  v[5] = INFINITY;
  CHECK_THROWS_AS(ScalarField(g, v), Error);
  CHECK_THROWS_AS(ScalarField(g, std::vector<double>(3, 0.0)), Error);
}

TEST_CASE("laplacian examples") {
  auto g = PeriodicGrid::cube(2, 64);
  CHECK(norm(laplacian(ScalarField::constant(g, 3.7)), NormKind::sup()) < 1e-13);

  auto c1 = wave(g, [](auto x) { return std::cos(x[0]); });
  CHECK(sup_diff(laplacian(c1), c1) < 1e-12);

  auto c21 = wave(g, [](auto x) { return std::cos(2 * x[0] + x[1]); });
  CHECK(sup_diff(laplacian(c21), 5.0 * c21) / 5.0 < 1e-12);
}

TEST_CASE("laplacian is exact on every resolvable plane wave") {
  auto g = PeriodicGrid({16, 12}, {2 * M_PI, 3.0});
  for (int m1 = -7; m1 <= 8; ++m1) {
    for (int m2 = -5; m2 <= 6; ++m2) {
      const double k1 = m1, k2 = 2 * M_PI * m2 / 3.0;
      for (int phase = 0; phase < 2; ++phase) {
        auto f = wave(g, [&](auto x) { return std::cos(k1 * x[0] + k2 * x[1] + phase * 0.7); });
        if (norm(f, NormKind::sup()) < 1e-8) continue;  // sin at Nyquist samples to zero
        const double ev = k1 * k1 + k2 * k2;
        const double scale = std::max(1.0, ev);
        CHECK(sup_diff(laplacian(f), ev * f) / scale < 1e-12);
      }
    }
  }
}

TEST_CASE("laplacian integrates to zero and is resolution independent") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = PeriodicGrid::cube(2, 32);
    auto f = random_band_limited(g, 5, rng, 3.0);
    CHECK(std::abs(integrate(laplacian(f))) < 1e-12);
  }
  std::mt19937_64 rng_a(5), rng_b(5);
  auto coarse = PeriodicGrid::cube(2, 32);
  auto fine = PeriodicGrid::cube(2, 64);
  auto fc = random_band_limited(coarse, 6, rng_a);
  auto ff = random_band_limited(fine, 6, rng_b);
  auto lc = laplacian(fc), lf = laplacian(ff);
  double worst = 0.0;
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    auto idx = coarse.multi_index(i);
    const std::size_t j = static_cast<std::size_t>(2 * idx[0]) * 64 + 2 * idx[1];
    worst = std::max(worst, std::abs(lc[i] - lf[j]));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("gradient examples and finite-difference oracle") {
  auto g = PeriodicGrid::cube(2, 32);
  auto zero = gradient(ScalarField::constant(g, 2.0));
  for (const auto& c : zero.components()) CHECK(norm(c, NormKind::sup()) < 1e-13);

  auto s1 = wave(g, [](auto x) { return std::sin(x[0]); });
  auto d = gradient(s1);
  CHECK(sup_diff(d.component(0), wave(g, [](auto x) { return std::cos(x[0]); })) < 1e-13);
  CHECK(norm(d.component(1), NormKind::sup()) < 1e-13);

  // Fourth-order differences converge to the spectral derivative at rate h^4.
  double err[2];
  for (int r = 0; r < 2; ++r) {
    std::mt19937_64 rng(21);
    auto gr = PeriodicGrid::cube(2, r == 0 ? 32 : 64);
    auto f = random_band_limited(gr, 3, rng);
    auto sp = gradient(f);
    err[r] = std::max(sup_diff(sp.component(0), fd4_partial(f, 0)),
                      sup_diff(sp.component(1), fd4_partial(f, 1)));
  }
  const double order = std::log2(err[0] / err[1]);
  CHECK(order == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("lee term examples") {
  auto g = PeriodicGrid::cube(2, 32);
  auto f = wave(g, [](auto x) { return std::sin(x[0]); });
  CHECK(norm(lee_term(OneFormField::zero(g), f), NormKind::sup()) == 0.0);

  OneFormField e1({ScalarField::constant(g, 1.0), ScalarField::zero(g)});
  CHECK(sup_diff(lee_term(e1, f), wave(g, [](auto x) { return std::cos(x[0]); })) < 1e-13);

  auto other = PeriodicGrid::cube(2, 16);
  CHECK_THROWS_AS(lee_term(e1, ScalarField::zero(other)), Error);

  double err[2];
  for (int r = 0; r < 2; ++r) {
    std::mt19937_64 rng(8);
    auto gr = PeriodicGrid::cube(2, r == 0 ? 32 : 64);
    auto th = OneFormField({random_band_limited(gr, 2, rng), random_band_limited(gr, 2, rng)});
    auto u = random_band_limited(gr, 3, rng);
    auto oracle = th.component(0) * fd4_partial(u, 0) + th.component(1) * fd4_partial(u, 1);
    err[r] = sup_diff(lee_term(th, u), oracle);
  }
  CHECK(std::log2(err[0] / err[1]) == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("codifferential examples") {
  auto g = PeriodicGrid::cube(2, 32);
  CHECK(norm(codifferential(OneFormField::zero(g)), NormKind::sup()) == 0.0);
  OneFormField th({wave(g, [](auto x) { return std::cos(x[0]); }), ScalarField::zero(g)});
  CHECK(sup_diff(codifferential(th), wave(g, [](auto x) { return std::sin(x[0]); })) < 1e-13);

  std::mt19937_64 rng(3);
  auto f = random_band_limited(g, 6, rng);
  CHECK(sup_diff(codifferential(gradient(f)), laplacian(f)) < 1e-11);
}

TEST_CASE("integration by parts for the Lee term") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = PeriodicGrid::cube(2, 32);
    auto th = OneFormField({random_band_limited(g, 4, rng), random_band_limited(g, 4, rng)});
    auto f = random_band_limited(g, 5, rng);
    // int g(theta, df) = int f * delta(theta), an exact identity of the skew spectral derivative.
    CHECK(std::abs(integrate(lee_term(th, f)) - integrate(f * codifferential(th))) < 1e-10);
  }
  auto g = PeriodicGrid::cube(2, 32);
  OneFormField coclosed({wave(g, [](auto x) { return 0.1 * std::cos(x[1]); }), ScalarField::zero(g)});
  auto f = random_band_limited(g, 4, rng);
  CHECK(std::abs(integrate(lee_term(coclosed, f))) < 1e-12);
}

TEST_CASE("integration examples") {
  auto g = PeriodicGrid::cube(2, 64);
  CHECK(integrate(ScalarField::constant(g, 1.0)) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(integrate(wave(g, [](auto x) { return std::sin(x[0]); }))) < 1e-15);
  CHECK(integrate(wave(g, [](auto x) { return 3 + std::cos(x[0]) * std::cos(x[1]); })) ==
        doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("norm examples") {
  auto g = PeriodicGrid::cube(2, 64);
  auto zero = ScalarField::zero(g);
  for (auto k : {NormKind::sup(), NormKind::l2(), NormKind::lp(3.0), NormKind::hk2(2), NormKind::holder()})
    CHECK(norm(zero, k) == 0.0);
  auto c = wave(g, [](auto x) { return std::cos(x[0]); });
  CHECK(norm(c, NormKind::l2()) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  // Multiplier (1 + |xi|^2)^{k/2} = 2 on the unit mode gives 2 * sqrt(1/2).
  CHECK(norm(c, NormKind::hk2(2)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(norm(c, NormKind::hk2(0)) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  CHECK(norm(c, NormKind::sup()) == doctest::Approx(1.0));
  // int |cos|^4 = 3/8.
  CHECK(norm(c, NormKind::lp(4.0)) == doctest::Approx(std::pow(3.0 / 8.0, 0.25)).epsilon(1e-13));

  CHECK_THROWS_AS(NormKind::lp(1.0), Error);
  CHECK_THROWS_AS(NormKind::hk2(-1), Error);
  CHECK_THROWS_AS(NormKind::holder(0.0), Error);
  CHECK_THROWS_AS(NormKind::holder(1.5), Error);
}

TEST_CASE("norm monotonicity") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = PeriodicGrid::cube(2, 32);
    auto f = random_band_limited(g, 6, rng, 2.0);
    const double l2 = norm(f, NormKind::l2());
    for (int k = 0; k <= 4; ++k) CHECK(norm(f, NormKind::hk2(k)) >= l2 * (1 - 1e-14));
    for (double a : {0.25, 0.5, 1.0}) CHECK(norm(f, NormKind::holder(a)) >= norm(f, NormKind::sup()));
  }
}

TEST_CASE("four-dimensional grid calculus") {
  auto g = PeriodicGrid::cube(4, 8);
  auto f = wave(g, [](auto x) { return std::cos(x[0] + 2 * x[3]) + std::sin(x[2]); });
  auto expected = wave(g, [](auto x) { return 5 * std::cos(x[0] + 2 * x[3]) + std::sin(x[2]); });
  CHECK(sup_diff(laplacian(f), expected) < 1e-12);
  CHECK(std::abs(integrate(ScalarField::constant(g, 1.0)) - 1.0) < 1e-14);
}

TEST_CASE("field serialization round trip and sidecar") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "cy_field_io_test";
  fs::create_directories(dir);
  std::mt19937_64 rng(4);
  auto g = PeriodicGrid({16, 8}, {2 * M_PI, 1.5}, false);
  auto f = random_band_limited(g, 3, rng);
  write_field(f, dir / "f");
  CHECK(fs::file_size(dir / "f.bin") == g.size() * 8);
  auto back = read_field(dir / "f");
  CHECK(back.grid() == g);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(back[i] == f[i]);

  // First sample of the flat file is the little-endian encoding of f[0].
  std::ifstream in(dir / "f.bin", std::ios::binary);
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[i];
  CHECK(std::bit_cast<double>(bits) == f[0]);

  std::ofstream(dir / "bad.bin", std::ios::binary) << "abc";
  fs::copy_file(dir / "f.json", dir / "bad.json", fs::copy_options::overwrite_existing);
  CHECK_THROWS_AS(read_field(dir / "bad"), Error);
}

TEST_CASE("CSV field import") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "cy_field_io_test";
  fs::create_directories(dir);
  auto g = PeriodicGrid::cube(2, 8);
  {
    std::ofstream out(dir / "f.csv");
    out << "value\n";
    for (std::size_t i = 0; i < g.size(); ++i) out << 0.5 * static_cast<double>(i) << "\n";
  }
  auto f = read_csv_field(dir / "f.csv", g);
  CHECK(f[10] == 5.0);
  {
    std::ofstream out(dir / "short.csv");
    out << "value\n1\n2\n";
  }
  CHECK_THROWS_AS(read_csv_field(dir / "short.csv", g), Error);
  {
    std::ofstream out(dir / "hdr.csv");
    out << "v\n1\n";
  }
  CHECK_THROWS_AS(read_csv_field(dir / "hdr.csv", g), Error);
  CHECK_THROWS_AS(read_csv_field(dir / "f.csv", PeriodicGrid::cube(4, 8)), Error);
}

TEST_CASE("expression grammar") {
  auto g = PeriodicGrid::cube(2, 16);
  auto e = Expression::parse("-1 + 0.1*cos(x1)", 2);
  auto f = sample_expression(e, g);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(f[i] == doctest::Approx(-1 + 0.1 * std::cos(g.coordinate(i, 0))));

  std::vector<double> x{0.3, 1.1};
  CHECK(Expression::parse("2^3 - -1", 2).evaluate(x) == doctest::Approx(9.0));
  CHECK(Expression::parse("exp(x2)*sin(x1)/2", 2).evaluate(x) == doctest::Approx(std::exp(1.1) * std::sin(0.3) / 2));
  CHECK(Expression::parse("pi", 2).evaluate(x) == doctest::Approx(M_PI));
  CHECK(Expression::parse("C + delta*cos(x1)", 2, {{"C", 0.25}, {"delta", 0.01}}).evaluate(x) ==
        doctest::Approx(0.25 + 0.01 * std::cos(0.3)));
  CHECK(Expression::parse("1e-3 * 2", 2).evaluate(x) == doctest::Approx(2e-3));

  auto message = [](const char* src) {
    try {
      Expression::parse(src, 2);
    } catch (const Error& err) {
      CHECK(err.kind() == ErrorKind::ConfigError);
      return std::string(err.what());
    }
    return std::string();
  };
  CHECK(message("sin(").find("position 5") != std::string::npos);
  CHECK(message("cos(x1").find("expected ')'") != std::string::npos);
  CHECK(message("x3 + 1").find("position 1") != std::string::npos);
  CHECK(message("1 + foo").find("unknown identifier") != std::string::npos);
  CHECK(message("1 2").find("position 3") != std::string::npos);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cy/grid.hpp"

namespace cy::testing {

/// Sum of random plane waves with integer frequencies |m_i| <= kmax,
/// scaled so the largest coefficient is `amplitude`.
inline ScalarField random_band_limited(const PeriodicGrid& grid, int kmax, std::mt19937_64& rng,
                                       double amplitude = 1.0, bool zero_mean = false) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  struct Mode {
    std::vector<int> m;
    double a, b;
  };
  std::vector<Mode> modes;
  const int d = grid.dim();
  std::vector<int> m(d, -kmax);
  for (;;) {
    bool skip = zero_mean && std::all_of(m.begin(), m.end(), [](int v) { return v == 0; });
    if (!skip) modes.push_back({m, amplitude * uni(rng), amplitude * uni(rng)});
    int a = 0;
    while (a < d && ++m[a] > kmax) m[a++] = -kmax;
    if (a == d) break;
  }
  return ScalarField::sample(grid, [&](std::span<const double> x) {
    double s = 0.0;
    for (const auto& md : modes) {
      double phase = 0.0;
      for (int a = 0; a < d; ++a) phase += md.m[a] * x[a] * 2.0 * M_PI / grid.lengths()[a];
      s += md.a * std::cos(phase) + md.b * std::sin(phase);
    }
    return s / static_cast<double>(modes.size());
  });
}

/// Fourth-order centered difference along one axis.
inline ScalarField fd4_partial(const ScalarField& f, int axis) {
  const auto& g = f.grid();
  const double h = g.spacing(axis);
  const std::size_t s = g.stride(axis);
  const std::size_t N = g.points_per_axis()[axis];
  std::vector<double> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const std::size_t j = (i / s) % N;
    auto at = [&](long off) {
      const long jj = (static_cast<long>(j) + off + static_cast<long>(N)) % static_cast<long>(N);
      return f[i - j * s + static_cast<std::size_t>(jj) * s];
    };
    out[i] = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
  }
  return ScalarField(g, std::move(out));
}

/// Fourth-order finite-difference Laplacian (geometer's sign).
inline ScalarField fd4_laplacian(const ScalarField& f) {
  const auto& g = f.grid();
  std::vector<double> out(f.size(), 0.0);
  for (int axis = 0; axis < g.dim(); ++axis) {
    const double h = g.spacing(axis);
    const std::size_t s = g.stride(axis);
    const std::size_t N = g.points_per_axis()[axis];
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::size_t j = (i / s) % N;
      auto at = [&](long off) {
        const long jj = (static_cast<long>(j) + off + static_cast<long>(N)) % static_cast<long>(N);
        return f[i - j * s + static_cast<std::size_t>(jj) * s];
      };
      const double d2 = (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2)) / (12.0 * h * h);
      out[i] -= d2;
    }
  }
  return ScalarField(g, std::move(out));
}

inline double sup_diff(const ScalarField& a, const ScalarField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace cy::testing

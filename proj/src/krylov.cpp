#include "cy/krylov.hpp"

#include <cmath>
#include <numeric>

namespace cy {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double nrm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

GmresResult gmres(const LinearOperator& op, const LinearOperator& preconditioner,
                  std::span<const double> rhs, const GmresOptions& options,
                  std::span<const double> initial_guess) {
  const std::size_t n = rhs.size();
  GmresResult result;
  result.x.assign(n, 0.0);
  if (!initial_guess.empty()) result.x.assign(initial_guess.begin(), initial_guess.end());

  const double bnorm = nrm(rhs);
  if (bnorm == 0.0) {
    result.x.assign(n, 0.0);
    result.converged = true;
    return result;
  }

  const int m = options.restart;
  std::vector<std::vector<double>> V(m + 1, std::vector<double>(n));
  std::vector<std::vector<double>> H(m + 1, std::vector<double>(m, 0.0));
  std::vector<double> cs(m), sn(m), g(m + 1);

  double previous_beta = INFINITY;
  while (result.iterations < options.max_iterations) {
    auto Ax = op(result.x);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - Ax[i];
    double beta = nrm(r);
    result.relative_residual = beta / bnorm;
    if (result.relative_residual <= options.relative_tolerance) {
      result.converged = true;
      return result;
    }
    // A whole restart cycle without progress means we hit the round-off floor.
    if (beta > 0.99 * previous_beta) return result;
    previous_beta = beta;
    for (std::size_t i = 0; i < n; ++i) V[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;

    int j = 0;
    for (; j < m && result.iterations < options.max_iterations; ++j) {
      ++result.iterations;
      auto w = op(preconditioner(V[j]));
      for (int i = 0; i <= j; ++i) {
        H[i][j] = dot(w, V[i]);
        for (std::size_t q = 0; q < n; ++q) w[q] -= H[i][j] * V[i][q];
      }
      H[j + 1][j] = nrm(w);
      if (H[j + 1][j] > 0.0)
        for (std::size_t q = 0; q < n; ++q) V[j + 1][q] = w[q] / H[j + 1][j];

      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * H[i][j] + sn[i] * H[i + 1][j];
        H[i + 1][j] = -sn[i] * H[i][j] + cs[i] * H[i + 1][j];
        H[i][j] = t;
      }
      const double denom = std::hypot(H[j][j], H[j + 1][j]);
      cs[j] = denom == 0.0 ? 1.0 : H[j][j] / denom;
      sn[j] = denom == 0.0 ? 0.0 : H[j + 1][j] / denom;
      H[j][j] = denom;
      H[j + 1][j] = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      if (std::abs(g[j + 1]) / bnorm <= options.relative_tolerance || H[j][j] == 0.0) {
        ++j;
        break;
      }
    }

    // Back substitution on the j x j triangular system.
    std::vector<double> y(j, 0.0);
    for (int i = j - 1; i >= 0; --i) {
      double s = g[i];
      for (int k = i + 1; k < j; ++k) s -= H[i][k] * y[k];
      y[i] = H[i][i] == 0.0 ? 0.0 : s / H[i][i];
    }
    std::vector<double> update(n, 0.0);
    for (int i = 0; i < j; ++i)
      for (std::size_t q = 0; q < n; ++q) update[q] += y[i] * V[i][q];
    const auto z = preconditioner(update);
    for (std::size_t q = 0; q < n; ++q) result.x[q] += z[q];
  }

  auto Ax = op(result.x);
  double rr = 0.0;
  for (std::size_t i = 0; i < n; ++i) rr += (rhs[i] - Ax[i]) * (rhs[i] - Ax[i]);
  result.relative_residual = std::sqrt(rr) / bnorm;
  result.converged = result.relative_residual <= options.relative_tolerance;
  return result;
}

}  // namespace cy

#pragma once

#include <functional>
#include <span>
#include <vector>

namespace cy {

using LinearOperator = std::function<std::vector<double>(std::span<const double>)>;

struct GmresOptions {
  double relative_tolerance = 1e-13;
  int restart = 60;
  int max_iterations = 2000;
};

struct GmresResult {
  std::vector<double> x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Restarted GMRES with right preconditioning, so the monitored residual is
/// the true residual ||b - A x|| / ||b||. `preconditioner` applies M^{-1}.
GmresResult gmres(const LinearOperator& op, const LinearOperator& preconditioner,
                  std::span<const double> rhs, const GmresOptions& options = {},
                  std::span<const double> initial_guess = {});

}  // namespace cy

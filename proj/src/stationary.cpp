#include "cy/stationary.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "cy/error.hpp"
#include "cy/krylov.hpp"

namespace cy {

namespace {

std::vector<double> to_vec(const ScalarField& f) { return {f.values().begin(), f.values().end()}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Clamped Fourier inverse of |k|^2 + offset, used as a right preconditioner.
LinearOperator diagonal_preconditioner(const PeriodicGrid& g, double offset, double clamp,
                                       std::optional<double> zero_mode = std::nullopt) {
  return [g, offset, clamp, zero_mode](std::span<const double> x) {
    auto c = g.forward(x);
    const auto lap = g.laplacian_symbol();
    for (std::size_t i = 0; i < c.size(); ++i) {
      double d = lap[i] + offset;
      if (i == 0 && zero_mode) d = *zero_mode;
      if (std::abs(d) < clamp) d = d < 0 ? -clamp : clamp;
      c[i] /= d;
    }
    return g.inverse(c);
  };
}

}  // namespace

void FixedPointConfig::validate(int n) const {
  if (gate_norm.tag() == NormKind::Tag::Lp) {
    if (!(gate_norm.parameter() > n))
      throw Error(ErrorKind::InvalidArgument, "Lp pinching gate needs p > n");
  } else if (gate_norm.tag() != NormKind::Tag::Holder) {
    throw Error(ErrorKind::InvalidArgument, "pinching gate norm must be holder or lp");
  }
  if (!(ball_radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "ball radius must be positive");
  if (max_iter < 1) throw Error(ErrorKind::InvalidArgument, "max_iter must be >= 1");
  if (!(tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "tol must be positive");
  NormKind::holder(holder_alpha);
}

FixedPointOperator::FixedPointOperator(const ProblemSpec& p, const FixedPointConfig& cfg)
    : p_(p), cfg_(cfg), shift_(2.0 * cfg.target_constant / p.n()) {
  cfg_.validate(p.n());
  gate_ = spectral_gate(p, cfg_.target_constant);
  if (!gate_.passed) {
    std::ostringstream os;
    os << "spectral gate failed for C = " << cfg_.target_constant << ": distance " << gate_.distance
       << " to the spectrum of Delta + g(theta,d.) at 2C/n";
    throw Error(ErrorKind::SingularOperator, os.str());
  }
}

ScalarField FixedPointOperator::solve(const ScalarField& f) const {
  const auto& g = p_.grid();
  if (p_.is_balanced()) {
    auto c = g.forward(f.values());
    const auto lap = g.laplacian_symbol();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] /= lap[i] - shift_;
    return ScalarField(g, g.inverse(c));
  }
  const auto& theta = p_.lee();
  LinearOperator A = [&](std::span<const double> x) {
    ScalarField w(g, {x.begin(), x.end()});
    return to_vec(laplacian(w) + lee_term(theta, w) - shift_ * w);
  };
  auto r = gmres(A, diagonal_preconditioner(g, -shift_, 0.25), f.values());
  if (!r.converged) {
    std::ostringstream os;
    os << "linear solve stalled at relative residual " << r.relative_residual;
    throw Error(ErrorKind::LinearSolveDivergence, os.str());
  }
  return ScalarField(g, std::move(r.x));
}

ScalarField FixedPointOperator::operator()(const ScalarField& u) const {
  require_same_grid(p_.grid(), u.grid(), "fixed_point_map");
  check_exponent_range(u, p_.n(), "fixed_point_map");
  const double C = cfg_.target_constant;
  const double k = 2.0 / p_.n();
  std::vector<double> f(u.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double z = k * u[i];
    f[i] = C - p_.scal()[i] + C * (std::expm1(z) - z);
  }
  return solve(ScalarField(u.grid(), std::move(f)));
}

ScalarField fixed_point_map(const ProblemSpec& p, const FixedPointConfig& cfg, const ScalarField& u) {
  return FixedPointOperator(p, cfg)(u);
}

void ContractionResult::write_log_csv(std::ostream& os) const {
  os << kCsvHeader << '\n';
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.iter, r.step_norm, r.contraction_factor,
                  r.ball_norm);
    os << buf;
  }
}

ContractionResult run_contraction(const ProblemSpec& p, const FixedPointConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  FixedPointOperator T(p, cfg);
  const NormKind ball = NormKind::holder(cfg.holder_alpha);

  ContractionResult out;
  out.pinching_distance = norm(p.scal() - cfg.target_constant, cfg.gate_norm);
  std::vector<GateOutcome> gates;
  gates.push_back({"spectral", true, T.gate().distance, "sigma_min at 2C/n via " + T.gate().method});
  // the other reading of the condition, C itself against the spectrum; informational
  gates.push_back({"spectral-constant", T.gate().constant_distance > SpectralGateOptions{}.tolerance,
                   T.gate().constant_distance, "sigma_min at C, not gating"});
  {
    std::ostringstream os;
    os << "||s^C - C|| in " << (cfg.gate_norm.tag() == NormKind::Tag::Lp ? "Lp" : "Holder") << "("
       << cfg.gate_norm.parameter() << ")";
    if (cfg.pinching_threshold) os << " vs eps0 = " << *cfg.pinching_threshold;
    else os << ", logged only";
    const bool ok = !cfg.pinching_threshold || out.pinching_distance < *cfg.pinching_threshold;
    gates.push_back({"pinching", ok, out.pinching_distance, os.str()});
  }

  ScalarField u = ScalarField::zero(p.grid());
  double prev_step = NAN;
  std::string status = "NoConvergence";
  int iter = 0;
  while (iter < cfg.max_iter) {
    ++iter;
    std::optional<ScalarField> next;
    try {
      next = T(u);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Overflow) throw;
      status = "EscapedBall";
      break;
    }
    const double step = norm(*next - u, ball);
    const double ball_norm = norm(*next, ball);
    const double factor = std::isnan(prev_step) || prev_step == 0.0 ? NAN : step / prev_step;
    out.log.push_back({iter, step, factor, ball_norm});
    // Factors between round-off sized steps carry no information.
    if (!std::isnan(factor) && step >= 1e2 * cfg.tol)
      out.max_contraction_factor = std::max(out.max_contraction_factor, factor);
    u = std::move(*next);
    prev_step = step;
    if (ball_norm >= cfg.ball_radius) {
      status = "EscapedBall";
      break;
    }
    if (step < cfg.tol) {
      status = "Converged";
      break;
    }
  }

  if (status == "Converged") {
    auto ns = normalize_solution(p, u, cfg.target_constant);
    out.report = make_report(p, std::move(ns.u), ns.lambda, Method::FixedPoint);
    out.report.converged = true;
  } else {
    out.report.method = Method::FixedPoint;
    out.report.lambda_star = cfg.target_constant;
    out.report.residual_sup = out.report.residual_l2 = NAN;
    out.report.converged = false;
  }
  out.report.status = status;
  out.report.iterations_or_steps = iter;
  out.report.gate_outcomes = std::move(gates);
  out.report.wall_time = seconds_since(started);
  return out;
}

Epsilon0Calibration calibrate_epsilon0(const ProblemSpec& base, const ScalarField& shape,
                                       const FixedPointConfig& cfg, double max_amplitude,
                                       int bisection_steps) {
  if (!(max_amplitude > 0.0)) throw Error(ErrorKind::InvalidArgument, "max_amplitude must be positive");
  Epsilon0Calibration cal;
  auto converges = [&](double amp) {
    ++cal.evaluations;
    auto p = base.with_scal(ScalarField::constant(base.grid(), cfg.target_constant) + amp * shape);
    return run_contraction(p, cfg).report.converged;
  };
  double lo = 0.0, hi = max_amplitude;
  if (converges(hi)) {
    lo = hi;
    hi = INFINITY;
  } else {
    for (int i = 0; i < bisection_steps; ++i) {
      const double mid = 0.5 * (lo + hi);
      (converges(mid) ? lo : hi) = mid;
    }
  }
  cal.amplitude = lo;
  cal.failing_amplitude = hi;
  cal.epsilon0 = norm(lo * shape, cfg.gate_norm);
  return cal;
}

// ---------------------------------------------------------------------------

namespace {

struct OracleModel {
  const ProblemSpec& p;
  OracleMode mode;
  double fixed_lambda;

  double lambda_of(const ScalarField& e) const {
    return mode == OracleMode::Normalized ? integrate(p.scal()) / integrate(e) : fixed_lambda;
  }

  ScalarField exp_factor(const ScalarField& u) const {
    check_exponent_range(u, p.n(), "newton_galerkin_oracle");
    const double k = 2.0 / p.n();
    return u.map([k](double v) { return std::exp(k * v); });
  }

  ScalarField G(const ScalarField& u, const ScalarField& e) const {
    return laplacian(u) + lee_term(p.lee(), u) + p.scal() - lambda_of(e) * e;
  }

  // Jacobian action; normalized mode adds mean(phi) to pin the constant mode.
  ScalarField J(const ScalarField& phi, const ScalarField& e) const {
    const double lam = lambda_of(e);
    const double k = 2.0 / p.n();
    auto out = laplacian(phi) + lee_term(p.lee(), phi) - (k * lam) * (e * phi);
    if (mode == OracleMode::Normalized) {
      const double I = integrate(e);
      const double S = integrate(p.scal());
      out += (S / (I * I) * k * integrate(e * phi)) * e;
      out += ScalarField::constant(phi.grid(), mean(phi));
    }
    return out;
  }
};

}  // namespace

OracleResult newton_galerkin_oracle(const ProblemSpec& p, const OracleConfig& cfg, const ScalarField& u0) {
  const auto started = std::chrono::steady_clock::now();
  require_same_grid(p.grid(), u0.grid(), "newton_galerkin_oracle");
  if (cfg.max_iter < 1 || !(cfg.tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "bad oracle config");
  const auto& g = p.grid();
  const std::size_t M = g.size();
  OracleModel model{p, cfg.mode, cfg.lambda};

  OracleResult out;
  out.dense = M <= cfg.dense_limit;
  ScalarField u = cfg.mode == OracleMode::Normalized ? u0 - mean(u0) : u0;
  auto e = model.exp_factor(u);
  auto G = model.G(u, e);
  double r = norm(G, NormKind::sup());
  out.residual_history.push_back(r);

  int it = 0;
  bool converged = r < cfg.tol;
  while (!converged && it < cfg.max_iter) {
    ++it;
    std::vector<double> rhs(M);
    for (std::size_t i = 0; i < M; ++i) rhs[i] = -G[i];
    std::vector<double> delta;
    if (out.dense) {
      Eigen::MatrixXd Jm(M, M);
      std::vector<double> unit(M, 0.0);
      for (std::size_t j = 0; j < M; ++j) {
        unit[j] = 1.0;
        auto col = model.J(ScalarField(g, unit), e);
        unit[j] = 0.0;
        for (std::size_t i = 0; i < M; ++i) Jm(i, j) = col[i];
      }
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(Jm);
      const double rc = lu.rcond();
      if (!(rc > 1e-14)) {
        std::ostringstream os;
        os << "Jacobian reciprocal condition " << rc << " at iteration " << it;
        throw Error(ErrorKind::JacobianSingular, os.str());
      }
      Eigen::VectorXd x = lu.solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), M));
      delta.assign(x.data(), x.data() + M);
    } else {
      LinearOperator A = [&](std::span<const double> x) {
        return to_vec(model.J(ScalarField(g, {x.begin(), x.end()}), e));
      };
      const double offset = -(2.0 / p.n()) * model.lambda_of(e) * mean(e);
      std::optional<double> zero_mode;
      if (cfg.mode == OracleMode::Normalized) zero_mode = 1.0;
      GmresOptions opt;
      opt.relative_tolerance = 1e-12;
      auto sol = gmres(A, diagonal_preconditioner(g, offset, 0.25, zero_mode), rhs, opt);
      if (!sol.converged && sol.relative_residual > 1e-8) {
        std::ostringstream os;
        os << "Newton-Krylov inner solve stalled at " << sol.relative_residual;
        throw Error(ErrorKind::JacobianSingular, os.str());
      }
      delta = std::move(sol.x);
    }

    // Backtrack on sup |G| only when the full step makes things worse.
    const ScalarField d(g, std::move(delta));
    double t = 1.0;
    for (int bt = 0;; ++bt) {
      ScalarField trial = u + t * d;
      if (cfg.mode == OracleMode::Normalized) trial = trial - mean(trial);
      try {
        auto et = model.exp_factor(trial);
        auto Gt = model.G(trial, et);
        const double rt = norm(Gt, NormKind::sup());
        if (rt < r || bt >= 30) {
          u = std::move(trial);
          e = std::move(et);
          G = std::move(Gt);
          r = rt;
          break;
        }
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::Overflow || bt >= 30) throw;
      }
      t *= 0.5;
    }
    out.residual_history.push_back(r);
    converged = r < cfg.tol;
  }

  // Order estimate from the tail above the round-off floor.
  std::vector<double> tail;
  for (double v : out.residual_history)
    if (v > 1e-13) tail.push_back(v);
  out.observed_order = NAN;
  if (tail.size() >= 3) {
    const std::size_t k = tail.size() - 1;
    const double num = std::log(tail[k] / tail[k - 1]);
    const double den = std::log(tail[k - 1] / tail[k - 2]);
    if (den != 0.0) out.observed_order = num / den;
  }

  const double lam = model.lambda_of(e);
  out.report = make_report(p, u, lam, Method::Oracle);
  out.report.converged = converged;
  out.report.status = converged ? "Converged" : "NoConvergence";
  out.report.iterations_or_steps = it;
  out.report.gate_outcomes.push_back(
      {"newton-order", std::isnan(out.observed_order) || out.observed_order > 1.5, out.observed_order,
       out.dense ? "dense LU" : "Newton-Krylov"});
  out.report.wall_time = seconds_since(started);
  return out;
}

}  // namespace cy

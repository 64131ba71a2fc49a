#include "cy/flow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "cy/error.hpp"

namespace cy {

void FlowConfig::validate() const {
  if (!(dt > 0.0) || dt > 1.0) throw Error(ErrorKind::InvalidArgument, "flow dt must lie in (0, 1]");
  if (!(t_max > 0.0)) throw Error(ErrorKind::InvalidArgument, "flow t_max must be positive");
  if (record_every < 1) throw Error(ErrorKind::InvalidArgument, "record_every must be >= 1");
  if (hk_order < 0) throw Error(ErrorKind::InvalidArgument, "hk_order must be >= 0");
  if (lambda_mode == LambdaMode::Constant && !std::isfinite(lambda))
    throw Error(ErrorKind::InvalidArgument, "constant lambda must be finite");
}

void FlowTrace::append(const TraceRow& row) {
  if (!rows_.empty() && !(row.t > rows_.back().t))
    throw Error(ErrorKind::InvalidArgument, "trace times must be strictly increasing");
  rows_.push_back(row);
}

void FlowTrace::write_csv(std::ostream& os) const {
  os << kCsvHeader << '\n';
  char buf[512];
  for (const auto& r : rows_) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t,
                  r.lambda, r.mean_u, r.sup_u, r.hk_u, r.sup_v, r.l2_v, r.sup_grad_v, r.barrier_lo,
                  r.barrier_hi);
    os << buf;
  }
}

// ---------------------------------------------------------------------------

BarrierParams BarrierParams::make(double a, double b, double c0, double lambda, int n) {
  if (!(a > 0.0) || !(b > a)) throw Error(ErrorKind::DomainError, "barrier needs 0 < a < b");
  if (!(lambda < 0.0)) throw Error(ErrorKind::DomainError, "barrier needs lambda < 0");
  if (n < 1) throw Error(ErrorKind::DomainError, "barrier needs n >= 1");
  BarrierParams bp{a, b, c0, lambda, n, 0.0, 0.0};
  const double up = lambda * std::exp(2.0 * c0 / n);
  const double down = lambda * std::exp(-2.0 * c0 / n);
  const double d1 = b + up;
  const double d2 = a + down;
  if (std::abs(d1) < 1e-12 * std::max(b, std::abs(up)) || std::abs(d2) < 1e-12 * std::max(a, std::abs(down)))
    throw Error(ErrorKind::DomainError, "barrier constants c1 or c2 are singular for this c0");
  bp.c1 = -up / d1;
  bp.c2 = down / d2;
  return bp;
}

Envelope barrier_envelope(const BarrierParams& bp, double t) {
  if (t < 0.0) throw Error(ErrorKind::DomainError, "barrier time must be nonnegative");
  const double half_n = 0.5 * bp.n;
  const double e1 = std::exp(2.0 * bp.b * t / bp.n);
  const double e2 = std::exp(2.0 * bp.a * t / bp.n);
  // c e/(1 + c e) and c e/(c e - 1), rewritten to stay finite as e grows.
  const double r1 = bp.c1 / (1.0 / e1 + bp.c1);
  const double r2 = bp.c2 / (bp.c2 - 1.0 / e2);
  const double arg1 = -(bp.b / bp.lambda) * r1;
  const double arg2 = -(bp.a / bp.lambda) * r2;
  if (!(arg1 > 0.0) || !(arg2 > 0.0))
    throw Error(ErrorKind::DomainError, "barrier logarithm argument is not positive");
  const double y1 = half_n * std::log(arg1);
  const double y2 = -half_n * std::log(arg2);
  return {-y2, y1};
}

BarrierParams barrier_params_for(const ProblemSpec& p, double lambda, const ScalarField& u0) {
  constexpr double kMargin = 1e-3;
  const double a = -p.scal().max() * (1.0 - kMargin);
  const double b = -p.scal().min() * (1.0 + kMargin);
  return BarrierParams::make(a, b, norm(u0, NormKind::sup()) + 1.0, lambda, p.n());
}

// ---------------------------------------------------------------------------

namespace {

ScalarField exp_factor(const ScalarField& u, int n) {
  const double s = 2.0 / n;
  return u.map([s](double v) { return std::exp(s * v); });
}

}  // namespace

double normalized_lambda(const ProblemSpec& p, const ScalarField& u) {
  return integrate(p.scal()) / integrate(exp_factor(u, p.n()));
}

ScalarField rhs(const ProblemSpec& p, const ScalarField& u, double lambda) {
  require_same_grid(p.grid(), u.grid(), "rhs");
  check_exponent_range(u, p.n(), "rhs");
  const auto lap = laplacian(u);
  const auto adv = lee_term(p.lee(), u);
  const auto e = exp_factor(u, p.n());
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -lap[i] - p.scal()[i] - adv[i] + lambda * e[i];
  return ScalarField(u.grid(), std::move(out));
}

EtdStepper::EtdStepper(const ProblemSpec& p, const FlowConfig& cfg) : p_(p), cfg_(cfg) {
  cfg_.validate();
  const auto lap = p.grid().laplacian_symbol();
  decay_.resize(lap.size());
  phi1_.resize(lap.size());
  phi2_.resize(lap.size());
  for (std::size_t i = 0; i < lap.size(); ++i) {
    const double z = -cfg_.dt * lap[i];
    decay_[i] = std::exp(z);
    if (std::abs(z) < 1e-4) {
      phi1_[i] = 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
      phi2_[i] = 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0;
    } else {
      phi1_[i] = std::expm1(z) / z;
      phi2_[i] = (std::expm1(z) - z) / (z * z);
    }
  }
}

double EtdStepper::lambda_for(const ScalarField& u) const {
  return cfg_.lambda_mode == LambdaMode::Normalized ? normalized_lambda(p_, u) : cfg_.lambda;
}

ScalarField EtdStepper::nonlinear(const ScalarField& u, double lambda) const {
  check_exponent_range(u, p_.n(), "flow");
  const auto adv = lee_term(p_.lee(), u);
  const double s = 2.0 / p_.n();
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -adv[i] - p_.scal()[i] + lambda * std::exp(s * u[i]);
  return ScalarField(u.grid(), std::move(out));
}

FlowState EtdStepper::initial_state(const ScalarField& u0) const {
  const double lam = lambda_for(u0);
  return {0.0, u0, rhs(p_, u0, lam), lam};
}

FlowState EtdStepper::step(const FlowState& state) const {
  const auto& g = p_.grid();
  const auto lap = g.laplacian_symbol();
  const double dt = cfg_.dt;
  try {
    auto u_hat = g.forward(state.u.values());
    // N(u) = v + Delta u, reusing the stored time derivative.
    auto n_hat = g.forward(state.v.values());
    for (std::size_t i = 0; i < n_hat.size(); ++i) n_hat[i] += lap[i] * u_hat[i];

    std::vector<Complex> a_hat(u_hat.size());
    for (std::size_t i = 0; i < a_hat.size(); ++i) a_hat[i] = decay_[i] * u_hat[i] + dt * phi1_[i] * n_hat[i];
    ScalarField a(g, g.inverse(a_hat));

    ScalarField next = a;
    if (cfg_.stepper == Stepper::Etd2rk) {
      const auto na_hat = g.forward(nonlinear(a, lambda_for(a)).values());
      for (std::size_t i = 0; i < a_hat.size(); ++i) a_hat[i] += dt * phi2_[i] * (na_hat[i] - n_hat[i]);
      next = ScalarField(g, g.inverse(a_hat));
    }
    const double lam = lambda_for(next);
    auto v = rhs(p_, next, lam);
    return {state.t + dt, std::move(next), std::move(v), lam};
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Overflow) throw;
    std::ostringstream os;
    os << "flow overflowed near t = " << state.t + dt << " (" << e.what() << ")";
    throw Error(ErrorKind::BlowUp, os.str());
  }
}

FlowState step_etd(const ProblemSpec& p, const FlowState& state, const FlowConfig& cfg) {
  return EtdStepper(p, cfg).step(state);
}

// ---------------------------------------------------------------------------

namespace {

TraceRow make_row(const FlowState& s, int hk_order, const BarrierParams* barrier) {
  TraceRow r;
  r.t = s.t;
  r.lambda = s.lambda_t;
  r.mean_u = mean(s.u);
  r.sup_u = norm(s.u, NormKind::sup());
  r.hk_u = norm(s.u, NormKind::hk2(hk_order));
  r.sup_v = norm(s.v, NormKind::sup());
  r.l2_v = norm(s.v, NormKind::l2());
  r.sup_grad_v = pointwise_length(gradient(s.v)).max();
  r.min_u = s.u.min();
  r.max_u = s.u.max();
  if (barrier) {
    const auto env = barrier_envelope(*barrier, s.t);
    r.barrier_lo = env.lo;
    r.barrier_hi = env.hi;
  } else {
    r.barrier_lo = r.barrier_hi = NAN;
  }
  return r;
}

}  // namespace

FlowResult run_flow(const ProblemSpec& p, const FlowConfig& cfg, const ScalarField& u0) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();
  require_same_grid(p.grid(), u0.grid(), "run_flow");

  std::vector<GateOutcome> gates;
  std::optional<BarrierParams> barrier;
  if (cfg.lambda_mode == LambdaMode::Constant) {
    auto sign = sign_gate(p, SignExpectation::Negative);
    gates.push_back(sign);
    gates.push_back({"lambda-negative", cfg.lambda < 0.0, cfg.lambda, "constant lambda"});
    if (!sign.passed || !(cfg.lambda < 0.0))
      throw Error(ErrorKind::PreconditionViolation, "constant-lambda flow needs s^C < 0 and lambda < 0");
    if (cfg.barriers) barrier = barrier_params_for(p, cfg.lambda, u0);
  } else {
    const bool balanced = p.is_balanced();
    const double u0_sup = norm(u0, NormKind::sup());
    gates.push_back({"balanced", balanced, p.is_balanced() ? 0.0 : 1.0, "theta = 0"});
    gates.push_back({"zero-initial-data", u0_sup == 0.0, u0_sup, "||u0||_sup"});
    if (!balanced || u0_sup != 0.0)
      throw Error(ErrorKind::PreconditionViolation, "normalized flow needs theta = 0 and u0 = 0");
  }

  EtdStepper stepper(p, cfg);
  FlowResult result;
  FlowState state = stepper.initial_state(u0);
  const BarrierParams* bp = barrier ? &*barrier : nullptr;
  result.trace.append(make_row(state, cfg.hk_order, bp));

  const bool early_stop = cfg.stop_tol > 0.0;
  const long max_steps = static_cast<long>(std::floor(cfg.t_max / cfg.dt + 1e-9));
  long steps = 0;
  double sup_v = norm(state.v, NormKind::sup());
  bool stopped = early_stop && sup_v < cfg.stop_tol;
  while (!stopped && steps < max_steps) {
    state = stepper.step(state);
    state.t = (steps + 1) * cfg.dt;
    ++steps;
    sup_v = norm(state.v, NormKind::sup());
    stopped = early_stop && sup_v < cfg.stop_tol;
    if (steps % cfg.record_every == 0 || stopped || steps == max_steps)
      result.trace.append(make_row(state, cfg.hk_order, bp));
  }

  const Method method = cfg.lambda_mode == LambdaMode::Constant ? Method::Flow : Method::FlowNormalized;
  result.report = make_report(p, state.u, state.lambda_t, method);
  result.report.iterations_or_steps = steps;
  result.report.gate_outcomes = std::move(gates);
  if (early_stop) {
    result.report.converged = stopped;
    result.report.status = stopped ? "Converged" : "MaxTimeExceeded";
  } else {
    result.report.converged = sup_v < 1e-10;
    result.report.status = "HorizonReached";
  }
  result.report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

// ---------------------------------------------------------------------------

DecayFit fit_decay(const FlowTrace& trace, DecayColumn column) {
  const auto& rows = trace.rows();
  std::vector<double> ts, ys;
  for (std::size_t i = rows.size() / 2; i < rows.size(); ++i) {
    double v = 0.0;
    switch (column) {
      case DecayColumn::SupV: v = rows[i].sup_v; break;
      case DecayColumn::L2VSq: v = 0.5 * rows[i].l2_v * rows[i].l2_v; break;
      case DecayColumn::SupGradV: v = rows[i].sup_grad_v; break;
    }
    if (v > 0.0 && std::isfinite(v)) {
      ts.push_back(rows[i].t);
      ys.push_back(std::log(v));
    }
  }
  if (ts.size() < 10)
    throw Error(ErrorKind::InsufficientData, "decay fit needs >= 10 positive rows in the second half");
  const double m = static_cast<double>(ts.size());
  double st = 0, sy = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sy += ys[i];
  }
  const double tm = st / m, ym = sy / m;
  double stt = 0, sty = 0, syy = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    stt += (ts[i] - tm) * (ts[i] - tm);
    sty += (ts[i] - tm) * (ys[i] - ym);
    syy += (ys[i] - ym) * (ys[i] - ym);
  }
  DecayFit fit;
  fit.rate = sty / stt;
  const double intercept = ym - fit.rate * tm;
  fit.prefactor = std::exp(intercept);
  double ss_res = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double e = ys[i] - (intercept + fit.rate * ts[i]);
    ss_res += e * e;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

double mean_drift(const FlowTrace& trace) {
  double m = 0.0;
  for (const auto& r : trace.rows()) m = std::max(m, std::abs(r.mean_u));
  return m;
}

double envelope_violation(const FlowTrace& trace) {
  double worst = 0.0;
  for (const auto& r : trace.rows()) {
    if (std::isnan(r.barrier_lo)) continue;
    worst = std::max({worst, r.barrier_lo - r.min_u, r.max_u - r.barrier_hi});
  }
  return worst;
}

double min_conformal_factor(const FlowTrace& trace, int n) {
  double m = INFINITY;
  for (const auto& r : trace.rows()) m = std::min(m, std::exp(2.0 * r.min_u / n));
  return m;
}

}  // namespace cy

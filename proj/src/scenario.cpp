#include "cy/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "cy/energy.hpp"
#include "cy/error.hpp"
#include "cy/expression.hpp"
#include "cy/field_io.hpp"
#include "cy/flow.hpp"
#include "cy/stationary.hpp"

namespace cy {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::ConfigError, what); }

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    config_error(std::string("field '") + key + "': " + e.what());
  }
}

const json& section(const json& doc, const char* key) {
  static const json empty = json::object();
  if (!doc.contains(key)) return empty;
  if (!doc.at(key).is_object()) config_error(std::string("'") + key + "' must be an object");
  return doc.at(key);
}

std::map<std::string, double> parameters(const json& problem) {
  std::map<std::string, double> out;
  if (!problem.contains("params")) return out;
  const auto& p = problem.at("params");
  if (!p.is_object()) config_error("problem.params must be an object");
  for (auto it = p.begin(); it != p.end(); ++it) {
    if (!it.value().is_number()) config_error("parameter '" + it.key() + "' must be a number");
    out[it.key()] = it.value().get<double>();
  }
  return out;
}

PeriodicGrid parse_grid(const json& problem) {
  const int n = get_or(problem, "n", 1);
  if (n < 1) config_error("problem.n must be >= 1");
  const int dim = 2 * n;
  const auto& g = section(problem, "grid");
  std::vector<int> pts;
  if (!g.contains("points")) {
    pts.assign(dim, 32);
  } else if (g.at("points").is_number_integer()) {
    pts.assign(dim, g.at("points").get<int>());
  } else {
    pts = get_or(g, "points", std::vector<int>{});
  }
  std::vector<double> len;
  if (!g.contains("length")) {
    len.assign(dim, 2.0 * std::numbers::pi);
  } else if (g.at("length").is_number()) {
    len.assign(dim, g.at("length").get<double>());
  } else {
    len = get_or(g, "length", std::vector<double>{});
  }
  if (static_cast<int>(pts.size()) != dim || static_cast<int>(len.size()) != dim)
    config_error("grid axes must match the real dimension 2n");
  return PeriodicGrid(pts, len, get_or(g, "normalized", true));
}

ScalarField field_source(const json& src, const PeriodicGrid& grid, const std::map<std::string, double>& params,
                         const fs::path& base, const char* what) {
  if (src.is_number()) return ScalarField::constant(grid, src.get<double>());
  if (src.is_string()) return sample_expression(Expression::parse(src.get<std::string>(), grid.dim(), params), grid);
  if (src.is_object() && src.contains("file")) {
    auto f = read_field(base / src.at("file").get<std::string>());
    if (!(f.grid() == grid)) config_error(std::string(what) + ": stored field grid differs from the problem grid");
    return f;
  }
  if (src.is_object() && src.contains("csv")) return read_csv_field(base / src.at("csv").get<std::string>(), grid);
  config_error(std::string(what) + " must be a number, an expression, {\"file\"} or {\"csv\"}");
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

FlowConfig parse_flow(const json& j) {
  FlowConfig c;
  const auto mode = lower(get_or<std::string>(j, "lambda_mode", "constant"));
  if (mode == "constant") c.lambda_mode = LambdaMode::Constant;
  else if (mode == "normalized") c.lambda_mode = LambdaMode::Normalized;
  else config_error("lambda_mode must be constant or normalized");
  c.lambda = get_or(j, "lambda", c.lambda);
  c.dt = get_or(j, "dt", c.dt);
  c.t_max = get_or(j, "t_max", c.t_max);
  c.stop_tol = get_or(j, "stop_tol", c.stop_tol);
  const auto st = lower(get_or<std::string>(j, "stepper", "etd2rk"));
  if (st == "etd1") c.stepper = Stepper::Etd1;
  else if (st == "etd2rk") c.stepper = Stepper::Etd2rk;
  else config_error("stepper must be etd1 or etd2rk");
  c.record_every = get_or(j, "record_every", c.record_every);
  c.hk_order = get_or(j, "hk_order", c.hk_order);
  c.barriers = get_or(j, "barriers", c.barriers);
  try {
    c.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  return c;
}

NormKind parse_norm(const json& j) {
  if (j.is_string()) {
    const auto s = lower(j.get<std::string>());
    if (s == "holder") return NormKind::holder(0.5);
    if (s == "sup") return NormKind::sup();
    config_error("unknown norm '" + s + "'");
  }
  if (j.is_object() && j.contains("holder")) return NormKind::holder(j.at("holder").get<double>());
  if (j.is_object() && j.contains("lp")) return NormKind::lp(j.at("lp").get<double>());
  config_error("gate_norm must be \"holder\", {\"holder\": alpha} or {\"lp\": p}");
}

FixedPointConfig parse_contraction(const json& j, const ProblemSpec& p) {
  FixedPointConfig c;
  c.target_constant = get_or(j, "target_constant", integrate(p.scal()) / p.grid().total_volume());
  if (j.contains("gate_norm")) c.gate_norm = parse_norm(j.at("gate_norm"));
  c.holder_alpha = get_or(j, "holder_alpha", c.holder_alpha);
  c.ball_radius = get_or(j, "ball_radius", c.ball_radius);
  c.max_iter = get_or(j, "max_iter", c.max_iter);
  c.tol = get_or(j, "tol", c.tol);
  if (j.contains("pinching_threshold")) c.pinching_threshold = j.at("pinching_threshold").get<double>();
  try {
    c.validate(p.n());
  } catch (const Error& e) {
    config_error(e.what());
  }
  return c;
}

MinimizerConfig parse_minimizer(const json& j) {
  MinimizerConfig c;
  c.grad_tol = get_or(j, "grad_tol", c.grad_tol);
  c.max_iter = get_or(j, "max_iter", c.max_iter);
  c.memory = get_or(j, "memory", c.memory);
  c.switch_grad = get_or(j, "switch_grad", c.switch_grad);
  return c;
}

OracleConfig parse_oracle(const json& j) {
  OracleConfig c;
  const auto mode = lower(get_or<std::string>(j, "mode", "fixed"));
  if (mode == "fixed") c.mode = OracleMode::Fixed;
  else if (mode == "normalized") c.mode = OracleMode::Normalized;
  else config_error("oracle mode must be fixed or normalized");
  c.lambda = get_or(j, "lambda", c.lambda);
  c.tol = get_or(j, "tol", c.tol);
  c.max_iter = get_or(j, "max_iter", c.max_iter);
  c.dense_limit = get_or<std::size_t>(j, "dense_limit", c.dense_limit);
  return c;
}

bool is_gate_kind(ErrorKind k) {
  return k == ErrorKind::SingularOperator || k == ErrorKind::CoercivityGateFail ||
         k == ErrorKind::PreconditionViolation || k == ErrorKind::NotGauduchon;
}

bool is_config_kind(ErrorKind k) {
  return k == ErrorKind::ConfigError || k == ErrorKind::InvalidArgument || k == ErrorKind::IoError;
}

double sup_diff(const ScalarField& a, const ScalarField& b) { return norm(a - b, NormKind::sup()); }

// Everything a check may look at after the solver has run.
struct RunContext {
  const Scenario* scenario = nullptr;
  const ProblemSpec* problem = nullptr;
  std::string kind;
  json solver_cfg;
  std::optional<FlowConfig> flow_cfg;
  std::optional<FlowResult> flow;
  std::optional<FixedPointConfig> contraction_cfg;
  std::optional<ContractionResult> contraction;
  std::optional<MinimizerResult> minimizer;
  std::optional<OracleResult> oracle;
  std::optional<BecknerProbe> beckner;
  std::map<std::string, ScalarField> cross;  // normalized solutions by method
  std::map<std::string, std::string> cross_status;
  std::optional<ScalarField> initial;
  bool refused = false;
  std::string refusal_kind;
};

CheckOutcome make(const std::string& name, bool pass, double measured, std::string detail = {}) {
  return {name, pass ? "pass" : "fail", measured, std::move(detail)};
}

CheckOutcome skipped(const std::string& name, std::string why) { return {name, "skipped", kNaN, std::move(why)}; }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

const SolverReport* primary_report(const RunContext& c) {
  if (c.flow) return &c.flow->report;
  if (c.contraction) return &c.contraction->report;
  if (c.minimizer) return &c.minimizer->report;
  if (c.oracle) return &c.oracle->report;
  return nullptr;
}

// Independent oracle run: fixed-lambda flows start from zero, normalized runs
// from the solution plus a seeded band-limited perturbation.
std::optional<ScalarField> oracle_solution(const RunContext& c, const ScalarField& u, double lambda,
                                           bool normalized, double perturbation, std::string& why) {
  const auto& p = *c.problem;
  OracleConfig oc;
  ScalarField start = ScalarField::zero(p.grid());
  if (normalized) {
    oc.mode = OracleMode::Normalized;
    std::mt19937_64 rng(c.scenario->seed ^ 0x5bd1e995u);
    start = (u - mean(u)) + random_band_limited_field(p.grid(), 2, rng, perturbation);
  } else {
    oc.lambda = lambda;
  }
  try {
    auto o = newton_galerkin_oracle(p, oc, start);
    if (!o.report.converged) {
      why = "oracle did not converge";
      return std::nullopt;
    }
    return *o.report.u;
  } catch (const Error& e) {
    why = std::string("oracle failed: ") + e.what();
    return std::nullopt;
  }
}

CheckOutcome run_check(const RunContext& c, const json& spec) {
  const std::string name = spec.is_string() ? spec.get<std::string>() : get_or<std::string>(spec, "name", "");
  if (name.empty()) config_error("check entries need a name");
  const json args = spec.is_object() ? spec : json::object();

  if (name == "gate-refusal") {
    const auto want = get_or<std::string>(args, "kind", "");
    if (!c.refused) return make(name, false, 0.0, "solver was not refused");
    const bool ok = want.empty() || want == c.refusal_kind;
    return make(name, ok, 1.0, c.refusal_kind);
  }
  if (c.refused) return skipped(name, "solver refused with " + c.refusal_kind);

  const SolverReport* rep = primary_report(c);
  const auto& p = *c.problem;

  if (name == "converged") {
    if (c.kind == "cross") {
      const bool all = c.cross.size() == 4;
      return make(name, all, static_cast<double>(c.cross.size()), "methods converged out of 4");
    }
    if (c.kind == "beckner") return skipped(name, "no solver report");
    return make(name, rep && rep->converged, rep && rep->converged ? 1.0 : 0.0, rep ? rep->status : "");
  }
  if (name == "residual") {
    const double max = get_or(args, "max", 1e-9);
    if (!rep || !rep->u) return skipped(name, "no solution");
    return make(name, rep->residual_sup < max, rep->residual_sup, "max " + fmt(max));
  }
  if (name == "oracle-agreement") {
    const double tol = get_or(args, "tol", 1e-8);
    if (!rep || !rep->u) return skipped(name, "no solution");
    const bool normalized = (c.flow_cfg && c.flow_cfg->lambda_mode == LambdaMode::Normalized) || c.contraction ||
                            c.minimizer;
    std::string why;
    auto o = oracle_solution(c, *rep->u, rep->lambda_star, normalized, get_or(args, "perturbation", 1e-2), why);
    if (!o) return make(name, false, kNaN, why);
    double d;
    if (normalized) {
      auto a = normalize_solution(p, *rep->u, rep->lambda_star);
      auto b = normalize_solution(p, *o, rep->lambda_star);
      d = sup_diff(a.u, b.u);
    } else {
      d = sup_diff(*rep->u, *o);
    }
    return make(name, d < tol, d, "tol " + fmt(tol));
  }

  if (name == "envelope" || name == "decay-rate" || name == "grad-decay" || name == "mean-drift" ||
      name == "hk-smallness" || name == "l2-decay" || name == "global-existence") {
    if (!c.flow) return skipped(name, "needs a flow run");
    const auto& tr = c.flow->trace;
    if (name == "envelope") {
      const double tol = get_or(args, "tol", 1e-6);
      const bool any = std::any_of(tr.rows().begin(), tr.rows().end(), [](const TraceRow& r) { return std::isfinite(r.barrier_hi); });
      if (!any) return skipped(name, "no barrier in this regime");
      const double v = envelope_violation(tr);
      return make(name, v <= tol, v, "tol " + fmt(tol));
    }
    if (name == "decay-rate" || name == "grad-decay") {
      try {
        if (name == "grad-decay") {
          const auto fit = fit_decay(tr, DecayColumn::SupGradV);
          return make(name, fit.rate < 0.0, fit.rate, "r2 " + fmt(fit.r2));
        }
        const auto fit = fit_decay(tr, DecayColumn::SupV);
        const double m = min_conformal_factor(tr, p.n());
        const double lambda = c.flow_cfg->lambda_mode == LambdaMode::Constant ? c.flow_cfg->lambda : tr.rows().back().lambda;
        const double bound = 2.0 * m * lambda / p.n() + get_or(args, "slack", 0.1);
        return make(name, fit.rate <= bound, fit.rate, "bound " + fmt(bound));
      } catch (const Error& e) {
        return make(name, false, kNaN, e.what());
      }
    }
    if (name == "mean-drift") {
      const double max = get_or(args, "max", 1e-10);
      const double d = mean_drift(tr);
      return make(name, d < max, d, "max " + fmt(max));
    }
    if (name == "hk-smallness") {
      const int k = c.flow_cfg->hk_order;
      const double factor = get_or(args, "factor", 10.0);
      const auto& s = p.scal();
      const double delta = get_or(args, "delta", norm(s - mean(s), NormKind::hk2(k)));
      double run_max = 0.0;
      for (const auto& r : tr.rows()) run_max = std::max(run_max, r.hk_u);
      return make(name, run_max <= factor * delta, run_max, "bound " + fmt(factor * delta));
    }
    if (name == "l2-decay") {
      const auto& rows = tr.rows();
      if (rows.size() < 20) return make(name, false, kNaN, "trace too short");
      const std::size_t start = rows.size() / 20;
      std::size_t bad = 0;
      for (std::size_t i = start + 1; i < rows.size(); ++i)
        if (rows[i].l2_v * rows[i].l2_v > rows[i - 1].l2_v * rows[i - 1].l2_v * (1.0 + 1e-9)) ++bad;
      try {
        const auto fit = fit_decay(tr, DecayColumn::L2VSq);
        return make(name, bad == 0 && fit.rate < 0.0, fit.rate, std::to_string(bad) + " increasing rows");
      } catch (const Error& e) {
        return make(name, false, kNaN, e.what());
      }
    }
    // global-existence
    const double t_end = tr.empty() ? 0.0 : tr.rows().back().t;
    const bool ok = c.flow->report.converged || t_end >= c.flow_cfg->t_max * (1.0 - 1e-12);
    return make(name, ok, t_end, c.flow->report.status);
  }

  if (name == "constant-curvature") {
    const double max = get_or(args, "max", 1e-8);
    if (!rep || !rep->u) return skipped(name, "no solution");
    const auto sc = conformal_scalar_curvature(p, *rep->u);
    const double dev = sup_diff(sc, ScalarField::constant(p.grid(), mean(sc)));
    return make(name, dev < max, dev, "max " + fmt(max));
  }

  if (name == "contraction-factor" || name == "volume-normalized" || name == "lambda-matches-integral" ||
      name == "lp-variant-agreement" || name == "regime-failure") {
    if (!c.contraction) return skipped(name, "needs a contraction run");
    const auto& cr = *c.contraction;
    if (name == "regime-failure") {
      const bool ok = cr.report.status == "EscapedBall" || cr.report.status == "NoConvergence";
      return make(name, ok, static_cast<double>(cr.log.size()), cr.report.status);
    }
    if (!cr.report.u) return skipped(name, "contraction did not converge");
    const auto& u = *cr.report.u;
    if (name == "contraction-factor") {
      const double max = get_or(args, "max", 0.5);
      return make(name, cr.max_contraction_factor < max, cr.max_contraction_factor, "max " + fmt(max));
    }
    if (name == "volume-normalized") {
      const double tol = get_or(args, "tol", 1e-10);
      const double v = std::abs(integrate(u.map([n = p.n()](double x) { return std::exp(2.0 * x / n); })) - 1.0);
      return make(name, v < tol, v, "tol " + fmt(tol));
    }
    if (name == "lambda-matches-integral") {
      const double tol = get_or(args, "tol", 1e-8);
      const double d = std::abs(cr.report.lambda_star - integrate(p.scal()));
      return make(name, d < tol, d, "tol " + fmt(tol));
    }
    // lp-variant-agreement: rerun under the other pinching norm
    const double tol = get_or(args, "tol", 1e-12);
    auto cfg = *c.contraction_cfg;
    const bool was_lp = cfg.gate_norm.tag() == NormKind::Tag::Lp;
    cfg.gate_norm = was_lp ? NormKind::holder(cfg.holder_alpha) : NormKind::lp(get_or(args, "p", 2.0 * p.n()));
    cfg.pinching_threshold.reset();
    try {
      auto other = run_contraction(p, cfg);
      if (!other.report.u) return make(name, false, kNaN, "other variant " + other.report.status);
      const double d = sup_diff(*other.report.u, u);
      return make(name, d < tol, d, "tol " + fmt(tol));
    } catch (const Error& e) {
      return make(name, false, kNaN, e.what());
    }
  }

  if (name == "energy-monotone" || name == "grad-norm" || name == "coercivity") {
    if (!c.minimizer) return skipped(name, "needs a minimizer run");
    const auto& m = *c.minimizer;
    if (name == "energy-monotone") {
      std::size_t bad = 0;
      for (std::size_t i = 1; i < m.log.size(); ++i)
        if (m.log[i].energy > m.log[i - 1].energy) ++bad;
      return make(name, bad == 0, static_cast<double>(bad), "increasing iterations");
    }
    if (name == "grad-norm") {
      const double max = get_or(args, "max", 1e-10);
      return make(name, m.energy.grad_norm < max, m.energy.grad_norm, "max " + fmt(max));
    }
    const auto cc = check_coercivity(p, get_or(args, "calibration", 100), get_or(args, "probes", 100),
                                     c.scenario->seed, get_or(args, "slack", 0.05));
    return make(name, cc.passed, cc.worst_gap, "K " + fmt(cc.K));
  }

  if (name == "beckner") {
    if (!c.beckner) return skipped(name, "needs a Beckner probe");
    const auto& b = *c.beckner;
    const bool ok = std::isfinite(b.max_value) && b.non_divergent;
    return make(name, ok, b.max_value, b.non_divergent ? "bubbles bounded" : "bubble values drift upward");
  }

  if (name == "cross-agreement") {
    const double tol = get_or(args, "tol", 1e-6);
    if (c.kind != "cross") return skipped(name, "needs the cross solver");
    if (c.cross.size() != 4) return skipped(name, "not every method converged");
    double worst = 0.0;
    for (auto a = c.cross.begin(); a != c.cross.end(); ++a)
      for (auto b = std::next(a); b != c.cross.end(); ++b) worst = std::max(worst, sup_diff(a->second, b->second));
    return make(name, worst < tol, worst, "tol " + fmt(tol));
  }

  config_error("unknown check '" + name + "'");
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + file.string());
  out << text;
}

void write_json(const fs::path& file, const json& j) { write_text(file, j.dump(2) + "\n"); }

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_envelope_csv(const fs::path& file, const FlowTrace& trace) {
  std::ostringstream os;
  os << "t,min_u,max_u,barrier_lo,barrier_hi\n";
  for (const auto& r : trace.rows())
    os << csv_number(r.t) << ',' << csv_number(r.min_u) << ',' << csv_number(r.max_u) << ','
       << csv_number(r.barrier_lo) << ',' << csv_number(r.barrier_hi) << '\n';
  write_text(file, os.str());
}

void run_solver(RunContext& c, const ProblemSpec& p, const fs::path& out) {
  const auto& sc = *c.scenario;
  const auto problem = section(sc.config, "problem");
  const auto params = parameters(problem);
  const auto& sol = c.solver_cfg;
  auto initial = [&]() {
    if (!sc.config.contains("initial")) return ScalarField::zero(p.grid());
    const auto& src = sc.config.at("initial");
    if (src.is_object() && src.contains("random")) {
      const auto& r = src.at("random");
      std::mt19937_64 rng(sc.seed);
      return random_band_limited_field(p.grid(), get_or(r, "kmax", 3), rng, get_or(r, "amplitude", 1.0));
    }
    return field_source(src, p.grid(), params, sc.base_dir, "initial");
  };

  if (c.kind == "flow") {
    c.flow_cfg = parse_flow(sol);
    c.initial = initial();
    c.flow = run_flow(p, *c.flow_cfg, *c.initial);
    std::ofstream t(out / "trace.csv", std::ios::binary);
    c.flow->trace.write_csv(t);
    write_envelope_csv(out / "envelope.csv", c.flow->trace);
    if (c.flow->report.u) write_field(*c.flow->report.u, out / "u");
  } else if (c.kind == "contraction") {
    c.contraction_cfg = parse_contraction(sol, p);
    c.contraction = run_contraction(p, *c.contraction_cfg);
    std::ofstream l(out / "contraction_log.csv", std::ios::binary);
    c.contraction->write_log_csv(l);
    if (c.contraction->report.u) write_field(*c.contraction->report.u, out / "u");
  } else if (c.kind == "minimizer") {
    c.minimizer = minimize_energy(p, parse_minimizer(sol));
    std::ofstream l(out / "minimizer_log.csv", std::ios::binary);
    c.minimizer->write_log_csv(l);
    if (c.minimizer->report.u) write_field(*c.minimizer->report.u, out / "u");
  } else if (c.kind == "oracle") {
    c.initial = initial();
    c.oracle = newton_galerkin_oracle(p, parse_oracle(sol), *c.initial);
    if (c.oracle->report.u) write_field(*c.oracle->report.u, out / "u");
  } else if (c.kind == "beckner") {
    c.beckner = beckner_probe_detailed(p.grid(), get_or(sol, "trials", 200), sc.seed);
  } else if (c.kind == "cross") {
    // Flow, contraction, minimizer and oracle on one instance; each solution
    // is normalized before comparison. Gate refusals of a single method are
    // recorded rather than aborting the others.
    auto attempt = [&](const std::string& method, auto&& fn) {
      try {
        auto [u, lambda, status] = fn();
        c.cross_status[method] = status;
        if (u) c.cross.emplace(method, normalize_solution(p, *u, lambda).u);
      } catch (const Error& e) {
        if (!is_gate_kind(e.kind()) && !is_config_kind(e.kind()) && e.kind() != ErrorKind::BlowUp &&
            e.kind() != ErrorKind::JacobianSingular && e.kind() != ErrorKind::LineSearchStall)
          throw;
        c.cross_status[method] = std::string(to_string(e.kind()));
      }
    };
    using Out = std::tuple<std::optional<ScalarField>, double, std::string>;
    const bool positive = integrate(p.scal()) > 0.0;
    attempt("flow", [&]() -> Out {
      json fj = section(sol, "flow");
      if (!fj.contains("lambda_mode")) fj["lambda_mode"] = positive ? "normalized" : "constant";
      c.flow_cfg = parse_flow(fj);
      c.flow = run_flow(p, *c.flow_cfg, ScalarField::zero(p.grid()));
      std::ofstream t(out / "trace.csv", std::ios::binary);
      c.flow->trace.write_csv(t);
      write_envelope_csv(out / "envelope.csv", c.flow->trace);
      const auto& r = c.flow->report;
      return {r.converged ? r.u : std::nullopt, r.lambda_star, r.status};
    });
    attempt("contraction", [&]() -> Out {
      c.contraction_cfg = parse_contraction(section(sol, "contraction"), p);
      c.contraction = run_contraction(p, *c.contraction_cfg);
      std::ofstream l(out / "contraction_log.csv", std::ios::binary);
      c.contraction->write_log_csv(l);
      const auto& r = c.contraction->report;
      return {r.converged ? r.u : std::nullopt, r.lambda_star, r.status};
    });
    attempt("minimizer", [&]() -> Out {
      c.minimizer = minimize_energy(p, parse_minimizer(section(sol, "minimizer")));
      std::ofstream l(out / "minimizer_log.csv", std::ios::binary);
      c.minimizer->write_log_csv(l);
      const auto& r = c.minimizer->report;
      return {r.converged ? r.u : std::nullopt, r.lambda_star, r.status};
    });
    attempt("oracle", [&]() -> Out {
      json oj = section(sol, "oracle");
      if (!oj.contains("mode")) oj["mode"] = positive ? "normalized" : "fixed";
      c.oracle = newton_galerkin_oracle(p, parse_oracle(oj), ScalarField::zero(p.grid()));
      const auto& r = c.oracle->report;
      return {r.converged ? r.u : std::nullopt, r.lambda_star, r.status};
    });
    if (c.oracle && c.oracle->report.u) write_field(*c.oracle->report.u, out / "u");
  } else {
    config_error("unknown solver kind '" + c.kind + "'");
  }
}

Scenario with_overrides(const Scenario& base, std::optional<std::uint64_t> seed, std::optional<int> grid) {
  Scenario s = base;
  if (seed) s.set_seed(*seed);
  if (grid) s.set_grid_points(*grid);
  return s;
}

int worst_exit(const std::vector<ScenarioResult>& entries) {
  // Config errors dominate solver errors, which dominate check failures.
  int code = 0;
  auto rank = [](int c) { return c == 2 ? 3 : c == 3 ? 2 : c; };
  for (const auto& e : entries)
    if (rank(e.exit_code()) > rank(code)) code = e.exit_code();
  return code;
}

double summary_rate(const ScenarioResult& r) {
  for (const auto& c : r.checks)
    if (c.name == "decay-rate" && std::isfinite(c.measured)) return c.measured;
  for (const auto& c : r.checks)
    if (c.name == "contraction-factor" && std::isfinite(c.measured)) return c.measured;
  return kNaN;
}

}  // namespace

Scenario Scenario::from_json(json doc, fs::path base_dir) {
  if (!doc.is_object()) config_error("scenario must be a JSON object");
  Scenario s;
  s.name = get_or<std::string>(doc, "name", "");
  if (s.name.empty()) config_error("scenario needs a name");
  s.seed = get_or<std::uint64_t>(doc, "seed", 0);
  s.config = std::move(doc);
  s.base_dir = std::move(base_dir);
  return s;
}

Scenario Scenario::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) config_error("cannot open scenario " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    config_error(file.string() + ": " + e.what());
  }
  return from_json(std::move(doc), file.parent_path());
}

void Scenario::set_seed(std::uint64_t s) {
  seed = s;
  config["seed"] = s;
}

void Scenario::set_grid_points(int points) {
  if (points < 2) config_error("grid points must be >= 2");
  config["problem"]["grid"]["points"] = points;
}

void Scenario::set_param(const std::string& dot_path, const json& value) {
  if (dot_path.empty()) config_error("empty parameter path");
  json* node = &config;
  std::stringstream ss(dot_path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& key = parts[i];
    if (key.empty()) config_error("bad parameter path '" + dot_path + "'");
    json* next;
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(key);
      } catch (const std::exception&) {
        config_error("'" + key + "' does not index an array in '" + dot_path + "'");
      }
      if (idx >= node->size()) config_error("index out of range in '" + dot_path + "'");
      next = &(*node)[idx];
    } else if (node->is_object() || node->is_null()) {
      next = &(*node)[key];
    } else {
      config_error("'" + dot_path + "' does not address an object");
    }
    node = next;
  }
  *node = value;
  if (dot_path == "seed") seed = value.get<std::uint64_t>();
  if (dot_path == "name") name = value.get<std::string>();
}

ProblemSpec Scenario::build_problem() const {
  const auto& problem = section(config, "problem");
  const auto params = parameters(problem);
  auto grid = parse_grid(problem);
  const int n = get_or(problem, "n", 1);
  if (!problem.contains("scal")) config_error("problem.scal is required");
  auto scal = field_source(problem.at("scal"), grid, params, base_dir, "problem.scal");
  auto lee = OneFormField::zero(grid);
  if (problem.contains("lee")) {
    const auto& l = problem.at("lee");
    if (!l.is_array() || static_cast<int>(l.size()) != grid.dim()) config_error("problem.lee needs one entry per axis");
    std::vector<ScalarField> comps;
    for (const auto& e : l) comps.push_back(field_source(e, grid, params, base_dir, "problem.lee"));
    lee = OneFormField(std::move(comps));
  }
  return ProblemSpec(n, std::move(scal), std::move(lee), get_or(problem, "declared_gauduchon", true),
                     get_or(problem, "gauduchon_tol", ProblemSpec::kDefaultGauduchonTolerance));
}

bool ScenarioResult::checks_passed() const {
  if (config_error || solver_error) return false;
  bool refusal_expected = false;
  for (const auto& c : checks) {
    if (c.outcome == "fail") return false;
    if (c.name == "gate-refusal" && c.outcome == "pass") refusal_expected = true;
  }
  return status != "Refused" || refusal_expected;
}

int ScenarioResult::exit_code() const {
  if (config_error) return 2;
  if (solver_error) return 3;
  return checks_passed() ? 0 : 1;
}

ScenarioResult run_scenario(const Scenario& s, const fs::path& out_dir) {
  ScenarioResult res;
  res.name = s.name;
  res.agreement = json::object();
  const auto t0 = std::chrono::steady_clock::now();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + out_dir.string());

  RunContext ctx;
  ctx.scenario = &s;
  std::optional<ProblemSpec> problem;
  try {
    const auto& sol = section(s.config, "solver");
    ctx.kind = lower(get_or<std::string>(sol, "kind", ""));
    ctx.solver_cfg = sol;
    res.solver = ctx.kind;
    try {
      problem.emplace(s.build_problem());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NotGauduchon) throw;
      ctx.refused = true;
      ctx.refusal_kind = std::string(to_string(e.kind()));
      res.error_message = e.what();
    }
    if (problem) {
      ctx.problem = &*problem;
      try {
        run_solver(ctx, *problem, out_dir);
      } catch (const Error& e) {
        if (!is_gate_kind(e.kind())) throw;
        ctx.refused = true;
        ctx.refusal_kind = std::string(to_string(e.kind()));
        res.error_message = e.what();
      }
    }
    const json checks = s.config.contains("checks") ? s.config.at("checks") : json::array();
    if (!checks.is_array()) config_error("checks must be a list");
    for (const auto& c : checks) res.checks.push_back(run_check(ctx, c));
  } catch (const Error& e) {
    res.error_kind = std::string(to_string(e.kind()));
    res.error_message = e.what();
    if (is_config_kind(e.kind())) res.config_error = true;
    else res.solver_error = true;
  } catch (const json::exception& e) {
    res.error_kind = "ConfigError";
    res.error_message = e.what();
    res.config_error = true;
  }

  if (ctx.refused) {
    res.status = "Refused";
    res.error_kind = ctx.refusal_kind;
  } else if (res.config_error || res.solver_error) {
    res.status = "Error";
  } else if (const auto* rep = primary_report(ctx)) {
    res.status = rep->status;
  } else {
    res.status = "Done";
  }
  if (ctx.kind == "cross" && ctx.oracle) res.report = ctx.oracle->report;
  else if (const auto* rep = primary_report(ctx)) res.report = *rep;

  if (ctx.kind == "cross") {
    for (auto a = ctx.cross.begin(); a != ctx.cross.end(); ++a)
      for (auto b = std::next(a); b != ctx.cross.end(); ++b)
        res.agreement[a->first + "|" + b->first] = sup_diff(a->second, b->second);
  }
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json report = {{"schema", "cy.scenario_report/1"},
                 {"name", res.name},
                 {"seed", s.seed},
                 {"solver", res.solver},
                 {"status", res.status}};
  if (!res.error_kind.empty()) report["error"] = {{"kind", res.error_kind}, {"message", res.error_message}};
  if (res.report) report["report"] = to_json(*res.report);
  if (ctx.contraction) {
    report["pinching_distance"] = ctx.contraction->pinching_distance;
    report["max_contraction_factor"] = ctx.contraction->max_contraction_factor;
  }
  if (ctx.minimizer) {
    report["energy"] = ctx.minimizer->energy.energy;
    report["grad_norm"] = ctx.minimizer->energy.grad_norm;
    report["coercivity_margin"] = ctx.minimizer->energy.coercivity_margin;
  }
  if (ctx.oracle && ctx.kind == "oracle") {
    report["observed_order"] = ctx.oracle->observed_order;
    report["residual_history"] = ctx.oracle->residual_history;
  }
  if (ctx.beckner) {
    const auto& b = *ctx.beckner;
    report["beckner"] = {{"max_value", b.max_value},         {"random_max", b.random_max},
                         {"cosine_values", b.cosine_values}, {"bubble_values", b.bubble_values},
                         {"bubble_widths", b.bubble_widths}, {"non_divergent", b.non_divergent}};
  }
  if (ctx.kind == "cross") {
    report["methods"] = ctx.cross_status;
    report["agreement"] = res.agreement;
  }
  json checks = json::array();
  for (const auto& c : res.checks)
    checks.push_back({{"name", c.name}, {"outcome", c.outcome}, {"measured", c.measured}, {"detail", c.detail}});
  try {
    write_json(out_dir / "report.json", report);
    write_json(out_dir / "checks.json", {{"name", res.name}, {"checks", checks}, {"exit_code", res.exit_code()}});
    write_text(out_dir / "timing.txt", csv_number(res.wall_time) + "\n");
  } catch (const Error& e) {
    res.solver_error = true;
    res.error_kind = std::string(to_string(e.kind()));
    res.error_message = e.what();
  }
  return res;
}

int SweepResult::exit_code() const { return worst_exit(entries); }
int SuiteResult::exit_code() const { return worst_exit(entries); }

SweepResult sweep(const Scenario& base, const std::string& param, const std::vector<json>& values,
                  const fs::path& out_dir) {
  SweepResult out;
  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "param,converged,lambda_star,residual,rate\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    Scenario s = base;
    s.set_param(param, values[i]);
    const auto dir = out_dir / std::to_string(i);
    auto r = run_scenario(s, dir);
    const bool conv = r.report && r.report->converged;
    csv << (values[i].is_string() ? values[i].get<std::string>() : values[i].dump()) << ',' << (conv ? 1 : 0) << ','
        << csv_number(r.report ? r.report->lambda_star : kNaN) << ','
        << csv_number(r.report ? r.report->residual_sup : kNaN) << ',' << csv_number(summary_rate(r)) << '\n';
    out.entries.push_back(std::move(r));
  }
  write_text(out_dir / "summary.csv", csv.str());
  return out;
}

int suite_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("CY_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  return hw;
}

SuiteResult run_suite(const fs::path& dir, const fs::path& out_dir, std::optional<std::uint64_t> seed,
                      std::optional<int> grid_points) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  if (ec) config_error("cannot read scenario directory " + dir.string());
  std::sort(files.begin(), files.end());

  std::vector<Scenario> scenarios;
  std::set<std::string> names;
  for (const auto& f : files) {
    auto s = with_overrides(Scenario::load(f), seed, grid_points);
    if (!names.insert(s.name).second) config_error("duplicate scenario name '" + s.name + "'");
    scenarios.push_back(std::move(s));
  }

  SuiteResult out;
  out.entries.resize(scenarios.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i; (i = next.fetch_add(1)) < scenarios.size();)
      out.entries[i] = run_scenario(scenarios[i], out_dir / scenarios[i].name);
  };
  const int nt = std::min<int>(suite_threads(), std::max<std::size_t>(scenarios.size(), 1));
  std::vector<std::thread> pool;
  for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ostringstream csv;
  csv << "name,solver,status,converged,lambda_star,residual_sup,exit_code\n";
  json agreement = json::object();
  for (const auto& r : out.entries) {
    const bool conv = r.report && r.report->converged;
    csv << r.name << ',' << r.solver << ',' << r.status << ',' << (conv ? 1 : 0) << ','
        << csv_number(r.report ? r.report->lambda_star : kNaN) << ','
        << csv_number(r.report ? r.report->residual_sup : kNaN) << ',' << r.exit_code() << '\n';
    if (r.solver == "cross") agreement[r.name] = r.agreement;
  }
  fs::create_directories(out_dir);
  write_text(out_dir / "summary.csv", csv.str());
  write_json(out_dir / "agreement.json", agreement);
  return out;
}

}  // namespace cy

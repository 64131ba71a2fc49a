#include "cy/energy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "cy/error.hpp"

namespace cy {

namespace {

void require_variational_setting(const ProblemSpec& p, const char* where) {
  if (!p.is_balanced()) {
    throw Error(ErrorKind::PreconditionViolation, std::string(where) + " needs theta = 0");
  }
  if (!p.grid().normalized()) {
    throw Error(ErrorKind::PreconditionViolation, std::string(where) + " needs a unit-volume grid");
  }
}

ScalarField exp_factor(const ScalarField& u, int n) {
  check_exponent_range(u, n, "energy");
  const double k = 2.0 / n;
  return u.map([k](double v) { return std::exp(k * v); });
}

ScalarField h1_precondition(const ScalarField& g) {
  return apply_radial_multiplier(g, [](double k2) { return 1.0 / (1.0 + k2); });
}

// E with the Dirichlet term weighted by `beta` (1/2 gives the energy itself).
double weighted_energy(const ProblemSpec& p, const ScalarField& u, double beta) {
  const double S = integrate(p.scal());
  return beta * dirichlet_integral(u) + inner(p.scal(), u) -
         0.5 * p.n() * S * std::log(integrate(exp_factor(u, p.n())));
}

}  // namespace

double energy(const ProblemSpec& p, const ScalarField& u) {
  require_variational_setting(p, "energy");
  require_same_grid(p.grid(), u.grid(), "energy");
  return weighted_energy(p, u, 0.5);
}

double energy_difference(const ProblemSpec& p, const ScalarField& u, const ScalarField& d) {
  require_variational_setting(p, "energy_difference");
  const int n = p.n();
  const auto e = exp_factor(u, n);
  check_exponent_range(u + d, n, "energy");
  const double k = 2.0 / n;
  // int e^{2u/n} (e^{2d/n} - 1), relative to int e^{2u/n}.
  double num = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) num += e[i] * std::expm1(k * d[i]);
  num *= p.grid().weight();
  const double I = integrate(e);
  const auto lap_d = laplacian(d);
  return inner(u + 0.5 * d, lap_d) + inner(p.scal(), d) - 0.5 * n * integrate(p.scal()) * std::log1p(num / I);
}

ScalarField energy_gradient(const ProblemSpec& p, const ScalarField& u) {
  require_variational_setting(p, "energy_gradient");
  require_same_grid(p.grid(), u.grid(), "energy_gradient");
  const auto e = exp_factor(u, p.n());
  const double lam = integrate(p.scal()) / integrate(e);
  return laplacian(u) + p.scal() - lam * e;
}

double coercivity_margin(const ProblemSpec& p) {
  const double n = p.n();
  return 0.5 - integrate(p.scal()) / (4.0 * n * n * std::numbers::pi);
}

GateOutcome coercivity_gate(const ProblemSpec& p) {
  const double n = p.n();
  const double C = integrate(p.scal());
  const double threshold = 2.0 * std::numbers::pi * n * n;
  // Values within a relative 1e-5 of the threshold are treated as on it.
  constexpr double kRelativeGuard = 1e-5;
  std::ostringstream os;
  os << "int s^C vol vs 2 pi n^2 = " << threshold << " (relative guard " << kRelativeGuard << ")";
  return {"coercivity", C < threshold * (1.0 - kRelativeGuard), C, os.str()};
}

void MinimizerResult::write_log_csv(std::ostream& os) const {
  os << kCsvHeader << '\n';
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.iter, r.energy, r.grad_norm, r.step_size);
    os << buf;
  }
}

MinimizerResult minimize_energy(const ProblemSpec& p, const MinimizerConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  require_variational_setting(p, "minimize_energy");
  auto gate = coercivity_gate(p);
  if (!gate.passed) {
    std::ostringstream os;
    os << "int s^C = " << gate.measured << " is not below 2 pi n^2";
    throw Error(ErrorKind::CoercivityGateFail, os.str());
  }
  if (!(cfg.grad_tol > 0.0) || cfg.max_iter < 1 || cfg.memory < 0)
    throw Error(ErrorKind::InvalidArgument, "bad minimizer config");

  const auto& g = p.grid();
  std::vector<MinimizerLogRow> log;
  ScalarField u = ScalarField::zero(g);
  double E = 0.0;  // E(0) = 0 on a unit-volume grid
  ScalarField grad = energy_gradient(p, u);
  double gnorm = norm(grad, NormKind::l2());
  log.push_back({0, E, gnorm, 0.0});

  struct Pair {
    ScalarField s, y;
    double rho;
  };
  std::deque<Pair> memory;
  bool quasi_newton = false;
  int it = 0;
  constexpr double kArmijo = 1e-4;

  auto direction = [&](bool use_memory) {
    // Two-loop recursion for the descent direction -H grad.
    ScalarField q = grad;
    std::vector<double> alpha(memory.size());
    if (use_memory) {
      for (std::size_t j = memory.size(); j-- > 0;) {
        alpha[j] = memory[j].rho * inner(memory[j].s, q);
        q -= alpha[j] * memory[j].y;
      }
    }
    ScalarField r = h1_precondition(q);
    if (use_memory) {
      for (std::size_t j = 0; j < memory.size(); ++j) {
        const double beta = memory[j].rho * inner(memory[j].y, r);
        r += (alpha[j] - beta) * memory[j].s;
      }
    }
    return -r;
  };

  while (gnorm >= cfg.grad_tol && it < cfg.max_iter) {
    ++it;
    if (!quasi_newton && gnorm < cfg.switch_grad) quasi_newton = true;
    bool use_memory = quasi_newton && cfg.memory > 0;
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      ScalarField d = direction(use_memory);
      double slope = inner(grad, d);
      if (!(slope < 0.0)) {
        use_memory = false;
        memory.clear();
        continue;
      }
      double t = 1.0;
      for (int bt = 0; bt < 80; ++bt, t *= 0.5) {
        const ScalarField step = t * d;
        double dE;
        try {
          dE = energy_difference(p, u, step);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::Overflow) throw;
          continue;
        }
        if (!(dE <= kArmijo * t * slope)) continue;
        ScalarField next = u + step;
        next -= ScalarField::constant(g, mean(next));
        ScalarField next_grad = energy_gradient(p, next);
        ScalarField y = next_grad - grad;
        ScalarField s = next - u;
        const double sy = inner(s, y);
        if (sy > 1e-300) {
          memory.push_back({std::move(s), std::move(y), 1.0 / sy});
          if (static_cast<int>(memory.size()) > cfg.memory) memory.pop_front();
        }
        u = std::move(next);
        grad = std::move(next_grad);
        gnorm = norm(grad, NormKind::l2());
        E += dE;
        log.push_back({it, E, gnorm, t});
        accepted = true;
        break;
      }
      if (!accepted) {
        use_memory = false;
        memory.clear();
      }
    }
    if (!accepted) {
      std::ostringstream os;
      os << "line search stalled at iteration " << it << " with grad norm " << gnorm;
      throw Error(ErrorKind::LineSearchStall, os.str());
    }
  }

  const bool converged = gnorm < cfg.grad_tol;
  MinimizerResult out{{}, EnergyReport{u, E, gnorm, coercivity_margin(p), NAN}, std::move(log)};
  const double I = integrate(exp_factor(u, p.n()));
  auto ns = normalize_solution(p, u, integrate(p.scal()) / I);
  out.report = make_report(p, std::move(ns.u), ns.lambda, Method::Minimizer);
  out.report.converged = converged;
  out.report.status = converged ? "Converged" : "NoConvergence";
  out.report.iterations_or_steps = it;
  out.report.gate_outcomes.push_back(gate);
  out.report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

// ---------------------------------------------------------------------------

double beckner_functional(const ScalarField& u) {
  const auto& g = u.grid();
  if (g.dim() != 2) throw Error(ErrorKind::InvalidArgument, "the Beckner probe is two dimensional");
  const double ubar = mean(u);
  const double avg = integrate(u.map([ubar](double v) { return std::exp(v - ubar); })) / g.total_volume();
  const double d_phys = dirichlet_integral(u) * g.physical_volume() / g.total_volume();
  return std::log(avg) - d_phys / (16.0 * std::numbers::pi);
}

BecknerProbe beckner_probe_detailed(const PeriodicGrid& grid, int trials, std::uint64_t seed) {
  if (grid.dim() != 2 || !grid.normalized())
    throw Error(ErrorKind::InvalidArgument, "the Beckner probe needs a unit-volume 2D grid");
  BecknerProbe out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(0.0, 8.0);
  out.random_max = beckner_functional(ScalarField::zero(grid));
  for (int t = 0; t < trials; ++t) {
    const double a = amp(rng);
    out.random_max = std::max(out.random_max, beckner_functional(random_band_limited_field(grid, 4, rng, a)));
  }
  for (int t = 1; t <= 10; ++t) {
    out.cosine_values.push_back(
        beckner_functional(ScalarField::sample(grid, [t](auto x) { return t * std::cos(x[0]); })));
  }
  // u = -2 ln(sigma^2 + rho^2) with rho^2 = sum 2(1 - cos(x_i - c_i)), peaked at the center.
  const double h = std::min(grid.spacing(0), grid.spacing(1));
  constexpr int kBubbles = 12;
  for (int j = 0; j < kBubbles; ++j) {
    const double sigma = std::pow(h, static_cast<double>(j) / (kBubbles - 1));
    std::vector<double> centers = {0.5 * grid.lengths()[0], 0.5 * grid.lengths()[1]};
    auto u = ScalarField::sample(grid, [&](auto x) {
      double rho2 = 0.0;
      for (int a = 0; a < 2; ++a) {
        const double w = 2.0 * std::numbers::pi / grid.lengths()[a];
        rho2 += 2.0 * (1.0 - std::cos(w * (x[a] - centers[a]))) / (w * w);
      }
      return -2.0 * std::log(sigma * sigma + rho2);
    });
    out.bubble_widths.push_back(sigma);
    out.bubble_values.push_back(beckner_functional(u));
  }
  const double first_half =
      *std::max_element(out.bubble_values.begin(), out.bubble_values.begin() + kBubbles / 2);
  out.non_divergent = out.bubble_values.back() <= first_half + 0.5 * std::abs(first_half);
  out.max_value = out.random_max;
  for (double v : out.cosine_values) out.max_value = std::max(out.max_value, v);
  for (double v : out.bubble_values) out.max_value = std::max(out.max_value, v);
  return out;
}

double beckner_probe(const PeriodicGrid& grid, int trials, std::uint64_t seed) {
  return beckner_probe_detailed(grid, trials, seed).max_value;
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kProbeBand = 4;

// Fields of the probe class: band-limited zero-mean with random sup amplitude,
// plus the a cos x1 family.
std::vector<ScalarField> probe_fields(const PeriodicGrid& g, int count, std::mt19937_64& rng, double max_amp) {
  std::uniform_real_distribution<double> amp(0.0, max_amp);
  std::vector<ScalarField> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(random_band_limited_field(g, kProbeBand, rng, amp(rng)));
  return out;
}

// Gradient ascent of F(u) = w D(u) - E(u) within the probe band, from `u`.
ScalarField ascend_gap(const ProblemSpec& p, ScalarField u, double w, int iterations) {
  auto F = [&](const ScalarField& v) { return -weighted_energy(p, v, 0.5 - w); };
  double f = F(u);
  for (int it = 0; it < iterations; ++it) {
    // dF = 2w Delta u - grad E.
    auto grad = (2.0 * w) * laplacian(u) - energy_gradient(p, u);
    auto d = band_project(h1_precondition(grad), kProbeBand);
    d -= ScalarField::constant(u.grid(), mean(d));
    if (norm(d, NormKind::l2()) < 1e-13) break;
    double t = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 40; ++bt, t *= 0.5) {
      auto trial = u + t * d;
      double ft;
      try {
        ft = F(trial);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Overflow) throw;
        continue;
      }
      if (ft > f) {
        u = std::move(trial);
        f = ft;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  return u;
}

}  // namespace

CoercivityCheck check_coercivity(const ProblemSpec& p, int calibration_trials, int probe_trials,
                                 std::uint64_t seed, double slack) {
  require_variational_setting(p, "check_coercivity");
  if (calibration_trials < 1 || probe_trials < 1)
    throw Error(ErrorKind::InvalidArgument, "coercivity check needs at least one field");
  CoercivityCheck out;
  out.margin = coercivity_margin(p);
  out.slack = slack;
  const double w = out.margin - slack;
  const auto& g = p.grid();
  auto gap_of = [&](const ScalarField& u) { return w * dirichlet_integral(u) - energy(p, u); };

  std::mt19937_64 rng(seed);
  auto calib = probe_fields(g, calibration_trials, rng, 6.0);
  for (int a = 1; a <= 20; ++a)
    calib.push_back(ScalarField::sample(g, [a](auto x) { return 0.5 * a * std::cos(x[0]); }));
  out.K = -INFINITY;
  const ScalarField* best = nullptr;
  for (const auto& u : calib) {
    const double v = gap_of(u);
    if (v > out.K) {
      out.K = v;
      best = &u;
    }
  }
  // Push the best sample to a local maximum of the gap inside the probe band.
  out.K = std::max(out.K, gap_of(ascend_gap(p, *best, w, 400)));

  std::mt19937_64 probe_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  auto probes = probe_fields(g, probe_trials, probe_rng, 12.0);
  out.worst_gap = INFINITY;
  for (const auto& u : probes) out.worst_gap = std::min(out.worst_gap, out.K - gap_of(u));
  out.probes = probe_trials;
  out.passed = out.worst_gap >= 0.0;
  return out;
}

}  // namespace cy

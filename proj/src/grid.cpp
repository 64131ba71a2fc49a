#include "cy/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>

#include "cy/error.hpp"

namespace cy {

namespace {

// FFTW planning and plan destruction are not thread-safe; execution is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

struct PeriodicGrid::Impl {
  std::vector<int> n;
  std::vector<double> lengths;
  bool normalized = true;
  std::size_t size = 0;
  std::vector<std::size_t> strides;
  std::vector<std::vector<double>> deriv_k;
  std::vector<double> lap;
  double lap_max = 0.0;
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;

  ~Impl() {
    std::lock_guard lock(fftw_planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
  }
};

PeriodicGrid::PeriodicGrid(std::vector<int> points_per_axis, std::vector<double> lengths,
                           bool normalized) {
  if (points_per_axis.empty()) throw Error(ErrorKind::InvalidArgument, "grid needs at least one axis");
  if (lengths.size() != points_per_axis.size())
    throw Error(ErrorKind::InvalidArgument, "lengths and points_per_axis differ in rank");
  for (std::size_t a = 0; a < points_per_axis.size(); ++a) {
    const int pts = points_per_axis[a];
    if (pts < 8 || pts % 2 != 0) {
      std::ostringstream os;
      os << "axis " << a << " has " << pts << " points; need an even count >= 8";
      throw Error(ErrorKind::InvalidArgument, os.str());
    }
    if (!(lengths[a] > 0.0) || !std::isfinite(lengths[a]))
      throw Error(ErrorKind::InvalidArgument, "axis lengths must be positive and finite");
  }

  auto impl = std::make_shared<Impl>();
  impl->n = std::move(points_per_axis);
  impl->lengths = std::move(lengths);
  impl->normalized = normalized;
  const int d = static_cast<int>(impl->n.size());
  impl->size = 1;
  for (int pts : impl->n) impl->size *= static_cast<std::size_t>(pts);
  impl->strides.assign(d, 1);
  for (int a = d - 2; a >= 0; --a) impl->strides[a] = impl->strides[a + 1] * impl->n[a + 1];

  std::vector<std::vector<double>> full_k(d);
  impl->deriv_k.resize(d);
  for (int a = 0; a < d; ++a) {
    const int N = impl->n[a];
    const double scale = 2.0 * std::numbers::pi / impl->lengths[a];
    full_k[a].resize(N);
    impl->deriv_k[a].resize(N);
    for (int j = 0; j < N; ++j) {
      const int m = j <= N / 2 ? j : j - N;
      full_k[a][j] = scale * m;
      impl->deriv_k[a][j] = (j == N / 2) ? 0.0 : scale * m;
    }
  }
  impl->lap.assign(impl->size, 0.0);
  for (std::size_t f = 0; f < impl->size; ++f) {
    double s = 0.0;
    for (int a = 0; a < d; ++a) {
      const double k = full_k[a][(f / impl->strides[a]) % impl->n[a]];
      s += k * k;
    }
    impl->lap[f] = s;
  }
  impl->lap_max = *std::max_element(impl->lap.begin(), impl->lap.end());

  {
    std::lock_guard lock(fftw_planner_mutex());
    auto* in = fftw_alloc_complex(impl->size);
    auto* out = fftw_alloc_complex(impl->size);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    impl->fwd = fftw_plan_dft(d, impl->n.data(), in, out, FFTW_FORWARD, flags);
    impl->bwd = fftw_plan_dft(d, impl->n.data(), in, out, FFTW_BACKWARD, flags);
    fftw_free(in);
    fftw_free(out);
  }
  if (!impl->fwd || !impl->bwd) throw Error(ErrorKind::InvalidArgument, "FFT planning failed");
  impl_ = std::move(impl);
}

PeriodicGrid PeriodicGrid::cube(int dim, int points, double length, bool normalized) {
  if (dim < 1) throw Error(ErrorKind::InvalidArgument, "grid dimension must be positive");
  return PeriodicGrid(std::vector<int>(dim, points), std::vector<double>(dim, length), normalized);
}

int PeriodicGrid::dim() const { return static_cast<int>(impl_->n.size()); }
const std::vector<int>& PeriodicGrid::points_per_axis() const { return impl_->n; }
const std::vector<double>& PeriodicGrid::lengths() const { return impl_->lengths; }
bool PeriodicGrid::normalized() const { return impl_->normalized; }
std::size_t PeriodicGrid::size() const { return impl_->size; }

double PeriodicGrid::physical_volume() const {
  return std::accumulate(impl_->lengths.begin(), impl_->lengths.end(), 1.0, std::multiplies<>());
}

double PeriodicGrid::weight() const {
  const double m = static_cast<double>(impl_->size);
  return impl_->normalized ? 1.0 / m : physical_volume() / m;
}

double PeriodicGrid::total_volume() const { return impl_->normalized ? 1.0 : physical_volume(); }

double PeriodicGrid::spacing(int axis) const { return impl_->lengths.at(axis) / impl_->n.at(axis); }

std::vector<int> PeriodicGrid::multi_index(std::size_t flat) const {
  std::vector<int> idx(impl_->n.size());
  for (std::size_t a = 0; a < idx.size(); ++a)
    idx[a] = static_cast<int>((flat / impl_->strides[a]) % impl_->n[a]);
  return idx;
}

double PeriodicGrid::coordinate(std::size_t flat, int axis) const {
  const auto j = (flat / impl_->strides[axis]) % impl_->n[axis];
  return static_cast<double>(j) * spacing(axis);
}

std::size_t PeriodicGrid::stride(int axis) const { return impl_->strides.at(axis); }

std::size_t PeriodicGrid::forward_neighbor(std::size_t flat, int axis) const {
  const std::size_t s = impl_->strides[axis];
  const std::size_t N = impl_->n[axis];
  const std::size_t j = (flat / s) % N;
  return j + 1 == N ? flat - j * s : flat + s;
}

std::span<const double> PeriodicGrid::laplacian_symbol() const { return impl_->lap; }

std::span<const double> PeriodicGrid::derivative_wavenumbers(int axis) const {
  return impl_->deriv_k.at(axis);
}

double PeriodicGrid::largest_laplacian_eigenvalue() const { return impl_->lap_max; }

std::vector<Complex> PeriodicGrid::forward(std::span<const double> values) const {
  std::vector<Complex> in(values.begin(), values.end());
  std::vector<Complex> out(impl_->size);
  fftw_execute_dft(impl_->fwd, reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  const double inv = 1.0 / static_cast<double>(impl_->size);
  for (auto& c : out) c *= inv;
  return out;
}

std::vector<double> PeriodicGrid::inverse(std::span<const Complex> coefficients) const {
  std::vector<Complex> in(coefficients.begin(), coefficients.end());
  std::vector<Complex> out(impl_->size);
  fftw_execute_dft(impl_->bwd, reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  std::vector<double> values(impl_->size);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = out[i].real();
  return values;
}

bool PeriodicGrid::operator==(const PeriodicGrid& other) const {
  if (impl_ == other.impl_) return true;
  return impl_->n == other.impl_->n && impl_->lengths == other.impl_->lengths &&
         impl_->normalized == other.impl_->normalized;
}

void require_same_grid(const PeriodicGrid& a, const PeriodicGrid& b, const char* where) {
  if (!(a == b)) throw Error(ErrorKind::GridMismatch, std::string(where) + ": fields live on different grids");
}

// ---------------------------------------------------------------------------

ScalarField::ScalarField(PeriodicGrid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size())
    throw Error(ErrorKind::InvalidArgument, "sample count does not match grid size");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      std::ostringstream os;
      os << "non-finite sample at index " << i;
      throw Error(ErrorKind::InvalidArgument, os.str());
    }
  }
}

ScalarField ScalarField::constant(const PeriodicGrid& grid, double value) {
  return ScalarField(grid, std::vector<double>(grid.size(), value));
}

ScalarField ScalarField::sample(const PeriodicGrid& grid,
                                const std::function<double(std::span<const double>)>& fn) {
  std::vector<double> out(grid.size());
  std::vector<double> x(grid.dim());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (int a = 0; a < grid.dim(); ++a) x[a] = grid.coordinate(i, a);
    out[i] = fn(x);
  }
  return ScalarField(grid, std::move(out));
}

double ScalarField::max() const { return *std::max_element(values_.begin(), values_.end()); }
double ScalarField::min() const { return *std::min_element(values_.begin(), values_.end()); }

ScalarField& ScalarField::operator+=(const ScalarField& other) {
  require_same_grid(grid_, other.grid_, "operator+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& other) {
  require_same_grid(grid_, other.grid_, "operator-=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ScalarField& ScalarField::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
ScalarField operator*(ScalarField a, double s) { return a *= s; }
ScalarField operator*(double s, ScalarField a) { return a *= s; }
ScalarField operator+(ScalarField a, double s) { return a.map([s](double v) { return v + s; }); }
ScalarField operator-(ScalarField a, double s) { return a.map([s](double v) { return v - s; }); }
ScalarField operator-(const ScalarField& a) { return a.map([](double v) { return -v; }); }

ScalarField operator*(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid(), b.grid(), "operator*");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return ScalarField(a.grid(), std::move(out));
}

// ---------------------------------------------------------------------------

OneFormField::OneFormField(std::vector<ScalarField> components) : components_(std::move(components)) {
  if (components_.empty()) throw Error(ErrorKind::InvalidArgument, "1-form needs components");
  const auto& g = components_.front().grid();
  if (static_cast<int>(components_.size()) != g.dim())
    throw Error(ErrorKind::InvalidArgument, "1-form needs one component per axis");
  for (const auto& c : components_) require_same_grid(g, c.grid(), "OneFormField");
}

OneFormField OneFormField::zero(const PeriodicGrid& grid) {
  return OneFormField(std::vector<ScalarField>(grid.dim(), ScalarField::zero(grid)));
}

bool OneFormField::is_zero() const {
  for (const auto& c : components_)
    for (double v : c.values())
      if (v != 0.0) return false;
  return true;
}

NormKind NormKind::lp(double p) {
  if (!(p > 1.0)) throw Error(ErrorKind::InvalidArgument, "Lp norm needs p > 1");
  return NormKind(Tag::Lp, p);
}

NormKind NormKind::hk2(int k) {
  if (k < 0) throw Error(ErrorKind::InvalidArgument, "H^{k,2} norm needs k >= 0");
  return NormKind(Tag::Hk2, k);
}

NormKind NormKind::holder(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorKind::InvalidArgument, "Holder exponent must lie in (0,1]");
  return NormKind(Tag::Holder, alpha);
}

// ---------------------------------------------------------------------------

ScalarField apply_radial_multiplier(const ScalarField& f, const std::function<double(double)>& m) {
  const auto& g = f.grid();
  auto c = g.forward(f.values());
  const auto lap = g.laplacian_symbol();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= m(lap[i]);
  return ScalarField(g, g.inverse(c));
}

ScalarField laplacian(const ScalarField& f) {
  const auto& g = f.grid();
  auto c = g.forward(f.values());
  const auto lap = g.laplacian_symbol();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= lap[i];
  return ScalarField(g, g.inverse(c));
}

namespace {

ScalarField spectral_partial(const PeriodicGrid& g, const std::vector<Complex>& c, int axis) {
  const auto k = g.derivative_wavenumbers(axis);
  const std::size_t s = g.stride(axis);
  const std::size_t N = g.points_per_axis()[axis];
  std::vector<Complex> d(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) d[i] = Complex(0.0, k[(i / s) % N]) * c[i];
  return ScalarField(g, g.inverse(d));
}

}  // namespace

OneFormField gradient(const ScalarField& f) {
  const auto& g = f.grid();
  const auto c = g.forward(f.values());
  std::vector<ScalarField> parts;
  parts.reserve(g.dim());
  for (int a = 0; a < g.dim(); ++a) parts.push_back(spectral_partial(g, c, a));
  return OneFormField(std::move(parts));
}

ScalarField lee_term(const OneFormField& theta, const ScalarField& f) {
  require_same_grid(theta.grid(), f.grid(), "lee_term");
  const auto& g = f.grid();
  std::vector<double> out(g.size(), 0.0);
  if (theta.is_zero()) return ScalarField(g, std::move(out));
  const auto c = g.forward(f.values());
  for (int a = 0; a < g.dim(); ++a) {
    const auto& th = theta.component(a);
    bool zero = std::all_of(th.values().begin(), th.values().end(), [](double v) { return v == 0.0; });
    if (zero) continue;
    const auto da = spectral_partial(g, c, a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += th[i] * da[i];
  }
  return ScalarField(g, std::move(out));
}

ScalarField codifferential(const OneFormField& theta) {
  const auto& g = theta.grid();
  std::vector<double> out(g.size(), 0.0);
  for (int a = 0; a < g.dim(); ++a) {
    const auto c = g.forward(theta.component(a).values());
    const auto da = spectral_partial(g, c, a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= da[i];
  }
  return ScalarField(g, std::move(out));
}

double integrate(const ScalarField& f) {
  double s = 0.0;
  for (double v : f.values()) s += v;
  return s * f.grid().weight();
}

double mean(const ScalarField& f) { return integrate(f) / f.grid().total_volume(); }

double inner(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid(), b.grid(), "inner");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s * a.grid().weight();
}

double dirichlet_integral(const ScalarField& f) {
  const auto& g = f.grid();
  const auto c = g.forward(f.values());
  const auto lap = g.laplacian_symbol();
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s += lap[i] * std::norm(c[i]);
  return s * g.total_volume();
}

ScalarField pointwise_length(const OneFormField& form) {
  const auto& g = form.grid();
  std::vector<double> out(g.size(), 0.0);
  for (const auto& c : form.components())
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i] * c[i];
  for (double& v : out) v = std::sqrt(v);
  return ScalarField(g, std::move(out));
}

double norm(const ScalarField& f, const NormKind& kind) {
  const auto& g = f.grid();
  const auto vals = f.values();
  auto sup = [&] {
    double m = 0.0;
    for (double v : vals) m = std::max(m, std::abs(v));
    return m;
  };
  switch (kind.tag()) {
    case NormKind::Tag::Sup:
      return sup();
    case NormKind::Tag::L2: {
      double s = 0.0;
      for (double v : vals) s += v * v;
      return std::sqrt(s * g.weight());
    }
    case NormKind::Tag::Lp: {
      const double p = kind.parameter();
      double s = 0.0;
      for (double v : vals) s += std::pow(std::abs(v), p);
      return std::pow(s * g.weight(), 1.0 / p);
    }
    case NormKind::Tag::Hk2: {
      const int k = static_cast<int>(kind.parameter());
      const auto c = g.forward(vals);
      const auto lap = g.laplacian_symbol();
      double s = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) s += std::pow(1.0 + lap[i], k) * std::norm(c[i]);
      return std::sqrt(s * g.total_volume());
    }
    case NormKind::Tag::Holder: {
      const double alpha = kind.parameter();
      double q = 0.0;
      for (int a = 0; a < g.dim(); ++a) {
        const double hinv = 1.0 / std::pow(g.spacing(a), alpha);
        for (std::size_t i = 0; i < vals.size(); ++i)
          q = std::max(q, std::abs(vals[g.forward_neighbor(i, a)] - vals[i]) * hinv);
      }
      return sup() + q;
    }
  }
  return 0.0;
}


namespace {

// True when every axis frequency of flat Fourier index i is within kmax.
bool in_band(const PeriodicGrid& g, std::size_t i, int kmax) {
  const auto mi = g.multi_index(i);
  for (int a = 0; a < g.dim(); ++a) {
    const int N = g.points_per_axis()[a];
    int m = mi[a] <= N / 2 ? mi[a] : mi[a] - N;
    if (2 * std::abs(m) == N || std::abs(m) > kmax) return false;
  }
  return true;
}

}  // namespace

ScalarField band_project(const ScalarField& f, int kmax) {
  const auto& g = f.grid();
  auto c = g.forward(f.values());
  for (std::size_t i = 0; i < c.size(); ++i)
    if (!in_band(g, i, kmax)) c[i] = 0.0;
  return ScalarField(g, g.inverse(c));
}

ScalarField random_band_limited_field(const PeriodicGrid& grid, int kmax, std::mt19937_64& rng,
                                      double sup_amplitude, bool zero_mean) {
  if (kmax < 0) throw Error(ErrorKind::InvalidArgument, "kmax must be >= 0");
  std::normal_distribution<double> normal;
  std::vector<Complex> c(grid.size(), Complex(0.0, 0.0));
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!in_band(grid, i, kmax)) continue;
    const double re = normal(rng);
    const double im = normal(rng);
    if (i == 0 && zero_mean) continue;
    c[i] = Complex(re, im);
  }
  ScalarField f(grid, grid.inverse(c));
  const double s = norm(f, NormKind::sup());
  if (s == 0.0) return f;
  return (sup_amplitude / s) * f;
}

}  // namespace cy

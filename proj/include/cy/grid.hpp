#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace cy {

using Complex = std::complex<double>;

/// Uniform periodic grid on a flat torus of real dimension dim = 2n.
///
/// Samples sit at x_j = j * L / N on every axis and are stored row-major with
/// the first axis slowest. Spectral transforms are planned once per grid and
/// shared by every copy, so a grid is a cheap immutable handle.
///
/// With `normalized` set the quadrature weight is 1/size() and the torus has
/// unit total volume; otherwise the weight is the physical cell volume.
class PeriodicGrid {
 public:
  PeriodicGrid(std::vector<int> points_per_axis, std::vector<double> lengths,
               bool normalized = true);

  static PeriodicGrid cube(int dim, int points, double length = 2.0 * std::numbers::pi,
                           bool normalized = true);

  int dim() const;
  const std::vector<int>& points_per_axis() const;
  const std::vector<double>& lengths() const;
  bool normalized() const;
  std::size_t size() const;

  double weight() const;
  double total_volume() const;
  double physical_volume() const;
  double spacing(int axis) const;

  std::vector<int> multi_index(std::size_t flat) const;
  double coordinate(std::size_t flat, int axis) const;
  std::size_t stride(int axis) const;
  /// Flat index of the neighbour one step forward along `axis` (periodic wrap).
  std::size_t forward_neighbor(std::size_t flat, int axis) const;

  /// |xi|^2 for every Fourier index in FFT order (Nyquist included).
  std::span<const double> laplacian_symbol() const;
  /// Wavenumbers of one axis in FFT order. The Nyquist entry is zeroed so the
  /// spectral first derivative stays real and skew-adjoint.
  std::span<const double> derivative_wavenumbers(int axis) const;
  double largest_laplacian_eigenvalue() const;

  /// Coefficients c such that f(x) = sum_xi c_xi e^{i<xi,x>}.
  std::vector<Complex> forward(std::span<const double> values) const;
  std::vector<double> inverse(std::span<const Complex> coefficients) const;

  bool operator==(const PeriodicGrid& other) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

class ScalarField {
 public:
  /// Rejects size mismatches and non-finite samples.
  ScalarField(PeriodicGrid grid, std::vector<double> values);

  static ScalarField constant(const PeriodicGrid& grid, double value);
  static ScalarField zero(const PeriodicGrid& grid) { return constant(grid, 0.0); }
  /// Samples `fn` at every grid point; the span holds the point's coordinates.
  static ScalarField sample(const PeriodicGrid& grid,
                            const std::function<double(std::span<const double>)>& fn);

  const PeriodicGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  double max() const;
  double min() const;

  template <class Fn>
  ScalarField map(Fn&& fn) const {
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(values_[i]);
    return ScalarField(grid_, std::move(out));
  }

  ScalarField& operator+=(const ScalarField& other);
  ScalarField& operator-=(const ScalarField& other);
  ScalarField& operator*=(double s);

 private:
  PeriodicGrid grid_;
  std::vector<double> values_;
};

ScalarField operator+(ScalarField a, const ScalarField& b);
ScalarField operator-(ScalarField a, const ScalarField& b);
ScalarField operator*(const ScalarField& a, const ScalarField& b);
ScalarField operator*(double s, ScalarField a);
ScalarField operator*(ScalarField a, double s);
ScalarField operator+(ScalarField a, double s);
ScalarField operator-(ScalarField a, double s);
ScalarField operator-(const ScalarField& a);

/// A 1-form in flat coordinates, one component per axis.
class OneFormField {
 public:
  explicit OneFormField(std::vector<ScalarField> components);
  static OneFormField zero(const PeriodicGrid& grid);

  const PeriodicGrid& grid() const { return components_.front().grid(); }
  int dim() const { return static_cast<int>(components_.size()); }
  const ScalarField& component(int i) const { return components_.at(i); }
  const std::vector<ScalarField>& components() const { return components_; }
  bool is_zero() const;

 private:
  std::vector<ScalarField> components_;
};

class NormKind {
 public:
  enum class Tag { Sup, L2, Lp, Hk2, Holder };

  static NormKind sup() { return NormKind(Tag::Sup, 0.0); }
  static NormKind l2() { return NormKind(Tag::L2, 2.0); }
  static NormKind lp(double p);
  static NormKind hk2(int k);
  static NormKind holder(double alpha = 0.5);

  Tag tag() const { return tag_; }
  double parameter() const { return parameter_; }

 private:
  NormKind(Tag tag, double parameter) : tag_(tag), parameter_(parameter) {}
  Tag tag_;
  double parameter_;
};

// Geometer's Laplacian: Delta = -sum d^2/dx_i^2, nonnegative spectrum.
ScalarField laplacian(const ScalarField& f);
OneFormField gradient(const ScalarField& f);
/// g(theta, df) = sum_i theta_i d_i f for the flat metric.
ScalarField lee_term(const OneFormField& theta, const ScalarField& f);
/// delta theta = -sum_i d_i theta_i.
ScalarField codifferential(const OneFormField& theta);

double integrate(const ScalarField& f);
double mean(const ScalarField& f);
double norm(const ScalarField& f, const NormKind& kind);
/// int |grad f|^2 evaluated spectrally as <f, Delta f>.
double dirichlet_integral(const ScalarField& f);
/// Pointwise Euclidean length of a 1-form.
ScalarField pointwise_length(const OneFormField& form);

/// Applies m(|xi|^2) to every Fourier coefficient.
ScalarField apply_radial_multiplier(const ScalarField& f, const std::function<double(double)>& m);

double inner(const ScalarField& a, const ScalarField& b);

/// Keeps Fourier modes with integer frequencies |m_i| <= kmax on every axis.
ScalarField band_project(const ScalarField& f, int kmax);

/// Random trigonometric polynomial with |m_i| <= kmax, Gaussian coefficients,
/// rescaled to sup norm `sup_amplitude`.
ScalarField random_band_limited_field(const PeriodicGrid& grid, int kmax, std::mt19937_64& rng,
                                      double sup_amplitude, bool zero_mean = true);

void require_same_grid(const PeriodicGrid& a, const PeriodicGrid& b, const char* where);

}  // namespace cy

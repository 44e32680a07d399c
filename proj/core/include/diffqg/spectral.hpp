#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "diffqg/grid.hpp"
#include "diffqg/kernels.hpp"

namespace diffqg {

/// Raised when a computation meets NaN/Inf values it cannot continue from.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Collocation values of a periodic scalar on an n×n grid.
class RealField {
 public:
  explicit RealField(Grid grid);
  RealField(Grid grid, std::vector<double> values);

  /// Samples f(x, y) at the grid points.
  static RealField from_function(Grid grid, const std::function<double(double, double)>& f);

  const Grid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<double>& data() const { return values_; }

  double& at(int ix, int iy) { return values_[static_cast<std::size_t>(iy) * grid_.n() + ix]; }
  double at(int ix, int iy) const { return values_[static_cast<std::size_t>(iy) * grid_.n() + ix]; }

  double mean() const;
  double mean_square() const;
  bool all_finite() const;

 private:
  Grid grid_;
  std::vector<double> values_;
};

/// Fourier coefficients of a periodic scalar, full n×n layout, normalized so
/// that the k = 0 coefficient equals the field mean.
class SpectralField {
 public:
  explicit SpectralField(Grid grid);
  SpectralField(Grid grid, std::vector<cplx> coeffs);

  const Grid& grid() const { return grid_; }
  std::span<const cplx> coeffs() const { return coeffs_; }
  std::span<cplx> coeffs() { return coeffs_; }
  const std::vector<cplx>& data() const { return coeffs_; }

  cplx& mode(int kx, int ky) { return coeffs_[grid_.mode_index(kx, ky)]; }
  cplx mode(int kx, int ky) const { return coeffs_[grid_.mode_index(kx, ky)]; }

  /// Largest |c(-k) - conj(c(k))| over all modes.
  double hermitian_defect() const;
  bool is_hermitian(double rel_tol = 1e-12) const;
  bool all_finite() const;
  /// Σ|c_k|², equal to the spatial mean of f².
  double power() const;

  SpectralField& operator+=(const SpectralField& other);
  SpectralField& operator-=(const SpectralField& other);
  SpectralField& operator*=(double s);

 private:
  Grid grid_;
  std::vector<cplx> coeffs_;
};

SpectralField operator+(SpectralField a, const SpectralField& b);
SpectralField operator-(SpectralField a, const SpectralField& b);
SpectralField operator*(double s, SpectralField a);

/// Throws std::invalid_argument on non-finite input.
SpectralField to_spectral(const RealField& f);
/// Throws std::invalid_argument when Hermitian symmetry is broken.
RealField to_real(const SpectralField& fh);

/// Multiplies by (i k_axis)^order. Odd orders drop the Nyquist wavenumber.
SpectralField derivative(const SpectralField& fh, Axis axis, int order = 1);
SpectralField laplacian(const SpectralField& fh);
/// Solves ∇²ψ = f with the zero-mean gauge.
SpectralField inv_laplacian(const SpectralField& fh);
/// Applies the 2/3-rule mask.
SpectralField dealias(const SpectralField& fh);
/// J(ψ, ω) = ∂xψ ∂yω − ∂yψ ∂xω, pseudo-spectral with the 2/3 rule.
SpectralField jacobian(const SpectralField& psih, const SpectralField& omegah);
/// u = (−∂yψ, ∂xψ).
std::pair<RealField, RealField> velocity(const SpectralField& psih);

/// Zero-pads (or truncates) a spectrum to another grid size. Modes that are
/// not representable on the target, including its Nyquist row and column,
/// are dropped.
SpectralField resample(const SpectralField& fh, const Grid& target);

// ---------------------------------------------------------------------------
// Field algebra
//
// Solver and closure code is written once against a small algebra of
// operations. ValueAlgebra evaluates eagerly on plain buffers; the
// autodiff engine provides a recording algebra over tape variables. Both
// dispatch to the same kernels.

enum class SpectralOp { ddx, ddy, laplacian, inverse_laplacian, dealias };

class ValueAlgebra {
 public:
  using Spec = std::vector<cplx>;
  using Real = std::vector<double>;

  struct Term {
    double coeff;
    const Spec& value;
  };

  explicit ValueAlgebra(Grid grid) : grid_(std::move(grid)) {}

  const Grid& grid() const { return grid_; }

  Spec constant(Spec s) const { return s; }
  Spec diag(const Spec& x, SpectralOp op) const;
  Real to_real(const Spec& x) const;
  Spec to_spectral(const Real& x) const;
  Real mul(const Real& a, const Real& b) const;
  Real sub(const Real& a, const Real& b) const;
  Real scale(const Real& a, double s) const;
  Real relu(const Real& a) const;
  Spec lincomb(std::initializer_list<Term> terms) const;
  Spec lincomb(std::span<const double> coeffs, std::span<const Spec* const> values) const;

  /// Periodic convolution with any layer exposing shape(n), weights and bias.
  template <class Layer>
  Real conv(const Real& x, const Layer& layer) const {
    Real out(static_cast<std::size_t>(layer.out_channels) * grid_.size());
    kernels::conv2d_forward(layer.shape(grid_.n()), x, layer.weights, layer.bias, out);
    return out;
  }

 private:
  Grid grid_;
};

template <class Alg>
typename Alg::Spec jacobian_of(Alg& alg, const typename Alg::Spec& psi, const typename Alg::Spec& omega) {
  auto psi_x = alg.to_real(alg.diag(psi, SpectralOp::ddx));
  auto psi_y = alg.to_real(alg.diag(psi, SpectralOp::ddy));
  auto omega_x = alg.to_real(alg.diag(omega, SpectralOp::ddx));
  auto omega_y = alg.to_real(alg.diag(omega, SpectralOp::ddy));
  auto product = alg.sub(alg.mul(psi_x, omega_y), alg.mul(psi_y, omega_x));
  return alg.diag(alg.to_spectral(product), SpectralOp::dealias);
}

}  // namespace diffqg

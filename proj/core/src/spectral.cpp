#include "diffqg/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diffqg/kernels.hpp"

namespace diffqg {

namespace {

constexpr double kHermitianTolerance = 1e-10;

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(what) + ": grid mismatch (" + std::to_string(a.n()) + " vs " +
                                std::to_string(b.n()) + ")");
  }
}

double inverse_count(const Grid& g) { return 1.0 / static_cast<double>(g.size()); }

}  // namespace

// --- RealField ---------------------------------------------------------------

RealField::RealField(Grid grid) : grid_(std::move(grid)), values_(grid_.size(), 0.0) {}

RealField::RealField(Grid grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    throw std::invalid_argument("RealField: expected " + std::to_string(grid_.size()) + " values, got " +
                                std::to_string(values_.size()));
  }
}

RealField RealField::from_function(Grid grid, const std::function<double(double, double)>& f) {
  RealField out(grid);
  const int n = grid.n();
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) out.at(ix, iy) = f(grid.coordinate(ix), grid.coordinate(iy));
  }
  return out;
}

double RealField::mean() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s / static_cast<double>(values_.size());
}

double RealField::mean_square() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return s / static_cast<double>(values_.size());
}

bool RealField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

// --- SpectralField -------------------------------------------------------------

SpectralField::SpectralField(Grid grid) : grid_(std::move(grid)), coeffs_(grid_.size(), cplx(0.0, 0.0)) {}

SpectralField::SpectralField(Grid grid, std::vector<cplx> coeffs)
    : grid_(std::move(grid)), coeffs_(std::move(coeffs)) {
  if (coeffs_.size() != grid_.size()) {
    throw std::invalid_argument("SpectralField: expected " + std::to_string(grid_.size()) + " coefficients, got " +
                                std::to_string(coeffs_.size()));
  }
}

double SpectralField::hermitian_defect() const {
  const int n = grid_.n();
  double worst = 0.0;
  for (int iy = 0; iy < n; ++iy) {
    const cplx* row = coeffs_.data() + static_cast<std::size_t>(iy) * n;
    const cplx* mirror = coeffs_.data() + static_cast<std::size_t>(iy == 0 ? 0 : n - iy) * n;
    for (int ix = 0; ix < n; ++ix) {
      const cplx p = mirror[ix == 0 ? 0 : n - ix];
      const double dr = row[ix].real() - p.real();
      const double di = row[ix].imag() + p.imag();
      worst = std::max(worst, dr * dr + di * di);
    }
  }
  return std::sqrt(worst);
}

bool SpectralField::is_hermitian(double rel_tol) const {
  double scale = 0.0;
  for (const cplx& c : coeffs_) scale = std::max(scale, std::norm(c));
  return hermitian_defect() <= rel_tol * std::sqrt(scale);
}

bool SpectralField::all_finite() const {
  return std::all_of(coeffs_.begin(), coeffs_.end(),
                     [](const cplx& c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); });
}

double SpectralField::power() const {
  double s = 0.0;
  for (const cplx& c : coeffs_) s += std::norm(c);
  return s;
}

SpectralField& SpectralField::operator+=(const SpectralField& other) {
  require_same_grid(grid_, other.grid_, "operator+=");
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += other.coeffs_[i];
  return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& other) {
  require_same_grid(grid_, other.grid_, "operator-=");
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= other.coeffs_[i];
  return *this;
}

SpectralField& SpectralField::operator*=(double s) {
  for (cplx& c : coeffs_) c *= s;
  return *this;
}

SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
SpectralField operator*(double s, SpectralField a) { return a *= s; }

// --- transforms and operators ------------------------------------------------------

SpectralField to_spectral(const RealField& f) {
  if (!f.all_finite()) throw std::invalid_argument("to_spectral: input contains non-finite values");
  SpectralField out(f.grid());
  kernels::forward_dft(f.grid().n(), f.values(), out.coeffs(), inverse_count(f.grid()));
  return out;
}

RealField to_real(const SpectralField& fh) {
  if (!fh.is_hermitian(kHermitianTolerance)) {
    throw std::invalid_argument("to_real: coefficients are not Hermitian-symmetric (defect " +
                                std::to_string(fh.hermitian_defect()) + ")");
  }
  RealField out(fh.grid());
  kernels::inverse_dft_real(fh.grid().n(), fh.coeffs(), out.values(), 1.0);
  return out;
}

SpectralField derivative(const SpectralField& fh, Axis axis, int order) {
  if (order < 1) throw std::invalid_argument("derivative: order must be positive");
  const Grid& g = fh.grid();
  if (order == 1) {
    SpectralField out(g);
    kernels::diag_mul(axis == Axis::x ? g.ddx() : g.ddy(), fh.coeffs(), out.coeffs());
    return out;
  }
  const auto k = axis == Axis::x ? g.kx() : g.ky();
  const int nyquist = -g.n() / 2;
  std::vector<cplx> factor(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double kk = (order % 2 == 1 && k[i] == nyquist) ? 0.0 : static_cast<double>(k[i]);
    double mag = 1.0;
    for (int p = 0; p < order; ++p) mag *= kk;
    switch (order % 4) {
      case 0: factor[i] = cplx(mag, 0.0); break;
      case 1: factor[i] = cplx(0.0, mag); break;
      case 2: factor[i] = cplx(-mag, 0.0); break;
      default: factor[i] = cplx(0.0, -mag); break;
    }
  }
  SpectralField out(g);
  kernels::diag_mul(factor, fh.coeffs(), out.coeffs());
  return out;
}

SpectralField laplacian(const SpectralField& fh) {
  SpectralField out(fh.grid());
  kernels::diag_mul(fh.grid().laplacian(), fh.coeffs(), out.coeffs());
  return out;
}

SpectralField inv_laplacian(const SpectralField& fh) {
  SpectralField out(fh.grid());
  kernels::diag_mul(fh.grid().inverse_laplacian(), fh.coeffs(), out.coeffs());
  return out;
}

SpectralField dealias(const SpectralField& fh) {
  SpectralField out(fh.grid());
  kernels::diag_mul(fh.grid().dealias_mask(), fh.coeffs(), out.coeffs());
  return out;
}

SpectralField jacobian(const SpectralField& psih, const SpectralField& omegah) {
  require_same_grid(psih.grid(), omegah.grid(), "jacobian");
  ValueAlgebra alg(psih.grid());
  return SpectralField(psih.grid(), jacobian_of(alg, psih.data(), omegah.data()));
}

std::pair<RealField, RealField> velocity(const SpectralField& psih) {
  SpectralField u = derivative(psih, Axis::y);
  u *= -1.0;
  return {to_real(u), to_real(derivative(psih, Axis::x))};
}

SpectralField resample(const SpectralField& fh, const Grid& target) {
  const Grid& src = fh.grid();
  SpectralField out(target);
  const int lim = std::min(src.n(), target.n()) / 2;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const int kx = src.kx()[i];
    const int ky = src.ky()[i];
    if (std::abs(kx) >= lim || std::abs(ky) >= lim) continue;
    out.coeffs()[target.mode_index(kx, ky)] = fh.coeffs()[i];
  }
  return out;
}

// --- ValueAlgebra --------------------------------------------------------------

ValueAlgebra::Spec ValueAlgebra::diag(const Spec& x, SpectralOp op) const {
  Spec out(x.size());
  switch (op) {
    case SpectralOp::ddx: kernels::diag_mul(grid_.ddx(), x, out); break;
    case SpectralOp::ddy: kernels::diag_mul(grid_.ddy(), x, out); break;
    case SpectralOp::laplacian: kernels::diag_mul(grid_.laplacian(), x, out); break;
    case SpectralOp::inverse_laplacian: kernels::diag_mul(grid_.inverse_laplacian(), x, out); break;
    case SpectralOp::dealias: kernels::diag_mul(grid_.dealias_mask(), x, out); break;
  }
  return out;
}

ValueAlgebra::Real ValueAlgebra::to_real(const Spec& x) const {
  Real out(x.size());
  kernels::inverse_dft_real(grid_.n(), x, out, 1.0);
  return out;
}

ValueAlgebra::Spec ValueAlgebra::to_spectral(const Real& x) const {
  Spec out(x.size());
  kernels::forward_dft(grid_.n(), x, out, inverse_count(grid_));
  return out;
}

ValueAlgebra::Real ValueAlgebra::mul(const Real& a, const Real& b) const {
  Real out(a.size());
  kernels::mul(a, b, out);
  return out;
}

ValueAlgebra::Real ValueAlgebra::sub(const Real& a, const Real& b) const {
  Real out(a.size());
  kernels::sub(a, b, out);
  return out;
}

ValueAlgebra::Real ValueAlgebra::scale(const Real& a, double s) const {
  Real out(a.size());
  kernels::scale(a, s, out);
  return out;
}

ValueAlgebra::Real ValueAlgebra::relu(const Real& a) const {
  Real out(a.size());
  kernels::relu(a, out);
  return out;
}

ValueAlgebra::Spec ValueAlgebra::lincomb(std::initializer_list<Term> terms) const {
  std::vector<double> coeffs;
  std::vector<const cplx*> inputs;
  coeffs.reserve(terms.size());
  inputs.reserve(terms.size());
  for (const Term& t : terms) {
    coeffs.push_back(t.coeff);
    inputs.push_back(t.value.data());
  }
  Spec out(terms.begin()->value.size());
  kernels::lincomb(coeffs, inputs, out);
  return out;
}

ValueAlgebra::Spec ValueAlgebra::lincomb(std::span<const double> coeffs, std::span<const Spec* const> values) const {
  std::vector<const cplx*> inputs;
  inputs.reserve(values.size());
  for (const Spec* v : values) inputs.push_back(v->data());
  Spec out(values.front()->size());
  kernels::lincomb(coeffs, inputs, out);
  return out;
}

}  // namespace diffqg

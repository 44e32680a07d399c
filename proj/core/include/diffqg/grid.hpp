#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace diffqg {

using cplx = std::complex<double>;

enum class Axis { x, y };

/// Doubly periodic square grid on [0, 2π)².
///
/// Storage is row-major with x varying fastest: index = iy * n + ix. The same
/// layout is used for spectral coefficients, where mode (mx, my) carries the
/// wavenumbers kx = wrap(mx), ky = wrap(my) in -n/2 .. n/2-1.
///
/// A Grid is a cheap handle to immutable, shared wavenumber tables.
class Grid {
 public:
  explicit Grid(int n);

  int n() const { return n_; }
  std::size_t size() const { return static_cast<std::size_t>(n_) * n_; }
  double length() const;
  double spacing() const { return length() / n_; }
  double coordinate(int i) const { return spacing() * i; }

  std::span<const int> kx() const { return tables_->kx; }
  std::span<const int> ky() const { return tables_->ky; }
  /// |k|² per mode.
  std::span<const double> k2() const { return tables_->k2; }
  /// 1 for modes kept by the 2/3 rule, 0 for max(|kx|,|ky|) > n/3.
  std::span<const double> dealias_mask() const { return tables_->dealias; }
  /// i·kx and i·ky with the Nyquist wavenumber mapped to zero.
  std::span<const cplx> ddx() const { return tables_->ddx; }
  std::span<const cplx> ddy() const { return tables_->ddy; }
  /// -|k|².
  std::span<const double> laplacian() const { return tables_->lap; }
  /// -1/|k|², zero at k = 0.
  std::span<const double> inverse_laplacian() const { return tables_->inv_lap; }

  /// Flat index of the mode with wavenumbers (kx, ky); both must lie in -n/2..n/2-1.
  std::size_t mode_index(int kx, int ky) const;
  /// Flat index of the mode at -k (mod n).
  std::size_t conjugate_index(std::size_t idx) const;

  friend bool operator==(const Grid& a, const Grid& b) { return a.n_ == b.n_; }

 private:
  struct Tables {
    std::vector<int> kx, ky;
    std::vector<double> k2, dealias, lap, inv_lap;
    std::vector<cplx> ddx, ddy;
  };

  int n_;
  std::shared_ptr<const Tables> tables_;
};

/// Maps an FFT index 0..n-1 to its signed wavenumber.
constexpr int wrap_wavenumber(int m, int n) { return m < n / 2 ? m : m - n; }

}  // namespace diffqg

#include "diffqg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace diffqg {

Grid::Grid(int n) : n_(n) {
  if (n < 8 || n % 2 != 0) {
    throw std::invalid_argument("grid size must be even and >= 8, got " + std::to_string(n));
  }

  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const Tables>> cache;

  std::lock_guard lock(mutex);
  if (auto it = cache.find(n); it != cache.end()) {
    tables_ = it->second;
    return;
  }

  auto t = std::make_shared<Tables>();
  const std::size_t count = static_cast<std::size_t>(n) * n;
  t->kx.resize(count);
  t->ky.resize(count);
  t->k2.resize(count);
  t->dealias.resize(count);
  t->lap.resize(count);
  t->inv_lap.resize(count);
  t->ddx.resize(count);
  t->ddy.resize(count);

  const int nyquist = -n / 2;
  for (int my = 0; my < n; ++my) {
    for (int mx = 0; mx < n; ++mx) {
      const std::size_t i = static_cast<std::size_t>(my) * n + mx;
      const int kx = wrap_wavenumber(mx, n);
      const int ky = wrap_wavenumber(my, n);
      const double k2 = static_cast<double>(kx) * kx + static_cast<double>(ky) * ky;
      t->kx[i] = kx;
      t->ky[i] = ky;
      t->k2[i] = k2;
      t->dealias[i] = 3 * std::max(std::abs(kx), std::abs(ky)) > n ? 0.0 : 1.0;
      t->lap[i] = -k2;
      t->inv_lap[i] = k2 > 0.0 ? -1.0 / k2 : 0.0;
      t->ddx[i] = cplx(0.0, kx == nyquist ? 0.0 : kx);
      t->ddy[i] = cplx(0.0, ky == nyquist ? 0.0 : ky);
    }
  }
  tables_ = t;
  cache.emplace(n, t);
}

double Grid::length() const { return 2.0 * std::numbers::pi; }

std::size_t Grid::mode_index(int kx, int ky) const {
  if (kx < -n_ / 2 || kx >= n_ / 2 || ky < -n_ / 2 || ky >= n_ / 2) {
    throw std::out_of_range("wavenumber (" + std::to_string(kx) + ", " + std::to_string(ky) +
                            ") not representable on a " + std::to_string(n_) + " grid");
  }
  const int mx = kx < 0 ? kx + n_ : kx;
  const int my = ky < 0 ? ky + n_ : ky;
  return static_cast<std::size_t>(my) * n_ + mx;
}

std::size_t Grid::conjugate_index(std::size_t idx) const {
  const int mx = static_cast<int>(idx % n_);
  const int my = static_cast<int>(idx / n_);
  const int cx = (n_ - mx) % n_;
  const int cy = (n_ - my) % n_;
  return static_cast<std::size_t>(cy) * n_ + cx;
}

}  // namespace diffqg

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "diffqg/closures.hpp"
#include "diffqg/coarse.hpp"
#include "diffqg/qg.hpp"
#include "diffqg/spectral.hpp"

namespace fixtures {

using namespace diffqg;

/// Smooth random real field built from modes with |k| <= k_max.
inline RealField random_field(const Grid& g, std::uint64_t seed, int k_max = 4, double amplitude = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(g.size(), 0.0);
  for (int ky = -k_max; ky <= k_max; ++ky) {
    for (int kx = 0; kx <= k_max; ++kx) {
      if (kx * kx + ky * ky > k_max * k_max || (kx == 0 && ky <= 0)) continue;
      const double a = amplitude * normal(rng);
      const double b = amplitude * normal(rng);
      for (int iy = 0; iy < g.n(); ++iy) {
        for (int ix = 0; ix < g.n(); ++ix) {
          const double ph = kx * g.coordinate(ix) + ky * g.coordinate(iy);
          v[static_cast<std::size_t>(iy) * g.n() + ix] += a * std::cos(ph) + b * std::sin(ph);
        }
      }
    }
  }
  return RealField(g, std::move(v));
}

/// Uncorrelated values at every grid point (not band limited).
inline RealField noise_field(const Grid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(g.size());
  for (double& x : v) x = normal(rng);
  return RealField(g, std::move(v));
}

inline SpectralField random_state(const Grid& g, std::uint64_t seed, int k_max = 4, double amplitude = 1.0) {
  return dealias(to_spectral(random_field(g, seed, k_max, amplitude)));
}

/// Physics on a small LES grid with a large enough step to move the state.
inline Dynamics small_les_dynamics(double dt = 1e-2) {
  Dynamics d;
  d.params.nu = 5e-3;
  d.params.mu = 2e-2;
  d.params.dt = dt;
  return d;
}

/// A window of `length` samples: an LES reference run with perturbed
/// initial data so the closure has something to fit.
inline std::vector<Sample> synthetic_window(const Grid& g, const Dynamics& dyn, int length, std::uint64_t seed) {
  QGState s{random_state(g, seed, 5, 1.0), 0.3};
  const SpectralField bump = random_state(g, seed + 17, 6, 0.05);
  std::vector<Sample> out;
  for (int i = 0; i < length; ++i) {
    out.push_back({s.omega_hat + bump, SpectralField(g), s.t});
    s = step_rk4(s, dyn);
  }
  // The first sample is the initial condition, unperturbed.
  out.front().omega_bar = out.front().omega_bar - bump;
  return out;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(std::span<const cplx> a, std::span<const cplx> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// ‖a − b‖₂ / ‖b‖₂ over the grid points.
inline double rel_err(const RealField& a, const RealField& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    num += d * d;
    den += b.values()[i] * b.values()[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

inline CnnParams small_cnn(std::uint64_t seed, int depth = 2, int width = 4, int kernel = 5) {
  CnnArchitecture a;
  a.depth = depth;
  a.width = width;
  a.kernel = kernel;
  return cnn_init(a, seed);
}

inline std::vector<double> flatten(const CnnParams& p) {
  std::vector<double> out;
  for (const auto* t : p.tensors()) out.insert(out.end(), t->begin(), t->end());
  return out;
}

inline void unflatten(CnnParams& p, std::span<const double> theta) {
  std::size_t k = 0;
  for (auto* t : p.tensors()) {
    for (double& x : *t) x = theta[k++];
  }
}

}  // namespace fixtures

#include "diffqg/diagnostics.hpp"

#include <cmath>
#include <stdexcept>

#include "diffqg/qg.hpp"

namespace diffqg {

const char* to_string(SpectrumKind kind) {
  switch (kind) {
    case SpectrumKind::enstrophy_spectrum: return "enstrophy_spectrum";
    case SpectrumKind::enstrophy_flux: return "enstrophy_flux";
    case SpectrumKind::enstrophy_transfer: return "enstrophy_transfer";
    case SpectrumKind::energy_spectrum: return "energy_spectrum";
  }
  return "unknown";
}

const char* to_string(StabilityState s) { return s == StabilityState::ok ? "ok" : "diverged"; }

const char* to_string(DivergenceCause c) {
  switch (c) {
    case DivergenceCause::none: return "none";
    case DivergenceCause::non_finite: return "non_finite";
    case DivergenceCause::norm_blowup: return "norm_blowup";
  }
  return "unknown";
}

SpectrumSeries SpectrumSeries::truncated(int k_max) const {
  if (k_max < 0 || k_max > this->k_max()) throw std::invalid_argument("truncated: k_max out of range");
  return {kind, std::vector<double>(values.begin(), values.begin() + k_max + 1)};
}

int shell_index(int kx, int ky, int n) {
  const double k = std::sqrt(static_cast<double>(kx) * kx + static_cast<double>(ky) * ky);
  const int bin = static_cast<int>(std::floor(k + 0.5));
  return std::min(bin, n / 2);
}

double total_energy(const SpectralField& omega_hat) {
  const auto k2 = omega_hat.grid().k2();
  const auto c = omega_hat.coeffs();
  double e = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (k2[i] > 0.0) e += std::norm(c[i]) / k2[i];
  }
  return 0.5 * e;
}

double total_enstrophy(const SpectralField& omega_hat) { return 0.5 * omega_hat.power(); }

namespace {

SpectrumSeries empty_series(const Grid& g, SpectrumKind kind) {
  return {kind, std::vector<double>(static_cast<std::size_t>(g.n() / 2) + 1, 0.0)};
}

}  // namespace

SpectrumSeries enstrophy_spectrum(const SpectralField& omega_hat) {
  const Grid& g = omega_hat.grid();
  SpectrumSeries s = empty_series(g, SpectrumKind::enstrophy_spectrum);
  const auto c = omega_hat.coeffs();
  for (std::size_t i = 0; i < c.size(); ++i) {
    s.values[shell_index(g.kx()[i], g.ky()[i], g.n())] += 0.5 * std::norm(c[i]);
  }
  return s;
}

SpectrumSeries energy_spectrum(const SpectralField& omega_hat) {
  const Grid& g = omega_hat.grid();
  SpectrumSeries s = empty_series(g, SpectrumKind::energy_spectrum);
  const auto c = omega_hat.coeffs();
  const auto k2 = g.k2();
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (k2[i] > 0.0) s.values[shell_index(g.kx()[i], g.ky()[i], g.n())] += 0.5 * std::norm(c[i]) / k2[i];
  }
  return s;
}

SpectrumSeries enstrophy_transfer(const SpectralField& omega_hat, const SpectralField& psi_hat) {
  const Grid& g = omega_hat.grid();
  const SpectralField jac = jacobian(psi_hat, omega_hat);
  SpectrumSeries s = empty_series(g, SpectrumKind::enstrophy_transfer);
  const auto w = omega_hat.coeffs();
  const auto j = jac.coeffs();
  // J is a divergence, so its mean vanishes; skipping k = 0 keeps that bin
  // free of roundoff.
  for (std::size_t i = 1; i < w.size(); ++i) {
    // Re[conj(w)·(−j)]
    const double t = -(w[i].real() * j[i].real() + w[i].imag() * j[i].imag());
    s.values[shell_index(g.kx()[i], g.ky()[i], g.n())] += t;
  }
  return s;
}

SpectrumSeries enstrophy_flux(const SpectralField& omega_hat, const SpectralField& psi_hat) {
  SpectrumSeries t = enstrophy_transfer(omega_hat, psi_hat);
  SpectrumSeries flux{SpectrumKind::enstrophy_flux, std::vector<double>(t.values.size(), 0.0)};
  double acc = 0.0;
  for (std::size_t k = 0; k < t.values.size(); ++k) {
    acc += t.values[k];
    flux.values[k] = -acc;
  }
  return flux;
}

StabilityStatus stability_check(const QGState& state, double reference_norm) {
  StabilityStatus s;
  if (!state.omega_hat.all_finite() || !std::isfinite(state.t)) {
    s.state = StabilityState::diverged;
    s.cause = DivergenceCause::non_finite;
    s.t_event = state.t;
    return s;
  }
  const double z = total_enstrophy(state.omega_hat);
  if (!std::isfinite(z)) {
    s.state = StabilityState::diverged;
    s.cause = DivergenceCause::non_finite;
    s.t_event = state.t;
  } else if (z > kBlowupFactor * reference_norm) {
    s.state = StabilityState::diverged;
    s.cause = DivergenceCause::norm_blowup;
    s.t_event = state.t;
  }
  return s;
}

const StabilityStatus& StabilityMonitor::observe(const QGState& state) {
  if (status_.ok()) status_ = stability_check(state, reference_);
  return status_;
}

void TimeAverage::add(const SpectrumSeries& s) {
  if (count_ == 0) {
    sum_ = s;
  } else {
    if (s.values.size() != sum_.values.size()) throw std::invalid_argument("time_average: bin count mismatch");
    if (s.kind != sum_.kind) throw std::invalid_argument("time_average: spectrum kind mismatch");
    for (std::size_t k = 0; k < s.values.size(); ++k) sum_.values[k] += s.values[k];
  }
  ++count_;
}

SpectrumSeries TimeAverage::mean() const {
  SpectrumSeries out = sum_;
  if (count_ > 0) {
    for (double& v : out.values) v /= count_;
  }
  return out;
}

TimeAverage time_average(TimeAverage acc, const SpectrumSeries& s) {
  acc.add(s);
  return acc;
}

}  // namespace diffqg

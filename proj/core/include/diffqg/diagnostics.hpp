#pragma once

#include <limits>
#include <string>
#include <vector>

#include "diffqg/spectral.hpp"

namespace diffqg {

struct QGState;

enum class SpectrumKind { enstrophy_spectrum, enstrophy_flux, enstrophy_transfer, energy_spectrum };

const char* to_string(SpectrumKind kind);

/// One value per integer shell k = 0 .. n/2.
struct SpectrumSeries {
  SpectrumKind kind = SpectrumKind::enstrophy_spectrum;
  std::vector<double> values;

  int k_max() const { return static_cast<int>(values.size()) - 1; }
  /// Keeps bins 0..k_max.
  SpectrumSeries truncated(int k_max) const;
};

/// Nearest-integer shell of |k|, clamped to n/2 so every mode lands in a bin.
int shell_index(int kx, int ky, int n);

/// ½⟨|∇ψ|²⟩ = ½ Σ_{k≠0} |ω̂_k|²/|k|².
double total_energy(const SpectralField& omega_hat);
/// ½⟨ω²⟩ = ½ Σ |ω̂_k|².
double total_enstrophy(const SpectralField& omega_hat);

SpectrumSeries enstrophy_spectrum(const SpectralField& omega_hat);
SpectrumSeries energy_spectrum(const SpectralField& omega_hat);
/// T_Z(k) = Σ_shell Re[conj(ω̂)·(−Ĵ(ψ, ω))].
SpectrumSeries enstrophy_transfer(const SpectralField& omega_hat, const SpectralField& psi_hat);
/// Π_Z(k) = −Σ_{k' ≤ k} T_Z(k'); positive means enstrophy moving past k toward
/// smaller scales.
SpectrumSeries enstrophy_flux(const SpectralField& omega_hat, const SpectralField& psi_hat);

enum class StabilityState { ok, diverged };
enum class DivergenceCause { none, non_finite, norm_blowup };

const char* to_string(StabilityState s);
const char* to_string(DivergenceCause c);

struct StabilityStatus {
  StabilityState state = StabilityState::ok;
  DivergenceCause cause = DivergenceCause::none;
  double t_event = std::numeric_limits<double>::quiet_NaN();

  bool ok() const { return state == StabilityState::ok; }
};

inline constexpr double kBlowupFactor = 1e6;

/// Diverged on any non-finite coefficient or enstrophy above
/// kBlowupFactor × reference_norm.
StabilityStatus stability_check(const QGState& state, double reference_norm);

/// Latches the first divergence of a run.
class StabilityMonitor {
 public:
  explicit StabilityMonitor(double reference_norm) : reference_(reference_norm) {}

  const StabilityStatus& observe(const QGState& state);
  const StabilityStatus& status() const { return status_; }

 private:
  double reference_;
  StabilityStatus status_;
};

/// Running mean of spectra.
class TimeAverage {
 public:
  /// Throws std::invalid_argument on a bin-count or kind mismatch.
  void add(const SpectrumSeries& s);
  int count() const { return count_; }
  SpectrumSeries mean() const;

 private:
  SpectrumSeries sum_;
  int count_ = 0;
};

TimeAverage time_average(TimeAverage acc, const SpectrumSeries& s);

}  // namespace diffqg

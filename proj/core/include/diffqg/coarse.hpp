#pragma once

#include <string>
#include <vector>

#include "diffqg/qg.hpp"
#include "diffqg/spectral.hpp"

namespace diffqg {

/// DNS → LES coarse-graining: ratio δ, grid sizes and the cutoff k_c = n_hi/(2δ).
struct FilterSpec {
  int delta = 16;
  int n_hi = 2048;
  int n_lo = 128;
  double k_c = 64.0;

  /// Throws std::invalid_argument unless δ ≥ 2 divides n_hi.
  static FilterSpec make(int n_hi, int delta);
};

/// Zeroes every mode with |k| > k_c.
SpectralField cutoff_filter(const SpectralField& fh, double k_c);

/// Filters at k_c and truncates to the LES grid. Retained coefficients are
/// copied unchanged.
SpectralField project(const SpectralField& fh_hi, const FilterSpec& spec);

/// R = J(ψ̄, ω̄) − filter(J(ψ, ω)) on the LES grid.
SpectralField sgs_residual(const SpectralField& omega_hat_hi, const FilterSpec& spec);

struct Sample {
  SpectralField omega_bar;
  SpectralField residual;
  double t = 0.0;
};

/// Time-ordered samples of one trajectory at LES cadence.
struct SampleSet {
  std::vector<Sample> samples;
  std::string source_id;
  double dt_sample = 0.0;

  std::size_t size() const { return samples.size(); }
};

/// One sample per stored state. The trajectory must be stored every δ steps.
SampleSet extract_samples(const Trajectory& traj, const FilterSpec& spec, std::string source_id);

}  // namespace diffqg

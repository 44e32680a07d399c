#include "diffqg/coarse.hpp"

#include <stdexcept>

namespace diffqg {

FilterSpec FilterSpec::make(int n_hi, int delta) {
  if (delta < 2) throw std::invalid_argument("coarse-graining ratio must be >= 2");
  if (n_hi % delta != 0) {
    throw std::invalid_argument("grid size " + std::to_string(n_hi) + " is not divisible by delta " +
                                std::to_string(delta));
  }
  FilterSpec s;
  s.delta = delta;
  s.n_hi = n_hi;
  s.n_lo = n_hi / delta;
  s.k_c = 0.5 * s.n_lo;
  return s;
}

SpectralField cutoff_filter(const SpectralField& fh, double k_c) {
  if (!(k_c > 0.0)) throw std::invalid_argument("cutoff wavenumber must be > 0");
  SpectralField out = fh;
  const auto k2 = fh.grid().k2();
  const double limit = k_c * k_c;
  auto c = out.coeffs();
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (k2[i] > limit) c[i] = cplx(0.0, 0.0);
  }
  return out;
}

SpectralField project(const SpectralField& fh_hi, const FilterSpec& spec) {
  if (fh_hi.grid().n() != spec.n_hi) {
    throw std::invalid_argument("project: field is on a " + std::to_string(fh_hi.grid().n()) +
                                " grid, filter expects " + std::to_string(spec.n_hi));
  }
  return resample(cutoff_filter(fh_hi, spec.k_c), Grid(spec.n_lo));
}

SpectralField sgs_residual(const SpectralField& omega_hat_hi, const FilterSpec& spec) {
  const SpectralField filtered_advection = project(jacobian(inv_laplacian(omega_hat_hi), omega_hat_hi), spec);
  const SpectralField omega_bar = project(omega_hat_hi, spec);
  return jacobian(inv_laplacian(omega_bar), omega_bar) - filtered_advection;
}

SampleSet extract_samples(const Trajectory& traj, const FilterSpec& spec, std::string source_id) {
  if (traj.cadence != spec.delta) {
    throw std::invalid_argument("extract_samples: trajectory cadence " + std::to_string(traj.cadence) +
                                " does not match delta " + std::to_string(spec.delta));
  }
  SampleSet set;
  set.source_id = std::move(source_id);
  set.dt_sample = traj.dt * spec.delta;
  set.samples.reserve(traj.states.size());
  for (const QGState& s : traj.states) {
    set.samples.push_back({project(s.omega_hat, spec), sgs_residual(s.omega_hat, spec), s.t});
  }
  return set;
}

}  // namespace diffqg
